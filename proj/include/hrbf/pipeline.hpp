#pragma once

/// \file pipeline.hpp
/// End-to-end drivers: reconstruction, coefficient-error verification against
/// the exact solver, and the noise benchmark.

#include "hrbf/bench_noise.hpp"
#include "hrbf/center_select.hpp"
#include "hrbf/hrbf_exact.hpp"
#include "hrbf/hrbf_quasi.hpp"
#include "hrbf/isosurface_dc.hpp"
#include "hrbf/mesh_topology.hpp"
#include "hrbf/pointcloud_io.hpp"
#include "hrbf/spatial_index.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace hrbf {

/// An error tagged with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Ordered key=value report.
class Diagnostics {
public:
    void set(const std::string& key, const std::string& value) {
        for (auto& kv : entries_)
            if (kv.first == key) {
                kv.second = value;
                return;
            }
        entries_.emplace_back(key, value);
    }
    void set(const std::string& key, double value) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", value);
        set(key, std::string(buf));
    }
    void set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }
    void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

    std::optional<std::string> get(const std::string& key) const {
        for (const auto& kv : entries_)
            if (kv.first == key) return kv.second;
        return std::nullopt;
    }
    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string text() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
        return out;
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

struct ReconConfig {
    std::filesystem::path input;
    std::filesystem::path output;
    double s = 1.0;
    double voxel_width = 0.01;
    bool center_select = false;
    bool noisy_mode = false;
    std::optional<double> eta_override;
    std::size_t min_fragment_faces = 10;
    /// Components smaller than this fraction of the largest one are dropped too.
    double min_fragment_fraction = 0.0;
    unsigned threads = 1;
    std::uint64_t seed = 0;
    CoverParams cover;
};

struct ReconResult {
    QuadMesh mesh;             // input coordinates
    QuadMesh normalized_mesh;  // [-1,1]^3 coordinates
    Similarity to_normalized;
    HermitePointSet centers;   // normalized coordinates
    TuningParams tuning;
    Diagnostics diagnostics;
};

namespace pipeline_detail {

class StageClock {
public:
    explicit StageClock(Diagnostics& d) : diag_(d) {}

    template <class Fn>
    auto run(const std::string& stage, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        auto finish = [&] {
            const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
            diag_.set("time_" + stage + "_s", dt.count());
        };
        try {
            if constexpr (std::is_void_v<decltype(fn())>) {
                fn();
                finish();
            } else {
                auto r = fn();
                finish();
                return r;
            }
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(stage, e.what());
        }
    }

private:
    Diagnostics& diag_;
};

}  // namespace pipeline_detail

inline void validate(const ReconConfig& cfg) {
    if (!(cfg.s >= 1.0)) throw StageError("config", "s must be >= 1");
    if (!(cfg.voxel_width > 0.0)) throw StageError("config", "voxel width must be positive");
    if (!(cfg.min_fragment_fraction >= 0.0 && cfg.min_fragment_fraction <= 1.0))
        throw StageError("config", "fragment fraction must lie in [0, 1]");
}

/// Reconstructs a mesh from oriented samples held in memory.
inline ReconResult reconstruct(const HermitePointSet& input, const ReconConfig& cfg) {
    validate(cfg);
    ReconResult res;
    auto& diag = res.diagnostics;
    pipeline_detail::StageClock clock(diag);
    diag.set("input_points", input.size());

    HermitePointSet normalized = clock.run("normalize", [&] {
        auto [ps, tf] = normalize_to_unit_box(input);
        res.to_normalized = tf;
        return ps;
    });
    diag.set("normalize_scale", res.to_normalized.scale);

    res.centers = clock.run("select", [&] {
        if (!cfg.center_select) return normalized;
        const PointOctree idx(normalized.points);
        CoverParams cp = cfg.cover;
        cp.threads = cfg.threads;
        const auto cover = select_centers(normalized, idx, cp, cfg.seed);
        diag.set("cover_L_bar", cover.L_bar);
        diag.set("cover_min_doc", *std::min_element(cover.doc.begin(), cover.doc.end()));
        return cover.as_point_set();
    });
    diag.set("center_select", cfg.center_select);
    diag.set("centers", res.centers.size());

    const PointOctree idx = clock.run("index", [&] { return PointOctree(res.centers.points); });
    res.tuning = clock.run("tune", [&] {
        TuneOptions opt;
        opt.eta_override = cfg.eta_override;
        opt.threads = cfg.threads;
        return tune_parameters(res.centers, idx, cfg.s, cfg.noisy_mode, opt);
    });
    const auto& tp = res.tuning;
    diag.set("s", tp.s);
    diag.set("d_bar", tp.d_bar);
    diag.set("m", tp.m);
    diag.set("max_cover_final", tp.max_cover_final);
    diag.set("max_cover_next_step", tp.max_cover_next_step);
    diag.set("rho_min", tp.rho_min);
    diag.set("rho_max", tp.rho_max);
    diag.set("uniform_support", tp.uniform_support);
    diag.set("eta", tp.eta);
    diag.set("eta_threshold", tp.eta_threshold);
    diag.set("eta_overridden", tp.eta_overridden);
    diag.set("A_bar", a_bar(tp.m, tp.rho_min));
    diag.set("bound_premise_holds", tp.eta > tp.eta_threshold);

    const HrbfModel model = clock.run("model", [&] { return build_model(res.centers, tp); });
    const HrbfField field = clock.run("field", [&] { return make_quasi_field(model); });

    DcOptions dc;
    dc.width = cfg.voxel_width;
    dc.threads = cfg.threads;
    DcStats stats;
    QuadMesh raw = clock.run("extract", [&] { return extract_isosurface(field, dc, &stats); });
    diag.set("voxel_width", cfg.voxel_width);
    diag.set("bricks", stats.bricks);
    diag.set("corner_samples", stats.corner_samples);
    diag.set("active_voxels", stats.active_voxels);
    diag.set("sign_edges", stats.sign_edges);
    diag.set("faces_raw", raw.face_count());

    res.normalized_mesh = clock.run("postprocess", [&] { return remove_small_fragments(raw, cfg.min_fragment_faces, cfg.min_fragment_fraction); });
    const auto es = edge_stats(res.normalized_mesh);
    diag.set("faces", res.normalized_mesh.face_count());
    diag.set("vertices", res.normalized_mesh.vertices.size());
    diag.set("components", count_components(res.normalized_mesh));
    diag.set("boundary_edges", es.boundary);
    diag.set("non_manifold_edges", es.non_manifold);

    res.mesh = res.normalized_mesh;
    for (auto& v : res.mesh.vertices) v = res.to_normalized.invert(v);
    return res;
}

/// Loads cfg.input, reconstructs, and writes cfg.output (format by extension).
inline ReconResult run_reconstruct(const ReconConfig& cfg) {
    validate(cfg);
    PointLoadResult loaded;
    try {
        loaded = load_points(cfg.input, point_format_from_path(cfg.input));
    } catch (const std::exception& e) {
        throw StageError("load", e.what());
    }
    ReconResult res = reconstruct(loaded.points, cfg);
    res.diagnostics.set("dropped_zero_normals", loaded.dropped_zero_normals);
    if (!cfg.output.empty()) {
        try {
            save_mesh(res.mesh, cfg.output, mesh_format_from_path(cfg.output));
        } catch (const std::exception& e) {
            throw StageError("save", e.what());
        }
    }
    return res;
}

struct VerifyConfig {
    double s = 1.0;
    bool noisy_mode = false;
    std::optional<double> eta_override;
    std::size_t n_cap = 2000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Quasi coefficients versus the exact regularized solve on the same
/// (normalized) samples. Inputs above n_cap are rejected.
inline BoundReport run_verify_bound(const HermitePointSet& input, const VerifyConfig& cfg) {
    if (input.size() > cfg.n_cap)
        throw StageError("verify", "input has " + std::to_string(input.size()) + " points, above the cap of " +
                                       std::to_string(cfg.n_cap));
    HermitePointSet ps;
    try {
        ps = normalize_to_unit_box(input).first;
    } catch (const std::exception& e) {
        throw StageError("normalize", e.what());
    }
    const PointOctree idx(ps.points);
    TuneOptions opt;
    opt.eta_override = cfg.eta_override;
    opt.threads = cfg.threads;
    TuningParams tp;
    try {
        tp = tune_parameters(ps, idx, cfg.s, cfg.noisy_mode, opt);
    } catch (const std::exception& e) {
        throw StageError("tune", e.what());
    }
    const auto model = build_model(ps, tp);
    ExactOptions eo;
    eo.max_points = std::max(cfg.n_cap, eo.max_points);
    try {
        const auto sys = assemble(ps, tp.rho, tp.eta, eo);
        return verify_error_bound(model, tp, solve(sys, eo));
    } catch (const std::exception& e) {
        throw StageError("exact", e.what());
    }
}

inline std::string bound_csv_header() { return "n,m,eta,rho_min,rho_max,A_bar,applicable,bound,measured,holds,exact_contraction,exact_bound\n"; }

inline std::string bound_csv_row(const BoundReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g,%.9g,%s,%.9g,%.9g,%s,%.9g,%.9g\n", r.n, r.m, r.eta, r.rho_min,
                  r.rho_max, r.A_bar, r.applicable ? "true" : "false", r.bound_value, r.measured_inf_error,
                  r.applicable ? (r.holds ? "true" : "false") : "n/a", r.exact_contraction, r.exact_bound);
    return buf;
}

struct NoiseLevel {
    double delta_percent = 0.0;
    double s = 1.0;
};

/// Noise levels paired with support amplifiers; delta = 0 is the clean baseline.
inline std::vector<NoiseLevel> default_noise_schedule() { return {{0.0, 1.0}, {10.0, 1.9}, {30.0, 2.7}, {60.0, 3.5}}; }

struct NoiseBenchConfig {
    std::size_t points = 10000;
    std::vector<NoiseLevel> levels = default_noise_schedule();
    double voxel_width = 0.01;
    std::size_t distance_samples = 100000;
    std::size_t pca_neighbors = 6;
    std::size_t min_fragment_faces = 10;
    /// Noisy inputs leave sheets where few kernels overlap at the outer rim
    /// of the supports; they are removed relative to the main surface.
    double min_fragment_fraction = 0.1;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct NoiseBenchRow {
    NoiseLevel level;
    std::size_t displaced = 0;
    DistanceReport distance;
    std::size_t components = 0;
    std::size_t boundary_edges = 0;
    std::size_t faces = 0;
    Diagnostics diagnostics;
};

/// Samples oriented points from `ground_truth`, corrupts them per level,
/// re-estimates normals by PCA (oriented by the clean normals), reconstructs
/// and measures distances to the ground truth. Noisy levels use uniform support.
inline std::vector<NoiseBenchRow> run_noise_bench(const QuadMesh& ground_truth, const NoiseBenchConfig& cfg) {
    const auto tris = triangulate(ground_truth);
    if (tris.empty()) throw StageError("noise-bench", "ground-truth mesh has no faces");
    // Area-weighted samples carrying the normal of their triangle.
    HermitePointSet clean;
    {
        std::vector<std::uint32_t> tri_of;
        const auto pts = sample_surface(ground_truth, cfg.points, cfg.seed, &tri_of);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto& t = tris[tri_of[i]];
            const Vec3& a = ground_truth.vertices[t[0]];
            clean.push_back(pts[i], (ground_truth.vertices[t[1]] - a).cross(ground_truth.vertices[t[2]] - a).normalized());
        }
    }

    std::vector<NoiseBenchRow> rows;
    for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
        const auto& level = cfg.levels[li];
        NoiseBenchRow row;
        row.level = level;
        NoiseSpec spec;
        spec.delta_percent = level.delta_percent;
        spec.seed = cfg.seed + 1000 + li;
        const auto noisy = inject_noise(clean, spec);
        row.displaced = noisy.displaced.size();

        HermitePointSet input = noisy.points;
        if (level.delta_percent > 0.0) {
            const auto pca = estimate_normals_pca(noisy.points.points, std::span<const Vec3>(clean.normals),
                                                  cfg.pca_neighbors, cfg.threads);
            input = pca.points;
        }
        ReconConfig rc;
        rc.s = level.s;
        rc.voxel_width = cfg.voxel_width;
        rc.noisy_mode = level.delta_percent > 0.0;
        rc.min_fragment_faces = cfg.min_fragment_faces;
        rc.min_fragment_fraction = cfg.min_fragment_fraction;
        rc.threads = cfg.threads;
        rc.seed = cfg.seed;
        auto rec = reconstruct(input, rc);
        rec.diagnostics.set("noise_sigma", noisy.sigma);
        rec.diagnostics.set("noise_cap", noisy.cap);
        rec.diagnostics.set("noise_distribution", std::string("abs_normal_clamped"));
        row.faces = rec.mesh.face_count();
        row.components = count_components(rec.mesh);
        row.boundary_edges = count_boundary_edges(rec.mesh);
        if (rec.mesh.face_count() == 0) throw StageError("noise-bench", "reconstruction produced no faces");
        row.distance = compare_meshes(ground_truth, rec.mesh, cfg.distance_samples, cfg.seed + 7, cfg.threads);
        row.diagnostics = std::move(rec.diagnostics);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string noise_csv_header() {
    return "delta_percent,s,displaced,forward_max,forward_avg,backward_max,backward_avg,components,boundary_edges,faces\n";
}

inline std::string noise_csv_row(const NoiseBenchRow& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%g,%g,%zu,%.9g,%.9g,%.9g,%.9g,%zu,%zu,%zu\n", r.level.delta_percent, r.level.s, r.displaced,
                  r.distance.forward.max, r.distance.forward.avg, r.distance.backward.max, r.distance.backward.avg,
                  r.components, r.boundary_edges, r.faces);
    return buf;
}

}  // namespace hrbf
