#pragma once

/// \file center_select.hpp
/// Greedy spherical cover used to thin highly non-uniform inputs before
/// tuning. Every input point must end with degree of coverage
/// g(p) = sum_k phi_{r_k}(|p - c_k|) of at least g_min; each sphere is as large
/// as the normal-deviation quadric q(c, r) <= q_err * L allows.

#include "hrbf/csrbf_kernel.hpp"
#include "hrbf/parallel.hpp"
#include "hrbf/spatial_index.hpp"
#include "hrbf/types.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <vector>

namespace hrbf {

struct CoverParams {
    double g_min = 1.5;
    double q_err = 5e-4;
    std::size_t candidates = 15;      // varpi
    std::size_t density_neighbors = 15;
    int bisection_steps = 20;
    unsigned threads = 1;
};

struct SphericalCover {
    std::vector<Vec3> centers;
    std::vector<Vec3> normals;
    std::vector<double> radii;
    std::vector<std::uint32_t> source_index;  // input index of each center
    std::vector<double> doc;                  // tracked coverage per input point
    CoverParams params;
    double L_bar = 0.0;
    std::size_t iterations = 0;

    std::size_t size() const { return centers.size(); }

    HermitePointSet as_point_set() const {
        HermitePointSet out;
        for (std::size_t k = 0; k < size(); ++k) out.push_back(centers[k], normals[k]);
        return out;
    }
};

/// delta_j: mean squared distance from p_j to its nearest neighbors (all of
/// them when fewer than `k` other points exist). Isolated inputs get 1.
inline std::vector<double> density_weights(const PointOctree& idx, std::size_t k = 15, unsigned threads = 1) {
    const std::size_t n = idx.size();
    std::vector<double> delta(n, 1.0);
    if (n < 2) return delta;
    const std::size_t kk = std::min(k, n - 1);
    parallel_for(n, threads, [&](std::size_t j) {
        const auto nb = idx.knn_query(idx.points()[j], kk, static_cast<std::uint32_t>(j));
        double sum = 0.0;
        for (const auto& e : nb) sum += e.distance * e.distance;
        delta[j] = sum / static_cast<double>(nb.size());
    });
    return delta;
}

/// Weighted mean of (n_j . (c - p_j))^2 over points strictly inside the
/// sphere, with weights delta_j phi_r(|p_j - c|).
inline double quadric_error(const HermitePointSet& ps, const PointOctree& idx, const Vec3& c, double r,
                            std::span<const double> delta) {
    if (!(r > 0.0)) throw Error("quadric_error: radius must be positive");
    double num = 0.0, den = 0.0;
    bool any = false;
    for (std::uint32_t j : idx.radius_query(c, r)) {
        any = true;
        const double w = delta[j] * csrbf::profile((ps.points[j] - c).norm() / r);
        const double e = ps.normals[j].dot(c - ps.points[j]);
        num += w * e * e;
        den += w;
    }
    if (!any) throw Error("quadric_error: empty sphere");
    return den > 0.0 ? num / den : 0.0;
}

inline SphericalCover select_centers(const HermitePointSet& ps, const PointOctree& idx, const CoverParams& params,
                                     std::uint64_t seed) {
    const std::size_t n = ps.size();
    if (n == 0) throw Error("center selection needs at least one point");
    if (idx.size() != n) throw Error("octree does not match the point set");

    SphericalCover cover;
    cover.params = params;
    cover.L_bar = idx.bounds().diagonal();
    cover.doc.assign(n, 0.0);
    const auto delta = density_weights(idx, params.density_neighbors, params.threads);
    const double q_limit = params.q_err * cover.L_bar;
    const double r_hi = cover.L_bar > 0.0 ? cover.L_bar / 4.0 : 1.0;

    // Under-covered points; swap-remove keeps membership updates O(1).
    std::vector<std::uint32_t> open(n);
    std::vector<std::int64_t> slot(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        open[i] = i;
        slot[i] = i;
    }
    auto close = [&](std::uint32_t i) {
        if (slot[i] < 0) return;
        const auto pos = static_cast<std::size_t>(slot[i]);
        const std::uint32_t last = open.back();
        open[pos] = last;
        slot[last] = static_cast<std::int64_t>(pos);
        open.pop_back();
        slot[i] = -1;
    };

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> picks;
    while (!open.empty()) {
        ++cover.iterations;
        picks.clear();
        if (open.size() <= params.candidates) {
            for (std::size_t k = 0; k < open.size(); ++k) picks.push_back(k);
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
            while (picks.size() < params.candidates) {
                const std::size_t k = pick(rng);
                if (std::find(picks.begin(), picks.end(), k) == picks.end()) picks.push_back(k);
            }
        }
        std::uint32_t c = open[picks.front()];
        for (std::size_t k : picks) {
            const std::uint32_t i = open[k];
            if (cover.doc[i] < cover.doc[c] || (cover.doc[i] == cover.doc[c] && i < c)) c = i;
        }
        const Vec3& center = ps.points[c];

        // Largest r in [r_lo, r_hi] whose quadric error stays within the limit.
        double r_lo = 0.0;
        if (n > 1) {
            for (const auto& nb : idx.knn_query(center, n - 1 < 16 ? n - 1 : 16, c))
                if (nb.distance > 0.0) {
                    r_lo = nb.distance;
                    break;
                }
        }
        // Only c (and exact duplicates) lies strictly within r_lo, so q(r_lo) = 0.
        if (!(r_lo > 0.0)) r_lo = 1e-6 * r_hi;
        double radius = r_lo;
        if (r_lo < r_hi) {
            if (quadric_error(ps, idx, center, r_hi, delta) <= q_limit) {
                radius = r_hi;
            } else {
                double lo = r_lo, hi = r_hi;
                for (int step = 0; step < params.bisection_steps; ++step) {
                    const double mid = 0.5 * (lo + hi);
                    if (quadric_error(ps, idx, center, mid, delta) <= q_limit) lo = mid;
                    else hi = mid;
                }
                radius = lo;
            }
        }

        cover.centers.push_back(center);
        cover.normals.push_back(ps.normals[c]);
        cover.radii.push_back(radius);
        cover.source_index.push_back(c);
        for (std::uint32_t j : idx.radius_query(center, radius)) {
            if (cover.doc[j] >= params.g_min) continue;
            cover.doc[j] += csrbf::profile((ps.points[j] - center).norm() / radius);
            if (cover.doc[j] >= params.g_min) close(j);
        }
        cover.doc[c] = params.g_min;
        close(c);
    }
    return cover;
}

/// g(x) = sum_k phi_{r_k}(|x - c_k|) summed directly over the cover.
inline double doc_at(const SphericalCover& cover, const Vec3& x) {
    if (cover.centers.empty()) throw Error("doc_at: empty cover");
    double g = 0.0;
    for (std::size_t k = 0; k < cover.size(); ++k) g += csrbf::profile((x - cover.centers[k]).norm() / cover.radii[k]);
    return g;
}

/// One "x,y,z,r" row per sphere.
inline void save_cover_csv(const SphericalCover& cover, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << "x,y,z,r\n";
    char buf[160];
    for (std::size_t k = 0; k < cover.size(); ++k) {
        const auto& c = cover.centers[k];
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g\n", c.x(), c.y(), c.z(), cover.radii[k]);
        out << buf;
    }
}

}  // namespace hrbf
