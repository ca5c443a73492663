// hrbf_recon: command-line driver for reconstruction, coefficient error
// verification, the noise benchmark and center selection.

#include "hrbf/hrbf.hpp"
#include "hrbf/shapes.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace hrbf;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw StageError("save", "cannot write '" + path.string() + "'");
    out << text;
}

HermitePointSet load_input(const std::filesystem::path& path) {
    try {
        return load_points(path, point_format_from_path(path)).points;
    } catch (const std::exception& e) {
        throw StageError("load", e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Surface reconstruction from oriented points with closed-form HRBF quasi-interpolation"};
    app.require_subcommand(1);

    // reconstruct
    ReconConfig rc;
    std::string recon_in, recon_out, diag_path;
    double eta = 0.0;
    auto* recon = app.add_subcommand("reconstruct", "Reconstruct a mesh (.obj or .ply) from oriented points (.xyz or .ply)");
    recon->add_option("-i,--input", recon_in, "Oriented point cloud")->required()->check(CLI::ExistingFile);
    recon->add_option("-o,--output", recon_out, "Output mesh")->required();
    recon->add_option("--s", rc.s, "Support amplifier (>= 1)")->capture_default_str();
    recon->add_option("--w", rc.voxel_width, "Voxel width in normalized coordinates")->capture_default_str();
    recon->add_flag("--center-select", rc.center_select, "Pick centers by spherical cover first");
    recon->add_flag("--noisy", rc.noisy_mode, "Use one uniform support size for all centers");
    auto* eta_opt = recon->add_option("--eta", eta, "Override the regularization weight");
    recon->add_option("--min-fragment-faces", rc.min_fragment_faces, "Drop components with fewer faces")->capture_default_str();
    recon->add_option("--min-fragment-fraction", rc.min_fragment_fraction,
                      "Drop components smaller than this fraction of the largest")
        ->capture_default_str();
    recon->add_option("--threads", rc.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    recon->add_option("--seed", rc.seed, "Seed for center selection")->capture_default_str();
    recon->add_option("--diagnostics", diag_path, "Write key=value diagnostics here ('-' for stdout)");

    // verify-bound
    VerifyConfig vc;
    std::string verify_in, verify_out;
    double verify_eta = 0.0;
    auto* verify = app.add_subcommand("verify-bound", "Compare quasi coefficients against the exact solve; prints one CSV row");
    verify->add_option("-i,--input", verify_in, "Oriented point cloud")->required()->check(CLI::ExistingFile);
    verify->add_option("-o,--output", verify_out, "CSV file (default stdout)");
    verify->add_option("--s", vc.s, "Support amplifier (>= 1)")->capture_default_str();
    verify->add_flag("--noisy", vc.noisy_mode, "Use one uniform support size for all centers");
    auto* verify_eta_opt = verify->add_option("--eta", verify_eta, "Override the regularization weight");
    verify->add_option("--n-cap", vc.n_cap, "Largest input accepted by the exact solver")->capture_default_str();
    verify->add_option("--threads", vc.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    // noise-bench
    NoiseBenchConfig nc;
    std::string truth_path, noise_out;
    int subdivisions = 5;
    auto* noise = app.add_subcommand("noise-bench", "Reconstruct noisy samples of a mesh and report distances; prints CSV");
    noise->add_option("--ground-truth", truth_path, "Ground-truth mesh (default: unit icosphere)")->check(CLI::ExistingFile);
    noise->add_option("--subdivisions", subdivisions, "Icosphere subdivisions when no mesh is given")->capture_default_str();
    noise->add_option("-o,--output", noise_out, "CSV file (default stdout)");
    noise->add_option("--points", nc.points, "Samples drawn from the ground truth")->capture_default_str();
    noise->add_option("--w", nc.voxel_width, "Voxel width in normalized coordinates")->capture_default_str();
    noise->add_option("--distance-samples", nc.distance_samples, "Samples per distance direction")->capture_default_str();
    noise->add_option("--min-fragment-faces", nc.min_fragment_faces, "Drop components with fewer faces")->capture_default_str();
    noise->add_option("--min-fragment-fraction", nc.min_fragment_fraction,
                      "Drop components smaller than this fraction of the largest")
        ->capture_default_str();
    noise->add_option("--threads", nc.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    noise->add_option("--seed", nc.seed, "Seed")->capture_default_str();

    // select-centers
    CoverParams cp;
    std::string select_in, select_out, cover_csv;
    std::uint64_t select_seed = 0;
    auto* select = app.add_subcommand("select-centers", "Pick a subset of the input by spherical cover");
    select->add_option("-i,--input", select_in, "Oriented point cloud")->required()->check(CLI::ExistingFile);
    select->add_option("-o,--output", select_out, "Selected points (.xyz or .ply)")->required();
    select->add_option("--cover-csv", cover_csv, "Write spheres (normalized coordinates) as x,y,z,r");
    select->add_option("--g-min", cp.g_min, "Target degree of coverage")->capture_default_str();
    select->add_option("--q-err", cp.q_err, "Quadric error threshold, relative to the mean leaf diagonal")->capture_default_str();
    select->add_option("--candidates", cp.candidates, "Candidates per iteration")->capture_default_str();
    select->add_option("--threads", cp.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    select->add_option("--seed", select_seed, "Seed")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*recon) {
            rc.input = recon_in;
            rc.output = recon_out;
            if (*eta_opt) rc.eta_override = eta;
            const auto res = run_reconstruct(rc);
            if (diag_path == "-")
                std::cout << res.diagnostics.text();
            else if (!diag_path.empty())
                write_text(diag_path, res.diagnostics.text());
            std::fprintf(stderr, "wrote %s: %zu vertices, %zu faces\n", recon_out.c_str(), res.mesh.vertices.size(),
                         res.mesh.face_count());
        } else if (*verify) {
            if (*verify_eta_opt) vc.eta_override = verify_eta;
            const auto report = run_verify_bound(load_input(verify_in), vc);
            write_text(verify_out, bound_csv_header() + bound_csv_row(report));
        } else if (*noise) {
            QuadMesh truth;
            if (truth_path.empty()) {
                truth = shapes::icosphere(subdivisions);
            } else {
                try {
                    truth = load_mesh(truth_path);
                } catch (const std::exception& e) {
                    throw StageError("load", e.what());
                }
            }
            std::string csv = noise_csv_header();
            for (const auto& row : run_noise_bench(truth, nc)) csv += noise_csv_row(row);
            write_text(noise_out, csv);
        } else if (*select) {
            const auto input = load_input(select_in);
            const auto [ps, sim] = normalize_to_unit_box(input);
            SphericalCover cover;
            try {
                cover = select_centers(ps, PointOctree(ps.points), cp, select_seed);
            } catch (const std::exception& e) {
                throw StageError("center-select", e.what());
            }
            HermitePointSet picked;
            for (auto j : cover.source_index) picked.push_back(input.points[j], input.normals[j]);
            try {
                save_points(picked, select_out, point_format_from_path(select_out));
                if (!cover_csv.empty()) save_cover_csv(cover, cover_csv);
            } catch (const std::exception& e) {
                throw StageError("save", e.what());
            }
            std::fprintf(stderr, "selected %zu of %zu points\n", cover.size(), input.size());
        }
    } catch (const StageError& e) {
        std::fprintf(stderr, "error [%s]\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error [unknown stage]: %s\n", e.what());
        return 1;
    }
    return 0;
}
