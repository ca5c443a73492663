#include "hrbf/pipeline.hpp"
#include "hrbf/shapes.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace hrbf;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "hrbf_pipeline_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

HermitePointSet scaled_sphere(std::size_t n, std::uint64_t seed) {
    return shapes::sample_sphere(n, seed, 5.0, Vec3(10, -3, 2));
}

}  // namespace

TEST(Reconstruct, SphereInOriginalCoordinates) {
    ReconConfig cfg;
    cfg.voxel_width = 0.03;
    const auto res = reconstruct(scaled_sphere(4000, 1), cfg);
    ASSERT_GT(res.mesh.face_count(), 0u);
    EXPECT_EQ(count_boundary_edges(res.mesh), 0u);
    EXPECT_EQ(count_components(res.mesh), 1u);
    double sum = 0.0;
    for (const auto& v : res.normalized_mesh.vertices) sum += std::abs(v.norm() - 1.0);
    EXPECT_LE(sum / static_cast<double>(res.normalized_mesh.vertices.size()), cfg.voxel_width);
    for (std::size_t i = 0; i < res.mesh.vertices.size(); ++i) {
        EXPECT_NEAR((res.mesh.vertices[i] - Vec3(10, -3, 2)).norm(), 5.0, 5.0 * 3 * cfg.voxel_width);
        EXPECT_LE((res.to_normalized.apply(res.mesh.vertices[i]) - res.normalized_mesh.vertices[i]).norm(), 1e-12);
    }
}

TEST(Reconstruct, DiagnosticsCoverEveryStage) {
    ReconConfig cfg;
    cfg.voxel_width = 0.05;
    const auto res = reconstruct(shapes::sample_sphere(1500, 2), cfg);
    const auto& d = res.diagnostics;
    for (const char* key : {"input_points", "centers", "d_bar", "m", "rho_min", "rho_max", "eta", "eta_threshold",
                            "active_voxels", "faces", "boundary_edges", "time_normalize_s", "time_tune_s",
                            "time_extract_s", "time_postprocess_s"})
        EXPECT_TRUE(d.get(key).has_value()) << key;
    EXPECT_EQ(d.get("bound_premise_holds"), "true");
    EXPECT_GT(res.tuning.eta, res.tuning.eta_threshold);
    EXPECT_NE(d.text().find("m=" + std::to_string(res.tuning.m) + "\n"), std::string::npos);

    cfg.eta_override = 0.5;
    const auto forced = reconstruct(shapes::sample_sphere(1500, 2), cfg);
    EXPECT_EQ(forced.diagnostics.get("eta_overridden"), "true");
    EXPECT_EQ(forced.diagnostics.get("bound_premise_holds"), "false");
}

TEST(Reconstruct, CenterSelectionReducesCenters) {
    ReconConfig cfg;
    cfg.voxel_width = 0.03;
    cfg.center_select = true;
    cfg.seed = 5;
    const auto input = shapes::two_density_sphere(800, 6.0, 3);
    const auto res = reconstruct(input, cfg);
    EXPECT_LT(res.centers.size(), input.size());
    EXPECT_GE(std::stod(*res.diagnostics.get("cover_min_doc")), 1.5);
    EXPECT_GT(res.mesh.face_count(), 0u);
}

TEST(Reconstruct, ThreadCountGivesByteIdenticalFiles) {
    const auto in = temp_path("threads_in.xyz");
    save_points(shapes::sample_torus(5000, 4), in, PointFormat::XyzAscii);
    std::string outputs[2];
    for (unsigned t : {1u, 4u}) {
        ReconConfig cfg;
        cfg.input = in;
        cfg.output = temp_path("threads_" + std::to_string(t) + ".ply");
        cfg.voxel_width = 0.02;
        cfg.s = 1.5;
        cfg.threads = t;
        run_reconstruct(cfg);
        outputs[t == 1 ? 0 : 1] = slurp(cfg.output);
    }
    EXPECT_FALSE(outputs[0].empty());
    EXPECT_EQ(outputs[0], outputs[1]);
}

TEST(Reconstruct, ErrorsCarryStageLabels) {
    ReconConfig cfg;
    cfg.s = 0.5;
    try {
        reconstruct(shapes::sample_sphere(100, 1), cfg);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "config");
    }
    cfg.s = 1.0;
    cfg.input = temp_path("does_not_exist.xyz");
    try {
        run_reconstruct(cfg);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "load");
    }
    try {
        HermitePointSet one;
        one.push_back(Vec3::Zero(), Vec3::UnitZ());
        reconstruct(one, ReconConfig{});
        FAIL();
    } catch (const StageError& e) {
        EXPECT_FALSE(e.stage().empty());
        EXPECT_EQ(std::string(e.what()).rfind(e.stage() + ": ", 0), 0u);
    }
}

TEST(VerifyBound, SphereSubsetHolds) {
    const auto r = run_verify_bound(shapes::sample_sphere(500, 7), VerifyConfig{});
    EXPECT_EQ(r.n, 500u);
    EXPECT_TRUE(r.applicable);
    EXPECT_TRUE(r.holds);
    const auto row = bound_csv_row(r);
    const auto header = bound_csv_header();
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
    EXPECT_NE(row.find(",true,"), std::string::npos);
}

TEST(VerifyBound, SmallEtaFlagsNotApplicable) {
    VerifyConfig cfg;
    cfg.eta_override = 1.0;
    const auto r = run_verify_bound(shapes::sample_sphere(300, 8), cfg);
    EXPECT_FALSE(r.applicable);
    EXPECT_FALSE(r.holds);
}

TEST(VerifyBound, CapExceeded) {
    VerifyConfig cfg;
    cfg.n_cap = 100;
    EXPECT_THROW(run_verify_bound(shapes::sample_sphere(101, 9), cfg), StageError);
}

TEST(NoiseBench, ScheduleEchoedAndSurfaceStaysClosed) {
    NoiseBenchConfig cfg;
    cfg.points = 4000;
    cfg.voxel_width = 0.04;
    cfg.distance_samples = 20000;
    cfg.seed = 3;
    const auto rows = run_noise_bench(shapes::icosphere(4), cfg);
    ASSERT_EQ(rows.size(), 4u);
    const double s_expected[] = {1.0, 1.9, 2.7, 3.5};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].level.s, s_expected[i]);
        EXPECT_EQ(rows[i].diagnostics.get("s"), std::string(i == 0 ? "1" : i == 1 ? "1.9" : i == 2 ? "2.7" : "3.5"));
        EXPECT_GE(rows[i].distance.forward.max, rows[i].distance.forward.avg);
        EXPECT_GE(rows[i].distance.backward.max, rows[i].distance.backward.avg);
        if (i > 0) EXPECT_GT(rows[i].distance.backward.avg, rows[i - 1].distance.backward.avg);
        EXPECT_EQ(rows[i].components, 1u);
        EXPECT_EQ(rows[i].boundary_edges, 0u);
    }
    EXPECT_EQ(rows[0].displaced, 0u);
    EXPECT_EQ(rows[2].displaced, 1200u);
    const auto line = noise_csv_row(rows[3]);
    EXPECT_EQ(line.rfind("60,3.5,2400,", 0), 0u);
}
