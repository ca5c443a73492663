#include "hrbf/center_select.hpp"
#include "hrbf/pointcloud_io.hpp"
#include "hrbf/shapes.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace hrbf;

namespace {

double wendland(double t) { return t >= 1.0 ? 0.0 : std::pow(1.0 - t, 4) * (4.0 * t + 1.0); }

HermitePointSet plane(int k, double spacing) {
    HermitePointSet ps;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) ps.push_back(Vec3(i * spacing, j * spacing, 0.0), Vec3(0, 0, 1));
    return ps;
}

void expect_cover_invariants(const HermitePointSet& ps, const PointOctree& idx, const SphericalCover& cover) {
    const auto delta = density_weights(idx, cover.params.density_neighbors);
    EXPECT_LE(cover.iterations, ps.size());
    EXPECT_LE(cover.size(), ps.size());
    for (double g : cover.doc) EXPECT_GE(g, cover.params.g_min - 1e-12);
    for (std::size_t k = 0; k < cover.size(); ++k) {
        EXPECT_GT(cover.radii[k], 0.0);
        EXPECT_LE(quadric_error(ps, idx, cover.centers[k], cover.radii[k], delta), cover.params.q_err * cover.L_bar);
        EXPECT_EQ(cover.centers[k], ps.points[cover.source_index[k]]);
        EXPECT_EQ(cover.normals[k], ps.normals[cover.source_index[k]]);
    }
}

}  // namespace

TEST(DensityWeights, MeanSquaredNeighborDistance) {
    const auto ps = plane(5, 0.1);
    const PointOctree idx(ps.points);
    const auto delta = density_weights(idx, 4);
    // Interior point (2,2): four neighbors at distance 0.1.
    EXPECT_NEAR(delta[2 * 5 + 2], 0.01, 1e-15);
    // Corner (0,0): two at 0.1, one at 0.1*sqrt(2), then one of the two at 0.2.
    EXPECT_NEAR(delta[0], (0.01 + 0.01 + 0.02 + 0.04) / 4.0, 1e-15);
    const auto all = density_weights(idx, 100);
    double want = 0.0;
    for (std::size_t j = 1; j < ps.size(); ++j) want += (ps.points[j] - ps.points[0]).squaredNorm();
    EXPECT_NEAR(all[0], want / 24.0, 1e-14);
}

TEST(QuadricError, TrivialCases) {
    const auto ps = plane(10, 0.05);
    const PointOctree idx(ps.points);
    const auto delta = density_weights(idx);
    EXPECT_EQ(quadric_error(ps, idx, Vec3(0.2, 0.2, 0.0), 0.3, delta), 0.0);
    EXPECT_EQ(quadric_error(ps, idx, ps.points[0], 0.01, delta), 0.0);
    EXPECT_THROW(quadric_error(ps, idx, Vec3(5, 5, 5), 0.1, delta), Error);
    EXPECT_THROW(quadric_error(ps, idx, ps.points[0], 0.0, delta), Error);
}

TEST(QuadricError, MatchesDirectSummation) {
    // Patch of a paraboloid z = x^2 + 0.5 y^2.
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    HermitePointSet ps;
    for (int i = 0; i < 800; ++i) {
        const double x = u(rng), y = u(rng);
        ps.push_back(Vec3(x, y, x * x + 0.5 * y * y), Vec3(-2 * x, -y, 1).normalized());
    }
    const PointOctree idx(ps.points);
    const auto delta = density_weights(idx);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 c = ps.points[static_cast<std::size_t>(trial * 37)];
        const double r = 0.05 + 0.02 * trial;
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < ps.size(); ++j) {
            const double d = (ps.points[j] - c).norm();
            if (d >= r) continue;
            const double w = delta[j] * wendland(d / r);
            const double e = ps.normals[j].dot(c - ps.points[j]);
            num += w * e * e;
            den += w;
        }
        EXPECT_NEAR(quadric_error(ps, idx, c, r, delta), num / den, 1e-12);
    }
}

TEST(SelectCenters, SinglePoint) {
    HermitePointSet ps;
    ps.push_back(Vec3(0.3, 0.1, 0.2), Vec3(1, 0, 0));
    const PointOctree idx(ps.points);
    const auto cover = select_centers(ps, idx, CoverParams{}, 1);
    ASSERT_EQ(cover.size(), 1u);
    EXPECT_EQ(cover.centers[0], ps.points[0]);
    EXPECT_GT(cover.radii[0], 0.0);
    EXPECT_GE(cover.doc[0], 1.5);
}

TEST(SelectCenters, FlatPlaneUsesMaximalRadii) {
    const auto ps = plane(30, 0.02);
    const PointOctree idx(ps.points);
    const auto cover = select_centers(ps, idx, CoverParams{}, 2);
    for (double r : cover.radii) EXPECT_DOUBLE_EQ(r, cover.L_bar / 4.0);
    EXPECT_LT(cover.size(), ps.size() / 10);
    expect_cover_invariants(ps, idx, cover);
}

TEST(SelectCenters, TwoDensityCloudIsReduced) {
    const auto ps = normalize_to_unit_box(shapes::two_density_sphere(1000, 6.0, 3)).first;
    const PointOctree idx(ps.points);
    const auto cover = select_centers(ps, idx, CoverParams{}, 3);
    expect_cover_invariants(ps, idx, cover);
    EXPECT_LT(5 * cover.size(), ps.size());
}

TEST(SelectCenters, CoversCurvedShapes) {
    const auto ps = normalize_to_unit_box(shapes::sample_torus(3000, 4)).first;
    const PointOctree idx(ps.points);
    const auto cover = select_centers(ps, idx, CoverParams{}, 4);
    expect_cover_invariants(ps, idx, cover);
    // Tracked coverage never exceeds the true coverage of the final cover.
    for (std::size_t j = 0; j < ps.size(); j += 7) {
        bool is_center = false;
        for (auto s : cover.source_index) is_center |= s == j;
        if (!is_center) EXPECT_LE(cover.doc[j], doc_at(cover, ps.points[j]) + 1e-12);
    }
}

TEST(SelectCenters, DeterministicUnderSeed) {
    const auto ps = normalize_to_unit_box(shapes::sample_sphere(1500, 5)).first;
    const PointOctree idx(ps.points);
    const auto a = select_centers(ps, idx, CoverParams{}, 77);
    const auto b = select_centers(ps, idx, CoverParams{}, 77);
    EXPECT_EQ(a.source_index, b.source_index);
    EXPECT_EQ(a.radii, b.radii);
    EXPECT_EQ(a.doc, b.doc);
    CoverParams threaded;
    threaded.threads = 4;
    const auto c = select_centers(ps, idx, threaded, 77);
    EXPECT_EQ(a.source_index, c.source_index);
    EXPECT_EQ(a.radii, c.radii);
}

TEST(DocAt, TrivialCases) {
    SphericalCover cover;
    cover.centers = {Vec3(0, 0, 0), Vec3(5, 0, 0)};
    cover.radii = {1.0, 0.5};
    EXPECT_EQ(doc_at(cover, Vec3(0, 0, 0)), 1.0);
    EXPECT_EQ(doc_at(cover, Vec3(5, 0, 0)), 1.0);
    EXPECT_EQ(doc_at(cover, Vec3(2, 2, 2)), 0.0);
    EXPECT_THROW(doc_at(SphericalCover{}, Vec3::Zero()), Error);
}

TEST(DocAt, MatchesBruteForce) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1, 1), rr(0.1, 0.8);
    SphericalCover cover;
    for (int k = 0; k < 50; ++k) {
        cover.centers.emplace_back(u(rng), u(rng), u(rng));
        cover.radii.push_back(rr(rng));
    }
    for (int i = 0; i < 500; ++i) {
        const Vec3 x(u(rng), u(rng), u(rng));
        double g = 0.0;
        for (std::size_t k = 0; k < cover.size(); ++k) g += wendland((x - cover.centers[k]).norm() / cover.radii[k]);
        EXPECT_NEAR(doc_at(cover, x), g, 1e-12);
    }
}
