#include "hrbf/hrbf_quasi.hpp"
#include "hrbf/isosurface_dc.hpp"
#include "hrbf/mesh_topology.hpp"
#include "hrbf/pointcloud_io.hpp"
#include "hrbf/shapes.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <numbers>
#include <random>

using namespace hrbf;

namespace {

/// Analytic function restricted to a union of balls.
class AnalyticField {
public:
    using Fn = std::function<FieldSample(const Vec3&)>;

    AnalyticField(Fn fn, std::vector<Vec3> centers, std::vector<double> radii)
        : fn_(std::move(fn)), centers_(std::move(centers)), radii_(std::move(radii)) {}

    std::span<const Vec3> centers() const { return centers_; }
    std::span<const double> radii() const { return radii_; }

    bool covered(const Vec3& x) const {
        for (std::size_t j = 0; j < centers_.size(); ++j)
            if ((x - centers_[j]).squaredNorm() < radii_[j] * radii_[j]) return true;
        return false;
    }
    std::optional<double> value(const Vec3& x) const {
        if (!covered(x)) return std::nullopt;
        return fn_(x).value;
    }
    std::optional<double> value(const Vec3& x, std::span<const std::uint32_t>) const { return value(x); }
    std::optional<FieldSample> sample(const Vec3& x) const {
        if (!covered(x)) return std::nullopt;
        return fn_(x);
    }
    std::vector<std::uint32_t> gather(const AABB& box) const {
        std::vector<std::uint32_t> out;
        for (std::uint32_t j = 0; j < centers_.size(); ++j)
            if (PointOctree::box_sq_distance(box, centers_[j]) < radii_[j] * radii_[j]) out.push_back(j);
        return out;
    }

private:
    Fn fn_;
    std::vector<Vec3> centers_;
    std::vector<double> radii_;
};

static_assert(ImplicitField<AnalyticField>);

AnalyticField sphere_field(double radius, std::vector<Vec3> centers = {Vec3::Zero()}, std::vector<double> radii = {1.5}) {
    return AnalyticField(
        [radius](const Vec3& x) {
            FieldSample s;
            s.value = x.norm() - radius;
            s.gradient = x.norm() > 0 ? Vec3(x.normalized()) : Vec3::UnitZ();
            return s;
        },
        std::move(centers), std::move(radii));
}

AnalyticField plane_field(const Vec3& n, double offset, std::vector<Vec3> centers, std::vector<double> radii) {
    return AnalyticField(
        [n, offset](const Vec3& x) {
            FieldSample s;
            s.value = n.dot(x) - offset;
            s.gradient = n;
            return s;
        },
        std::move(centers), std::move(radii));
}

EdgeIntersection hit(const Vec3& p, const Vec3& n) {
    EdgeIntersection e;
    e.position = p;
    e.normal = n.normalized();
    return e;
}

Vec3 quad_normal(const QuadMesh& m, const std::array<std::uint32_t, 4>& q) {
    Vec3 n = Vec3::Zero();
    for (int k = 0; k < 4; ++k) n += m.vertices[q[k]].cross(m.vertices[q[(k + 1) % 4]]);
    return n;
}

// Independent component count by breadth-first search over shared vertices.
std::vector<std::size_t> component_sizes_bfs(const QuadMesh& m) {
    const auto faces = mesh_faces(m);
    std::vector<std::vector<std::size_t>> faces_of(m.vertices.size());
    for (std::size_t f = 0; f < faces.size(); ++f)
        for (auto v : faces[f]) faces_of[v].push_back(f);
    std::vector<char> seen(faces.size(), 0);
    std::vector<std::size_t> sizes;
    for (std::size_t s = 0; s < faces.size(); ++s) {
        if (seen[s]) continue;
        std::vector<std::size_t> stack{s};
        seen[s] = 1;
        std::size_t count = 0;
        while (!stack.empty()) {
            const auto f = stack.back();
            stack.pop_back();
            ++count;
            for (auto v : faces[f])
                for (auto g : faces_of[v])
                    if (!seen[g]) {
                        seen[g] = 1;
                        stack.push_back(g);
                    }
        }
        sizes.push_back(count);
    }
    return sizes;
}

}  // namespace

TEST(CollectActiveVoxels, MatchesBruteForceEnumeration) {
    // Plane x + 0.3 y = 0.0123 restricted to two overlapping balls.
    const auto field = plane_field(Vec3(1, 0.3, 0).normalized(), 0.0123, {Vec3(0, 0, 0), Vec3(0.2, 0.1, 0)}, {0.25, 0.15});
    DcOptions opt;
    opt.width = 0.02;
    const auto grid = collect_active_voxels(field, opt);
    ASSERT_FALSE(grid.voxels.empty());
    std::vector<LatticeCoord> want;
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 100; ++j)
            for (int k = 0; k < 100; ++k) {
                int neg = 0;
                bool defined = true;
                for (int c = 0; c < 8 && defined; ++c) {
                    const auto f = field.value(grid.corner_position(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)));
                    defined = f.has_value();
                    if (f) neg += *f < 0 ? 1 : 0;
                }
                if (defined && neg > 0 && neg < 8) want.push_back({i, j, k});
            }
    ASSERT_EQ(grid.voxels.size(), want.size());
    for (std::size_t v = 0; v < want.size(); ++v) EXPECT_EQ(grid.voxels[v].coord, want[v]);
}

TEST(CollectActiveVoxels, ExcludesUniformAndUndefinedVoxels) {
    const auto field = sphere_field(0.5, {Vec3::Zero()}, {0.6});
    DcOptions opt;
    opt.width = 0.05;
    const auto grid = collect_active_voxels(field, opt);
    for (const auto& v : grid.voxels) {
        int neg = 0;
        for (int c = 0; c < 8; ++c) {
            ASSERT_FALSE(std::isnan(v.corner[c]));
            const auto p = grid.corner_position(v.coord[0] + (c & 1), v.coord[1] + ((c >> 1) & 1), v.coord[2] + ((c >> 2) & 1));
            EXPECT_EQ(v.corner[c], *field.value(p));
            neg += v.corner[c] < 0 ? 1 : 0;
        }
        EXPECT_GT(neg, 0);
        EXPECT_LT(neg, 8);
    }
    // A support smaller than the zero set: nothing qualifies.
    const auto small = sphere_field(0.5, {Vec3::Zero()}, {0.3});
    EXPECT_TRUE(collect_active_voxels(small, opt).voxels.empty());
}

TEST(CollectActiveVoxels, SphereModelCountNearAreaEstimate) {
    const auto ps = normalize_to_unit_box(shapes::sample_sphere(3000, 1)).first;
    const auto tp = tune_parameters(ps, PointOctree(ps.points), 1.0, false);
    const auto field = make_quasi_field(build_model(ps, tp));
    DcOptions opt;
    opt.width = 0.02;
    const auto grid = collect_active_voxels(field, opt);
    const double estimate = 4.0 * std::numbers::pi / (opt.width * opt.width);
    const double count = static_cast<double>(grid.voxels.size());
    EXPECT_GT(count, estimate / 3.0);
    EXPECT_LT(count, estimate * 3.0);
}

TEST(CollectActiveVoxels, RejectsBadWidthAndOversizedLattice) {
    const auto field = sphere_field(0.5);
    DcOptions opt;
    opt.width = 0.0;
    EXPECT_THROW(collect_active_voxels(field, opt), Error);
    opt.width = 0.01;
    opt.max_corner_samples = 1000;
    try {
        collect_active_voxels(field, opt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("try w >="), std::string::npos);
    }
}

TEST(EdgeRoot, LinearFunctionHitsInterpolationPoint) {
    const auto field = plane_field(Vec3(1, 0, 0), 0.3, {Vec3::Zero()}, {2.0});
    const Vec3 a(0, 0.1, 0.1), b(1, 0.1, 0.1);
    const auto r = edge_root(field, a, b, -0.3, 0.7, 1e-4);
    EXPECT_NEAR(r.position.x(), 0.3, 1e-12);
    EXPECT_LE((r.normal - Vec3(1, 0, 0)).norm(), 1e-15);
    // Either endpoint order gives the same root.
    const auto s = edge_root(field, b, a, 0.7, -0.3, 1e-4);
    EXPECT_NEAR(s.position.x(), 0.3, 1e-12);
}

TEST(EdgeRoot, SymmetricEndpointsGiveMidpoint) {
    const auto field = AnalyticField(
        [](const Vec3& x) {
            FieldSample s;
            s.value = std::tanh(5 * (x.y() - 0.5));
            s.gradient = Vec3(0, 5 / std::pow(std::cosh(5 * (x.y() - 0.5)), 2), 0);
            return s;
        },
        {Vec3::Zero()}, {3.0});
    const auto r = edge_root(field, Vec3(0, 0, 0), Vec3(0, 1, 0), std::tanh(-2.5), std::tanh(2.5), 1e-4);
    EXPECT_EQ(r.position, Vec3(0, 0.5, 0));
    EXPECT_EQ(r.iterations, 1);
}

TEST(EdgeRoot, SphereRootsWithinTolerance) {
    const auto field = sphere_field(1.0);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0, 1);
    const double w = 0.01, tol = 1e-4 * w;
    for (int i = 0; i < 200; ++i) {
        const Vec3 d = Vec3(g(rng), g(rng), g(rng)).normalized();
        const int axis = i % 3;
        Vec3 a = d * (1.0 - 0.3 * w), b = a;
        b[axis] += w * (d[axis] > 0 ? 1 : -1);
        if (!(field.value(b).value() > 0)) continue;
        const auto r = edge_root(field, a, b, *field.value(a), *field.value(b), tol);
        EXPECT_LE(std::abs(r.position.norm() - 1.0), tol);
        EXPECT_LE((r.normal - r.position.normalized()).norm(), 1e-6);
    }
}

TEST(EdgeRoot, RejectsSameSignAndFallsBackOnFlatGradient) {
    const auto field = sphere_field(1.0);
    EXPECT_THROW(edge_root(field, Vec3(0, 0, 0), Vec3(0.1, 0, 0), -1.0, -0.9, 1e-4), Error);
    const auto flat = AnalyticField(
        [](const Vec3& x) {
            FieldSample s;
            s.value = x.z() - 0.5;
            return s;
        },
        {Vec3::Zero()}, {2.0});
    const auto r = edge_root(flat, Vec3(0, 0, 1), Vec3(0, 0, 0), 0.5, -0.5, 1e-6);
    EXPECT_EQ(r.normal, Vec3(0, 0, 1));
}

TEST(PlaceVertex, SingleIntersectionIsItself) {
    const std::array<EdgeIntersection, 1> xs{hit(Vec3(0.1, 0.2, 0.3), Vec3(1, 2, 3))};
    EXPECT_LE((place_vertex(xs) - Vec3(0.1, 0.2, 0.3)).norm(), 1e-15);
}

TEST(PlaceVertex, CoplanarPicksCentroid) {
    const Vec3 n = Vec3(1, 1, 0).normalized();
    std::vector<EdgeIntersection> xs;
    for (const Vec3 t : {Vec3(0, 0, 0), Vec3(0, 0, 0.4), Vec3(0.3, -0.3, 0.06), Vec3(-0.2, 0.2, 0.02)})
        xs.push_back(hit(Vec3(0.5, 0.5, 0.5) + t, n));
    Vec3 centroid = Vec3::Zero();
    for (const auto& x : xs) centroid += x.position;
    centroid /= 4.0;
    const Vec3 v = place_vertex(xs);
    EXPECT_LE((v - centroid).norm(), 1e-12);
    EXPECT_NEAR(n.dot(v - Vec3(0.5, 0.5, 0.5)), 0.0, 1e-12);
}

TEST(PlaceVertex, ThreePlanesMeetAtCorner) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 p(0.3 + 0.1 * u(rng), 0.4 + 0.1 * u(rng), 0.5 + 0.1 * u(rng));
        const Mat3 R = Eigen::AngleAxisd(u(rng) * 3, Vec3(u(rng), u(rng), u(rng)).normalized()).toRotationMatrix();
        std::vector<EdgeIntersection> xs;
        for (int a = 0; a < 3; ++a) {
            const Vec3 n = R.col(a);
            // Two points on each plane, offset within the plane.
            for (int s = 0; s < 2; ++s) xs.push_back(hit(p + 0.05 * R.col((a + 1 + s) % 3) * (s ? 1 : -1), n));
        }
        AABB box;
        box.lo = Vec3::Zero();
        box.hi = Vec3::Ones();
        EXPECT_LE((place_vertex(xs, 1e-3, &box) - p).norm(), 1e-9);
    }
}

TEST(PlaceVertex, ClampedToBox) {
    // Nearly parallel planes push the unclamped minimizer far away.
    std::vector<EdgeIntersection> xs{hit(Vec3(0.5, 0.5, 0.5), Vec3(0, 0, 1)),
                                     hit(Vec3(0.5, 0.5, 0.6), Vec3(0.2, 0, 1))};
    AABB box;
    box.lo = Vec3::Zero();
    box.hi = Vec3::Ones();
    const Vec3 v = place_vertex(xs, 1e-3, &box);
    EXPECT_TRUE((v.array() >= 0.0).all() && (v.array() <= 1.0).all());
}

TEST(EmitQuads, IsolatedVoxelGivesNoFaces) {
    const auto field = plane_field(Vec3(0, 0, 1), 0.01, {Vec3::Zero()}, {0.09});
    DcOptions opt;
    opt.width = 0.1;
    opt.origin = Vec3::Constant(-0.05);
    const auto grid = collect_active_voxels(field, opt);
    ASSERT_EQ(grid.voxels.size(), 1u);
    const auto edges = find_edge_roots(field, grid, opt);
    const auto mesh = emit_quads(grid, edges, place_vertices(grid, edges, opt));
    EXPECT_EQ(mesh.face_count(), 0u);
    EXPECT_TRUE(mesh.vertices.empty());
}

TEST(EmitQuads, BlockAroundOneEdgeGivesOneOrientedQuad) {
    for (double sign : {1.0, -1.0}) {
        VoxelGrid grid;
        grid.width = 1.0;
        grid.origin = Vec3::Zero();
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) {
                    ActiveVoxel v;
                    v.coord = {i, j, k};
                    v.corner.fill(1.0);
                    grid.voxels.push_back(v);
                }
        SignEdge e;
        e.lower = {0, 1, 1};
        e.axis = 0;
        e.f_lower = -sign;
        e.f_upper = sign;
        const std::vector<SignEdge> edges{e};
        DcVertices verts;
        for (const auto& v : grid.voxels) {
            verts.positions.push_back(Vec3(v.coord[0] + 0.5, v.coord[1] + 0.5, v.coord[2] + 0.5));
            verts.normals.push_back(Vec3::UnitX());
        }
        const auto mesh = emit_quads(grid, edges, verts);
        ASSERT_EQ(mesh.quads.size(), 1u);
        EXPECT_EQ(mesh.vertices.size(), 4u);
        EXPECT_GT(sign * quad_normal(mesh, mesh.quads[0]).x(), 0.0);
    }
}

TEST(ExtractIsosurface, CoveredSphereIsClosedAndOutward) {
    const auto field = sphere_field(0.6);
    DcOptions opt;
    opt.width = 0.05;
    DcStats stats;
    const auto mesh = extract_isosurface(field, opt, &stats);
    const auto es = edge_stats(mesh);
    EXPECT_EQ(es.boundary, 0u);
    EXPECT_EQ(es.non_manifold, 0u);
    EXPECT_EQ(count_components(mesh), 1u);
    EXPECT_EQ(stats.quads, mesh.quads.size());
    for (const auto& q : mesh.quads) {
        Vec3 c = Vec3::Zero();
        for (auto v : q) c += mesh.vertices[v];
        EXPECT_GT(quad_normal(mesh, q).dot(c), 0.0);
    }
    for (const auto& v : mesh.vertices) EXPECT_NEAR(v.norm(), 0.6, 0.01);
}

TEST(ExtractIsosurface, VerticesStayInTheirVoxels) {
    const auto ps = normalize_to_unit_box(shapes::sample_torus(2000, 4)).first;
    const auto tp = tune_parameters(ps, PointOctree(ps.points), 1.5, false);
    const auto field = make_quasi_field(build_model(ps, tp));
    DcOptions opt;
    opt.width = 0.04;
    const auto grid = collect_active_voxels(field, opt);
    const auto edges = find_edge_roots(field, grid, opt);
    const auto verts = place_vertices(grid, edges, opt);
    for (std::size_t i = 0; i < grid.voxels.size(); ++i) {
        const auto box = grid.voxel_box(grid.voxels[i].coord);
        EXPECT_TRUE((verts.positions[i].array() >= box.lo.array()).all() && (verts.positions[i].array() <= box.hi.array()).all());
    }
    for (const auto& e : edges) {
        const auto f = field.value(e.hit.position);
        ASSERT_TRUE(f.has_value());
    }
}

TEST(ExtractIsosurface, MissingDataLeavesAnOpening) {
    // Supports cover the sphere except around the north pole.
    std::vector<Vec3> centers;
    std::vector<double> radii;
    for (const auto& p : shapes::fibonacci_sphere(400, 0.6).points)
        if (p.z() < 0.4) {
            centers.push_back(p);
            radii.push_back(0.15);
        }
    const auto field = sphere_field(0.6, centers, radii);
    DcOptions opt;
    opt.width = 0.04;
    const auto mesh = extract_isosurface(field, opt);
    EXPECT_GT(count_boundary_edges(mesh), 0u);
    for (const auto& v : mesh.vertices) EXPECT_LT(v.z(), 0.55);
}

TEST(ExtractIsosurface, ThreadCountDoesNotChangeOutput) {
    const auto ps = normalize_to_unit_box(shapes::sample_sphere(2000, 5)).first;
    const auto tp = tune_parameters(ps, PointOctree(ps.points), 1.0, false);
    const auto field = make_quasi_field(build_model(ps, tp));
    DcOptions one, many;
    one.width = many.width = 0.03;
    many.threads = 4;
    const auto a = extract_isosurface(field, one);
    const auto b = extract_isosurface(field, many);
    EXPECT_EQ(a.vertices, b.vertices);
    EXPECT_EQ(a.quads, b.quads);
}

TEST(RemoveSmallFragments, SingleComponentUnchanged) {
    const auto mesh = extract_isosurface(sphere_field(0.6), DcOptions{.width = 0.1});
    const auto out = remove_small_fragments(mesh, 10);
    EXPECT_EQ(out.vertices, mesh.vertices);
    EXPECT_EQ(out.quads, mesh.quads);
}

TEST(RemoveSmallFragments, FloaterRemoved) {
    auto mesh = extract_isosurface(sphere_field(0.6), DcOptions{.width = 0.1});
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (int k = 0; k < 6; ++k) mesh.vertices.emplace_back(2.0 + k, 0, 0);
    mesh.quads.push_back({base, base + 1, base + 2, base + 3});
    mesh.quads.push_back({base + 2, base + 3, base + 4, base + 5});
    const auto out = remove_small_fragments(mesh, 10);
    EXPECT_EQ(count_components(out), 1u);
    EXPECT_EQ(out.quads.size(), mesh.quads.size() - 2);
    EXPECT_EQ(out.vertices.size(), static_cast<std::size_t>(base));
}

TEST(RemoveSmallFragments, RelativeFloor) {
    auto mesh = extract_isosurface(sphere_field(0.6), DcOptions{.width = 0.05});
    const std::size_t main_faces = mesh.face_count();
    auto floater = extract_isosurface(sphere_field(0.2), DcOptions{.width = 0.05});
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (const auto& v : floater.vertices) mesh.vertices.push_back(v + Vec3(3, 0, 0));
    for (auto q : floater.quads) {
        for (auto& i : q) i += base;
        mesh.quads.push_back(q);
    }
    const double ratio = static_cast<double>(floater.face_count()) / static_cast<double>(main_faces);
    EXPECT_EQ(remove_small_fragments(mesh, 10, 0.5 * ratio).face_count(), mesh.face_count());
    EXPECT_EQ(remove_small_fragments(mesh, 10, 2.0 * ratio).face_count(), main_faces);
}

TEST(RemoveSmallFragments, MatchesIndependentComponentCount) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        QuadMesh mesh;
        std::uniform_int_distribution<int> sizes(1, 25);
        const int parts = 1 + trial % 6;
        for (int p = 0; p < parts; ++p) {
            // A strip of quads sharing edges, far from the other strips.
            const int n = sizes(rng);
            const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
            for (int k = 0; k <= n; ++k) {
                mesh.vertices.emplace_back(10.0 * p, k, 0);
                mesh.vertices.emplace_back(10.0 * p, k, 1);
            }
            for (std::uint32_t k = 0; k < static_cast<std::uint32_t>(n); ++k)
                mesh.quads.push_back({base + 2 * k, base + 2 * k + 2, base + 2 * k + 3, base + 2 * k + 1});
        }
        const std::size_t min_faces = 10;
        const auto before = component_sizes_bfs(mesh);
        const std::size_t largest = *std::max_element(before.begin(), before.end());
        std::size_t expected = 0, faces = 0;
        bool largest_counted = false;
        for (auto s : before)
            if (s >= min_faces || (s == largest && !largest_counted)) {
                ++expected;
                faces += s;
                if (s == largest) largest_counted = true;
            }
        const auto out = remove_small_fragments(mesh, min_faces);
        EXPECT_EQ(component_sizes_bfs(out).size(), expected);
        EXPECT_EQ(out.face_count(), faces);
    }
}
