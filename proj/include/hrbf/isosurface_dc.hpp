#pragma once

/// \file isosurface_dc.hpp
/// Dual contouring of the zero set of a compactly supported implicit field on
/// a sparse fixed-width voxel lattice.
///
/// Only voxels that touch some support ball are visited. A voxel is active
/// when all eight corners lie inside the union of supports and their signs
/// differ; quads are emitted only where all four voxels around a sign-change
/// edge are active, so regions without data stay open.
///
/// The lattice is processed in bricks of kBrick^3 voxels. Each lattice corner
/// is evaluated exactly once, by the brick that owns it, from a candidate list
/// gathered for that brick.

#include "hrbf/implicit_field.hpp"
#include "hrbf/mesh_topology.hpp"
#include "hrbf/parallel.hpp"
#include "hrbf/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hrbf {

struct DcOptions {
    double width = 0.01;
    /// Lattice anchor; voxel (i,j,k) spans origin + [i,i+1]x[j,j+1]x[k,k+1] * width.
    Vec3 origin = Vec3::Constant(-1.0);
    /// Bisection stops once the bracket is shorter than tol_factor * width.
    double tol_factor = 1e-4;
    int max_bisections = 32;
    /// QEF eigenvalues below this fraction of the total weight are treated as zero.
    double qef_rank_tol = 1e-3;
    /// Upper bound on the number of lattice corners evaluated.
    std::size_t max_corner_samples = 150'000'000;
    unsigned threads = 1;
};

using LatticeCoord = std::array<std::int32_t, 3>;

namespace dc_detail {

inline constexpr int kBrick = 8;
inline constexpr std::int64_t kCoordBias = std::int64_t{1} << 20;
inline constexpr std::int32_t kCoordLimit = (1 << 20) - 2 * kBrick;

/// 21 bits per axis; ordering of keys is lexicographic in (i, j, k).
inline std::uint64_t pack(std::int64_t i, std::int64_t j, std::int64_t k) {
    return (static_cast<std::uint64_t>(i + kCoordBias) << 42) | (static_cast<std::uint64_t>(j + kCoordBias) << 21) |
           static_cast<std::uint64_t>(k + kCoordBias);
}

inline LatticeCoord unpack(std::uint64_t key) {
    constexpr std::uint64_t mask = (std::uint64_t{1} << 21) - 1;
    return {static_cast<std::int32_t>(static_cast<std::int64_t>((key >> 42) & mask) - kCoordBias),
            static_cast<std::int32_t>(static_cast<std::int64_t>((key >> 21) & mask) - kCoordBias),
            static_cast<std::int32_t>(static_cast<std::int64_t>(key & mask) - kCoordBias)};
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    const std::int64_t q = a / b;
    return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}

inline bool negative(double f) { return f < 0.0; }

}  // namespace dc_detail

/// Corner c of a voxel sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
struct ActiveVoxel {
    LatticeCoord coord;
    std::array<double, 8> corner;
};

struct VoxelGrid {
    double width = 0.0;
    Vec3 origin = Vec3::Zero();
    std::vector<ActiveVoxel> voxels;  // sorted by lattice coordinate
    std::size_t bricks = 0;
    std::size_t corner_samples = 0;

    Vec3 corner_position(std::int64_t i, std::int64_t j, std::int64_t k) const { return lattice_point(origin, width, i, j, k); }
    AABB voxel_box(const LatticeCoord& c) const {
        AABB b;
        b.lo = corner_position(c[0], c[1], c[2]);
        b.hi = corner_position(c[0] + 1, c[1] + 1, c[2] + 1);
        return b;
    }
    /// Index into `voxels`, or -1.
    std::int64_t find(const LatticeCoord& c) const {
        auto it = std::lower_bound(voxels.begin(), voxels.end(), c,
                                   [](const ActiveVoxel& v, const LatticeCoord& key) { return v.coord < key; });
        if (it == voxels.end() || it->coord != c) return -1;
        return it - voxels.begin();
    }
};

/// Snaps the requested origin down onto the lattice through it with spacing
/// `width` so that any two grids with the same anchor and width share corners.
template <ImplicitField Field>
VoxelGrid collect_active_voxels(const Field& field, const DcOptions& opt = {}) {
    using namespace dc_detail;
    if (!(opt.width > 0.0)) throw Error("voxel width must be positive");
    VoxelGrid grid;
    grid.width = opt.width;
    grid.origin = opt.origin;
    const double w = opt.width;
    const auto centers = field.centers();
    const auto radii = field.radii();
    const std::int64_t B = kBrick;

    auto to_cell = [&](double x, int axis) {
        const double c = std::floor((x - grid.origin[axis]) / w);
        if (!(std::abs(c) < kCoordLimit)) throw Error("voxel lattice coordinate out of range; increase the voxel width");
        return static_cast<std::int64_t>(c);
    };

    // Bricks whose voxels may meet a support ball.
    std::vector<std::uint64_t> bricks;
    {
        std::vector<std::vector<std::uint64_t>> parts(std::min<std::size_t>(resolve_threads(opt.threads), centers.size()));
        parallel_chunks(centers.size(), opt.threads, [&](std::size_t begin, std::size_t end, std::size_t chunk) {
            auto& out = parts[chunk];
            for (std::size_t j = begin; j < end; ++j) {
                const Vec3& c = centers[j];
                const double r = radii[j];
                std::array<std::int64_t, 3> lo, hi;
                for (int a = 0; a < 3; ++a) {
                    lo[a] = floor_div(to_cell(c[a] - r, a), B);
                    hi[a] = floor_div(to_cell(c[a] + r, a), B);
                }
                for (auto bi = lo[0]; bi <= hi[0]; ++bi)
                    for (auto bj = lo[1]; bj <= hi[1]; ++bj)
                        for (auto bk = lo[2]; bk <= hi[2]; ++bk) {
                            AABB box;
                            box.lo = grid.corner_position(bi * B, bj * B, bk * B);
                            box.hi = grid.corner_position((bi + 1) * B, (bj + 1) * B, (bk + 1) * B);
                            if (PointOctree::box_sq_distance(box, c) < r * r) out.push_back(pack(bi, bj, bk));
                        }
            }
            std::sort(out.begin(), out.end());
            out.erase(std::unique(out.begin(), out.end()), out.end());
        });
        for (auto& p : parts) bricks.insert(bricks.end(), p.begin(), p.end());
        std::sort(bricks.begin(), bricks.end());
        bricks.erase(std::unique(bricks.begin(), bricks.end()), bricks.end());
    }
    grid.bricks = bricks.size();

    // Corner bricks: a voxel brick needs the corners of itself and its +1 neighbors.
    std::vector<std::uint64_t> corner_bricks;
    corner_bricks.reserve(bricks.size() * 2);
    for (auto key : bricks) {
        const auto b = unpack(key);
        for (int o = 0; o < 8; ++o) corner_bricks.push_back(pack(b[0] + (o & 1), b[1] + ((o >> 1) & 1), b[2] + ((o >> 2) & 1)));
    }
    std::sort(corner_bricks.begin(), corner_bricks.end());
    corner_bricks.erase(std::unique(corner_bricks.begin(), corner_bricks.end()), corner_bricks.end());

    constexpr std::size_t per_brick = kBrick * kBrick * kBrick;
    const std::size_t samples = corner_bricks.size() * per_brick;
    if (samples > opt.max_corner_samples) {
        const double suggested = w * std::cbrt(static_cast<double>(samples) / static_cast<double>(opt.max_corner_samples)) * 1.1;
        throw Error("voxel width " + std::to_string(w) + " needs " + std::to_string(samples) +
                    " corner samples (cap " + std::to_string(opt.max_corner_samples) + "); try w >= " +
                    std::to_string(suggested));
    }
    grid.corner_samples = samples;

    // NaN marks corners outside every support.
    const double undefined = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> corner_values(samples, undefined);
    parallel_for(corner_bricks.size(), opt.threads, [&](std::size_t bi) {
        const auto b = unpack(corner_bricks[bi]);
        AABB box;
        box.lo = grid.corner_position(b[0] * B, b[1] * B, b[2] * B);
        box.hi = grid.corner_position(b[0] * B + B - 1, b[1] * B + B - 1, b[2] * B + B - 1);
        const auto cand = field.gather(box);
        if (cand.empty()) return;
        double* out = corner_values.data() + bi * per_brick;
        for (int x = 0; x < kBrick; ++x)
            for (int y = 0; y < kBrick; ++y)
                for (int z = 0; z < kBrick; ++z) {
                    const auto v = field.value(grid.corner_position(b[0] * B + x, b[1] * B + y, b[2] * B + z), cand);
                    if (v) out[(x * kBrick + y) * kBrick + z] = *v;
                }
    });

    auto brick_values = [&](std::int64_t i, std::int64_t j, std::int64_t k) -> const double* {
        const auto key = pack(i, j, k);
        auto it = std::lower_bound(corner_bricks.begin(), corner_bricks.end(), key);
        if (it == corner_bricks.end() || *it != key) return nullptr;
        return corner_values.data() + static_cast<std::size_t>(it - corner_bricks.begin()) * per_brick;
    };

    std::vector<std::vector<ActiveVoxel>> per(bricks.size());
    parallel_for(bricks.size(), opt.threads, [&](std::size_t bi) {
        const auto b = unpack(bricks[bi]);
        std::array<const double*, 8> nb;
        for (int o = 0; o < 8; ++o) nb[o] = brick_values(b[0] + (o & 1), b[1] + ((o >> 1) & 1), b[2] + ((o >> 2) & 1));
        auto corner = [&](int x, int y, int z) {
            const int o = (x >= kBrick ? 1 : 0) | (y >= kBrick ? 2 : 0) | (z >= kBrick ? 4 : 0);
            const double* v = nb[o];
            return v[((x % kBrick) * kBrick + (y % kBrick)) * kBrick + (z % kBrick)];
        };
        auto& out = per[bi];
        for (int x = 0; x < kBrick; ++x)
            for (int y = 0; y < kBrick; ++y)
                for (int z = 0; z < kBrick; ++z) {
                    ActiveVoxel v;
                    bool defined = true;
                    int neg = 0;
                    for (int c = 0; c < 8 && defined; ++c) {
                        const double f = corner(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
                        if (std::isnan(f)) defined = false;
                        v.corner[c] = f;
                        neg += negative(f) ? 1 : 0;
                    }
                    if (!defined || neg == 0 || neg == 8) continue;
                    v.coord = {static_cast<std::int32_t>(b[0] * B + x), static_cast<std::int32_t>(b[1] * B + y),
                               static_cast<std::int32_t>(b[2] * B + z)};
                    out.push_back(v);
                }
    });
    // Bricks are sorted by packed key and voxels inside each brick were
    // visited in (x, y, z) order, which is not global lexicographic order.
    for (auto& p : per) grid.voxels.insert(grid.voxels.end(), p.begin(), p.end());
    std::sort(grid.voxels.begin(), grid.voxels.end(),
              [](const ActiveVoxel& a, const ActiveVoxel& b) { return a.coord < b.coord; });
    return grid;
}

struct EdgeIntersection {
    Vec3 position = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    int iterations = 0;
};

/// Root of f on the segment [a, b], whose endpoint values fa and fb have
/// opposite signs. Bisection runs until the bracket is shorter than `tol` or
/// after `max_iter` halvings, then interpolates linearly inside the bracket.
/// If f is undefined at a midpoint the current bracket is interpolated. The
/// normal is grad f normalized; when that vanishes it is the edge direction
/// pointing toward the positive endpoint.
template <ImplicitField Field>
EdgeIntersection edge_root(const Field& field, Vec3 a, Vec3 b, double fa, double fb, double tol, int max_iter = 32,
                           std::span<const std::uint32_t> candidates = {}) {
    using dc_detail::negative;
    if (negative(fa) == negative(fb)) throw Error("edge_root: endpoint values do not bracket a root");
    const Vec3 dir = (negative(fa) ? (b - a) : (a - b)).normalized();
    std::vector<std::uint32_t> own;
    if (candidates.empty()) {
        AABB box;
        box.extend(a);
        box.extend(b);
        own = field.gather(box);
        candidates = own;
    }
    EdgeIntersection out;
    while (out.iterations < max_iter && (b - a).norm() > tol) {
        const Vec3 mid = 0.5 * (a + b);
        const auto fm = field.value(mid, candidates);
        if (!fm) break;
        ++out.iterations;
        if (*fm == 0.0) {
            a = b = mid;
            fa = fb = 0.0;
            break;
        }
        if (negative(*fm) == negative(fa)) {
            a = mid;
            fa = *fm;
        } else {
            b = mid;
            fb = *fm;
        }
    }
    const double denom = fa - fb;
    const double t = denom != 0.0 ? std::clamp(fa / denom, 0.0, 1.0) : 0.5;
    out.position = a + t * (b - a);

    out.normal = dir;
    std::optional<FieldSample> s;
    if constexpr (requires { field.sample(out.position, candidates); }) s = field.sample(out.position, candidates);
    else s = field.sample(out.position);
    if (s) {
        const double g = s->gradient.norm();
        if (g > 1e-300 && std::isfinite(g)) out.normal = s->gradient / g;
    }
    return out;
}

/// Minimizer of sum_j ((v - q_j) . n_j)^2 closest to the centroid of the q_j.
/// Directions along which the quadric has (relatively) no curvature are left
/// at the centroid, so coplanar input projects the centroid onto the plane.
inline Vec3 place_vertex(std::span<const EdgeIntersection> xs, double rank_tol = 1e-3, const AABB* clamp_box = nullptr) {
    if (xs.empty()) throw Error("place_vertex: no intersections");
    Vec3 centroid = Vec3::Zero();
    for (const auto& x : xs) centroid += x.position;
    centroid /= static_cast<double>(xs.size());
    Mat3 ata = Mat3::Zero();
    Vec3 atb = Vec3::Zero();
    for (const auto& x : xs) {
        ata.noalias() += x.normal * x.normal.transpose();
        atb += x.normal * x.normal.dot(x.position - centroid);
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(ata);
    const double cutoff = rank_tol * static_cast<double>(xs.size());
    Vec3 offset = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
        const double lambda = eig.eigenvalues()[k];
        if (lambda <= cutoff) continue;
        const Vec3 v = eig.eigenvectors().col(k);
        offset += v * (v.dot(atb) / lambda);
    }
    Vec3 p = centroid + offset;
    if (clamp_box) p = p.cwiseMax(clamp_box->lo).cwiseMin(clamp_box->hi);
    return p;
}

/// One sign-change lattice edge, keyed by its lower corner and axis.
struct SignEdge {
    LatticeCoord lower;
    int axis = 0;
    double f_lower = 0.0;
    double f_upper = 0.0;
    EdgeIntersection hit;

    auto key() const { return std::tie(lower, axis); }
};

namespace dc_detail {

/// Corner index pairs of the 12 voxel edges, grouped by axis.
inline constexpr std::array<std::array<int, 3>, 12> kEdges{{
    {0, 1, 0}, {2, 3, 0}, {4, 5, 0}, {6, 7, 0},
    {0, 2, 1}, {1, 3, 1}, {4, 6, 1}, {5, 7, 1},
    {0, 4, 2}, {1, 5, 2}, {2, 6, 2}, {3, 7, 2},
}};

inline LatticeCoord corner_coord(const LatticeCoord& v, int c) {
    return {v[0] + (c & 1), v[1] + ((c >> 1) & 1), v[2] + ((c >> 2) & 1)};
}

}  // namespace dc_detail

/// Unique sign-change edges of the active voxels, sorted, with roots found.
template <ImplicitField Field>
std::vector<SignEdge> find_edge_roots(const Field& field, const VoxelGrid& grid, const DcOptions& opt = {}) {
    using namespace dc_detail;
    std::vector<SignEdge> edges;
    for (const auto& v : grid.voxels)
        for (const auto& e : kEdges) {
            const double fa = v.corner[e[0]], fb = v.corner[e[1]];
            if (negative(fa) == negative(fb)) continue;
            SignEdge s;
            s.lower = corner_coord(v.coord, e[0]);
            s.axis = e[2];
            s.f_lower = fa;
            s.f_upper = fb;
            edges.push_back(s);
        }
    std::sort(edges.begin(), edges.end(), [](const SignEdge& a, const SignEdge& b) { return a.key() < b.key(); });
    edges.erase(std::unique(edges.begin(), edges.end(), [](const SignEdge& a, const SignEdge& b) { return a.key() == b.key(); }),
                edges.end());
    // Edges are grouped by the brick of their lower corner; each group
    // gathers candidates once and narrows them per edge.
    const std::int64_t B = kBrick;
    std::vector<std::pair<std::uint64_t, std::uint32_t>> by_brick(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto& l = edges[i].lower;
        by_brick[i] = {pack(floor_div(l[0], B), floor_div(l[1], B), floor_div(l[2], B)), static_cast<std::uint32_t>(i)};
    }
    std::sort(by_brick.begin(), by_brick.end());
    std::vector<std::size_t> group_start;
    for (std::size_t i = 0; i < by_brick.size(); ++i)
        if (i == 0 || by_brick[i].first != by_brick[i - 1].first) group_start.push_back(i);
    group_start.push_back(by_brick.size());

    const double tol = opt.tol_factor * grid.width;
    const auto centers = field.centers();
    const auto radii = field.radii();
    parallel_for(group_start.size() - 1, opt.threads, [&](std::size_t g) {
        const auto b = unpack(by_brick[group_start[g]].first);
        AABB box;
        box.lo = grid.corner_position(b[0] * B, b[1] * B, b[2] * B);
        box.hi = grid.corner_position((b[0] + 1) * B, (b[1] + 1) * B, (b[2] + 1) * B);
        const auto cand = field.gather(box);
        std::vector<std::uint32_t> local;
        for (std::size_t k = group_start[g]; k < group_start[g + 1]; ++k) {
            auto& e = edges[by_brick[k].second];
            auto up = e.lower;
            ++up[e.axis];
            const Vec3 a = grid.corner_position(e.lower[0], e.lower[1], e.lower[2]);
            const Vec3 c = grid.corner_position(up[0], up[1], up[2]);
            AABB ebox;
            ebox.extend(a);
            ebox.extend(c);
            local.clear();
            for (auto j : cand)
                if (PointOctree::box_sq_distance(ebox, centers[j]) < radii[j] * radii[j]) local.push_back(j);
            e.hit = edge_root(field, a, c, e.f_lower, e.f_upper, tol, opt.max_bisections, local);
        }
    });
    return edges;
}

inline std::int64_t find_edge(std::span<const SignEdge> edges, const LatticeCoord& lower, int axis) {
    auto it = std::lower_bound(edges.begin(), edges.end(), std::tie(lower, axis),
                               [](const SignEdge& e, const auto& key) { return e.key() < key; });
    if (it == edges.end() || it->lower != lower || it->axis != axis) return -1;
    return it - edges.begin();
}

struct DcVertices {
    std::vector<Vec3> positions;  // one per active voxel, same order
    std::vector<Vec3> normals;
};

inline DcVertices place_vertices(const VoxelGrid& grid, std::span<const SignEdge> edges, const DcOptions& opt = {}) {
    using namespace dc_detail;
    DcVertices out;
    out.positions.resize(grid.voxels.size());
    out.normals.resize(grid.voxels.size());
    parallel_for(grid.voxels.size(), opt.threads, [&](std::size_t i) {
        const auto& v = grid.voxels[i];
        std::array<EdgeIntersection, 12> hits;
        std::size_t k = 0;
        Vec3 nsum = Vec3::Zero();
        for (const auto& e : kEdges) {
            if (negative(v.corner[e[0]]) == negative(v.corner[e[1]])) continue;
            const auto idx = find_edge(edges, corner_coord(v.coord, e[0]), e[2]);
            if (idx < 0) throw Error("internal: sign-change edge missing from the edge table");
            hits[k++] = edges[static_cast<std::size_t>(idx)].hit;
            nsum += hits[k - 1].normal;
        }
        const AABB box = grid.voxel_box(v.coord);
        out.positions[i] = place_vertex(std::span(hits.data(), k), opt.qef_rank_tol, &box);
        out.normals[i] = nsum.norm() > 0.0 ? Vec3(nsum.normalized()) : hits[0].normal;
    });
    return out;
}

/// Quads around every sign-change edge whose four voxels are active, wound so
/// the face normal points toward increasing f. Unreferenced vertices are dropped.
inline QuadMesh emit_quads(const VoxelGrid& grid, std::span<const SignEdge> edges, const DcVertices& verts) {
    QuadMesh raw;
    raw.vertices = verts.positions;
    raw.vertex_normals = verts.normals;
    // Cyclic (b, c) offsets of the voxels around an edge along axis a, with
    // (a, b, c) a cyclic permutation of (x, y, z); this winding faces +a.
    static constexpr std::array<std::array<int, 2>, 4> ring{{{-1, -1}, {0, -1}, {0, 0}, {-1, 0}}};
    for (const auto& e : edges) {
        const int a = e.axis, b = (a + 1) % 3, c = (a + 2) % 3;
        std::array<std::uint32_t, 4> q;
        bool complete = true;
        for (int k = 0; k < 4 && complete; ++k) {
            LatticeCoord vc = e.lower;
            vc[b] += ring[k][0];
            vc[c] += ring[k][1];
            const auto idx = grid.find(vc);
            if (idx < 0) complete = false;
            else q[k] = static_cast<std::uint32_t>(idx);
        }
        if (!complete) continue;
        if (!(e.f_upper > e.f_lower)) std::reverse(q.begin(), q.end());
        raw.quads.push_back(q);
    }
    std::vector<char> keep(raw.quads.size(), 1);
    return filter_faces(raw, keep);
}

struct DcStats {
    std::size_t bricks = 0;
    std::size_t corner_samples = 0;
    std::size_t active_voxels = 0;
    std::size_t sign_edges = 0;
    std::size_t quads = 0;
};

template <ImplicitField Field>
QuadMesh extract_isosurface(const Field& field, const DcOptions& opt = {}, DcStats* stats = nullptr) {
    const VoxelGrid grid = collect_active_voxels(field, opt);
    const auto edges = find_edge_roots(field, grid, opt);
    const auto verts = place_vertices(grid, edges, opt);
    QuadMesh mesh = emit_quads(grid, edges, verts);
    if (stats) {
        stats->bricks = grid.bricks;
        stats->corner_samples = grid.corner_samples;
        stats->active_voxels = grid.voxels.size();
        stats->sign_edges = edges.size();
        stats->quads = mesh.quads.size();
    }
    return mesh;
}

}  // namespace hrbf
