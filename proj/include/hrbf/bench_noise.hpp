#pragma once

/// \file bench_noise.hpp
/// Noise-robustness benchmarking: normal-direction noise injection, PCA normal
/// re-estimation, and sampled point-to-mesh distances.

#include "hrbf/parallel.hpp"
#include "hrbf/spatial_index.hpp"
#include "hrbf/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <variant>
#include <vector>

namespace hrbf {

struct NoiseSpec {
    double delta_percent = 0.0;
    /// Bounding-box diagonal of the input; 0 means "compute it".
    double diagonal = 0.0;
    std::uint64_t seed = 0;
};

struct NoisyPointSet {
    HermitePointSet points;  // normals are the original ones
    std::vector<std::uint32_t> displaced;  // sorted
    std::vector<double> magnitude;         // per displaced index
    double sigma = 0.0;
    double cap = 0.0;
};

/// Moves ceil(delta/100 * n) distinct points along their own normals by
/// |N(0, sigma^2)| with sigma = delta d / 3000, clamped to [0, delta d / 1000].
inline NoisyPointSet inject_noise(const HermitePointSet& ps, const NoiseSpec& spec) {
    if (!(spec.delta_percent >= 0.0 && spec.delta_percent <= 100.0)) throw Error("noise level must lie in [0, 100]");
    NoisyPointSet out;
    out.points = ps;
    const std::size_t n = ps.size();
    const double d = spec.diagonal > 0.0 ? spec.diagonal : ps.bbox.diagonal();
    out.cap = spec.delta_percent * d / 1000.0;
    out.sigma = spec.delta_percent * d / 3000.0;
    const auto n_g = static_cast<std::size_t>(std::ceil(spec.delta_percent / 100.0 * static_cast<double>(n) - 1e-9));
    if (n_g == 0 || n == 0) return out;

    std::mt19937_64 rng(spec.seed);
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = 0; i < n_g; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    out.displaced.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_g, n)));
    std::sort(out.displaced.begin(), out.displaced.end());

    std::normal_distribution<double> gauss(0.0, out.sigma);
    out.magnitude.reserve(out.displaced.size());
    for (auto j : out.displaced) {
        const double mag = std::min(std::abs(gauss(rng)), out.cap);
        out.magnitude.push_back(mag);
        out.points.points[j] += mag * ps.normals[j];
    }
    out.points.recompute_bbox();
    return out;
}

/// Orientation hint for PCA normals: one reference normal per point, or a
/// viewpoint the normals should face.
using OrientationReference = std::variant<std::span<const Vec3>, Vec3>;

struct PcaNormals {
    HermitePointSet points;
    std::vector<char> low_confidence;  // neighborhood close to collinear
    std::size_t degenerate = 0;        // all neighbors coincident; reference kept
};

inline PcaNormals estimate_normals_pca(std::span<const Vec3> points, const OrientationReference& reference,
                                       std::size_t neighbors = 6, unsigned threads = 1) {
    const std::size_t n = points.size();
    if (n < neighbors + 1) throw Error("PCA normals need at least " + std::to_string(neighbors + 1) + " points");
    const auto* ref_normals = std::get_if<std::span<const Vec3>>(&reference);
    if (ref_normals && ref_normals->size() != n) throw Error("one reference normal per point required");

    const std::vector<Vec3> pts(points.begin(), points.end());
    PointOctree index(pts);
    PcaNormals out;
    std::vector<Vec3> normals(n);
    out.low_confidence.assign(n, 0);
    std::vector<char> degenerate(n, 0);

    parallel_for(n, threads, [&](std::size_t i) {
        const Vec3 ref = ref_normals ? Vec3((*ref_normals)[i]) : Vec3(std::get<Vec3>(reference) - pts[i]);
        const auto nb = index.knn_query(pts[i], neighbors, static_cast<std::uint32_t>(i));
        Vec3 mean = pts[i];
        for (const auto& e : nb) mean += pts[e.index];
        mean /= static_cast<double>(nb.size() + 1);
        Mat3 cov = (pts[i] - mean) * (pts[i] - mean).transpose();
        for (const auto& e : nb) cov.noalias() += (pts[e.index] - mean) * (pts[e.index] - mean).transpose();
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        const auto& ev = eig.eigenvalues();
        if (!(ev[2] > 0.0)) {
            degenerate[i] = 1;
            normals[i] = ref.norm() > 0.0 ? Vec3(ref.normalized()) : Vec3::UnitZ();
            return;
        }
        Vec3 nrm = eig.eigenvectors().col(0);
        if (ev[1] <= 1e-9 * ev[2]) out.low_confidence[i] = 1;
        if (nrm.dot(ref) < 0.0) nrm = -nrm;
        normals[i] = nrm;
    });
    for (std::size_t i = 0; i < n; ++i) {
        out.points.push_back(pts[i], normals[i]);
        out.degenerate += degenerate[i];
    }
    return out;
}

/// Closest point to p on triangle (a, b, c); region tests after Ericson.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Bounding-volume hierarchy over the triangles of a mesh (quads split).
class TriangleBvh {
public:
    explicit TriangleBvh(const QuadMesh& mesh) : vertices_(mesh.vertices), tris_(triangulate(mesh)) {
        if (tris_.empty()) throw Error("distance target mesh has no faces");
        order_.resize(tris_.size());
        std::iota(order_.begin(), order_.end(), 0u);
        centroid_.resize(tris_.size());
        for (std::size_t t = 0; t < tris_.size(); ++t)
            centroid_[t] = (v(t, 0) + v(t, 1) + v(t, 2)) / 3.0;
        build(0, tris_.size());
    }

    std::size_t triangle_count() const { return tris_.size(); }

    /// Distance from p to the nearest triangle.
    double distance(const Vec3& p) const {
        double best = std::numeric_limits<double>::infinity();
        std::vector<std::uint32_t> stack{0};
        while (!stack.empty()) {
            const Node& nd = nodes_[stack.back()];
            stack.pop_back();
            if (PointOctree::box_sq_distance(nd.box, p) >= best) continue;
            if (nd.count > 0) {
                for (std::uint32_t k = nd.first; k < nd.first + nd.count; ++k) {
                    const auto t = order_[k];
                    best = std::min(best, (closest_point_on_triangle(p, v(t, 0), v(t, 1), v(t, 2)) - p).squaredNorm());
                }
                continue;
            }
            const double dl = PointOctree::box_sq_distance(nodes_[nd.left].box, p);
            const double dr = PointOctree::box_sq_distance(nodes_[nd.right].box, p);
            // Nearer child on top of the stack.
            if (dl < dr) {
                stack.push_back(nd.right);
                stack.push_back(nd.left);
            } else {
                stack.push_back(nd.left);
                stack.push_back(nd.right);
            }
        }
        return std::sqrt(best);
    }

private:
    struct Node {
        AABB box;
        std::uint32_t left = 0, right = 0;
        std::uint32_t first = 0, count = 0;  // leaf when count > 0
    };

    const Vec3& v(std::size_t t, int k) const { return vertices_[tris_[t][k]]; }

    std::uint32_t build(std::size_t begin, std::size_t end) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.emplace_back();
        AABB box, cbox;
        for (std::size_t k = begin; k < end; ++k) {
            for (int c = 0; c < 3; ++c) box.extend(v(order_[k], c));
            cbox.extend(centroid_[order_[k]]);
        }
        nodes_[id].box = box;
        if (end - begin <= 4) {
            nodes_[id].first = static_cast<std::uint32_t>(begin);
            nodes_[id].count = static_cast<std::uint32_t>(end - begin);
            return id;
        }
        int axis = 0;
        cbox.extent().maxCoeff(&axis);
        const std::size_t mid = (begin + end) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::uint32_t a, std::uint32_t b) {
                             return centroid_[a][axis] < centroid_[b][axis] || (centroid_[a][axis] == centroid_[b][axis] && a < b);
                         });
        const auto l = build(begin, mid);
        const auto r = build(mid, end);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    std::vector<Vec3> vertices_;
    std::vector<std::array<std::uint32_t, 3>> tris_;
    std::vector<std::uint32_t> order_;
    std::vector<Vec3> centroid_;
    std::vector<Node> nodes_;
};

/// Area-weighted uniform samples on the surface of a mesh. `triangle_of`
/// receives the index into triangulate(mesh) each sample came from.
inline std::vector<Vec3> sample_surface(const QuadMesh& mesh, std::size_t count, std::uint64_t seed,
                                        std::vector<std::uint32_t>* triangle_of = nullptr) {
    const auto tris = triangulate(mesh);
    if (tris.empty()) throw Error("cannot sample an empty mesh");
    std::vector<double> cdf(tris.size());
    double total = 0.0;
    for (std::size_t t = 0; t < tris.size(); ++t) {
        const Vec3& a = mesh.vertices[tris[t][0]];
        total += 0.5 * (mesh.vertices[tris[t][1]] - a).cross(mesh.vertices[tris[t][2]] - a).norm();
        cdf[t] = total;
    }
    if (!(total > 0.0)) throw Error("cannot sample a mesh of zero area");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<Vec3> out;
    out.reserve(count);
    if (triangle_of) triangle_of->clear();
    for (std::size_t i = 0; i < count; ++i) {
        const double pick = uni(rng) * total;
        auto t = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin());
        t = std::min(t, tris.size() - 1);
        const double r1 = std::sqrt(uni(rng)), r2 = uni(rng);
        const Vec3& a = mesh.vertices[tris[t][0]];
        const Vec3& b = mesh.vertices[tris[t][1]];
        const Vec3& c = mesh.vertices[tris[t][2]];
        out.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
        if (triangle_of) triangle_of->push_back(static_cast<std::uint32_t>(t));
    }
    return out;
}

struct DistanceStats {
    double max = 0.0;
    double avg = 0.0;
    std::size_t samples = 0;
};

inline DistanceStats point_to_mesh_distance(std::span<const Vec3> samples, const TriangleBvh& target, unsigned threads = 1) {
    if (samples.empty()) throw Error("distance source is empty");
    std::vector<double> d(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) { d[i] = target.distance(samples[i]); });
    DistanceStats s;
    s.samples = d.size();
    for (double x : d) {
        s.max = std::max(s.max, x);
        s.avg += x;
    }
    s.avg /= static_cast<double>(d.size());
    return s;
}

inline DistanceStats surface_distance(const QuadMesh& from, const QuadMesh& to, std::size_t samples, std::uint64_t seed,
                                      unsigned threads = 1) {
    const TriangleBvh bvh(to);
    const auto pts = sample_surface(from, samples, seed);
    return point_to_mesh_distance(pts, bvh, threads);
}

/// Forward: ground truth to reconstruction. Backward: reconstruction to ground truth.
struct DistanceReport {
    DistanceStats forward;
    DistanceStats backward;
};

inline DistanceReport compare_meshes(const QuadMesh& ground_truth, const QuadMesh& reconstruction, std::size_t samples,
                                     std::uint64_t seed, unsigned threads = 1) {
    return {surface_distance(ground_truth, reconstruction, samples, seed, threads),
            surface_distance(reconstruction, ground_truth, samples, seed + 1, threads)};
}

}  // namespace hrbf
