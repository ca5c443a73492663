#pragma once

/// \file types.hpp
/// Value types shared by every stage of the reconstruction pipeline.

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrbf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    /// 1-based line number, 0 when not tied to a line (binary payloads).
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct AABB {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void extend(const Vec3& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    bool empty() const { return (lo.array() > hi.array()).any(); }
    Vec3 extent() const { return empty() ? Vec3::Zero() : Vec3(hi - lo); }
    Vec3 center() const { return 0.5 * (lo + hi); }
    double diagonal() const { return extent().norm(); }
    bool contains(const Vec3& p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
};

/// Point (i, j, k) of the lattice with spacing w through `origin`. Every
/// lattice consumer goes through here so equal indices give equal bits.
inline Vec3 lattice_point(const Vec3& origin, double w, std::int64_t i, std::int64_t j, std::int64_t k) {
    return origin + w * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
}

/// Oriented point samples: positions with unit normals.
struct HermitePointSet {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    AABB bbox;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    void push_back(const Vec3& p, const Vec3& n) {
        points.push_back(p);
        normals.push_back(n);
        bbox.extend(p);
    }

    void recompute_bbox() {
        bbox = AABB{};
        for (const auto& p : points) bbox.extend(p);
    }
};

/// Polygon mesh made of quads, or of triangles after triangulation.
struct QuadMesh {
    std::vector<Vec3> vertices;
    std::vector<Vec3> vertex_normals;
    std::vector<std::array<std::uint32_t, 4>> quads;
    std::vector<std::array<std::uint32_t, 3>> triangles;

    std::size_t face_count() const { return quads.size() + triangles.size(); }
    bool empty() const { return face_count() == 0; }
};

/// Fan-splits quads into triangles; existing triangles are kept.
inline std::vector<std::array<std::uint32_t, 3>> triangulate(const QuadMesh& mesh) {
    std::vector<std::array<std::uint32_t, 3>> tris = mesh.triangles;
    tris.reserve(tris.size() + 2 * mesh.quads.size());
    for (const auto& q : mesh.quads) {
        tris.push_back({q[0], q[1], q[2]});
        tris.push_back({q[0], q[2], q[3]});
    }
    return tris;
}

}  // namespace hrbf
