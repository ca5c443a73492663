#pragma once

/// \file shapes.hpp
/// Synthetic oriented samples and reference meshes of analytic shapes.

#include "hrbf/types.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <utility>

namespace hrbf::shapes {

/// Uniform random samples of the sphere |x - c| = r with outward normals.
inline HermitePointSet sample_sphere(std::size_t n, std::uint64_t seed, double radius = 1.0, const Vec3& center = Vec3::Zero()) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    HermitePointSet ps;
    while (ps.size() < n) {
        Vec3 d(g(rng), g(rng), g(rng));
        const double len = d.norm();
        if (len < 1e-12) continue;
        d /= len;
        ps.push_back(center + radius * d, d);
    }
    return ps;
}

/// Deterministic near-uniform sphere samples on a Fibonacci spiral.
inline HermitePointSet fibonacci_sphere(std::size_t n, double radius = 1.0) {
    HermitePointSet ps;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * static_cast<double>(i);
        const Vec3 d(r * std::cos(phi), r * std::sin(phi), z);
        ps.push_back(radius * d, d);
    }
    return ps;
}

/// Area-uniform samples of a torus around the z axis with tube radius r < R.
inline HermitePointSet sample_torus(std::size_t n, std::uint64_t seed, double R = 0.7, double r = 0.25) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    HermitePointSet ps;
    while (ps.size() < n) {
        const double u = 2.0 * std::numbers::pi * uni(rng);
        const double v = 2.0 * std::numbers::pi * uni(rng);
        // Accept with probability proportional to the local area element.
        if (uni(rng) * (R + r) > R + r * std::cos(v)) continue;
        const Vec3 nrm(std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v));
        const Vec3 p((R + r * std::cos(v)) * std::cos(u), (R + r * std::cos(v)) * std::sin(u), r * std::sin(v));
        ps.push_back(p, nrm);
    }
    return ps;
}

/// Sphere whose x > 0 half is sampled `ratio` times more densely than the
/// x <= 0 half; `n_sparse` points land on the sparse half.
inline HermitePointSet two_density_sphere(std::size_t n_sparse, double ratio, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    const auto n_dense = static_cast<std::size_t>(std::llround(static_cast<double>(n_sparse) * ratio));
    HermitePointSet ps;
    std::size_t dense = 0, sparse = 0;
    while (dense < n_dense || sparse < n_sparse) {
        Vec3 d(g(rng), g(rng), g(rng));
        const double len = d.norm();
        if (len < 1e-12) continue;
        d /= len;
        if (d.x() > 0.0) {
            if (dense == n_dense) continue;
            ++dense;
        } else {
            if (sparse == n_sparse) continue;
            ++sparse;
        }
        ps.push_back(d, d);
    }
    return ps;
}

/// Subdivided icosahedron projected onto the sphere, outward winding.
inline QuadMesh icosphere(int subdivisions, double radius = 1.0) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<std::array<std::uint32_t, 3>> f{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                                {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                                {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                                {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            const auto id = static_cast<std::uint32_t>(v.size() - 1);
            mid.emplace(key, id);
            return id;
        };
        std::vector<std::array<std::uint32_t, 3>> next;
        next.reserve(f.size() * 4);
        for (const auto& tri : f) {
            const auto a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], a, c});
            next.push_back({tri[1], b, a});
            next.push_back({tri[2], c, b});
            next.push_back({a, b, c});
        }
        f = std::move(next);
    }
    QuadMesh mesh;
    for (const auto& p : v) {
        mesh.vertices.push_back(radius * p);
        mesh.vertex_normals.push_back(p);
    }
    mesh.triangles = std::move(f);
    return mesh;
}

}  // namespace hrbf::shapes
