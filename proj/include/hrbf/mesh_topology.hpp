#pragma once

/// \file mesh_topology.hpp
/// Edge incidence and connected components of polygon meshes.

#include "hrbf/types.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace hrbf {

/// Quads first, then triangles, as vertex index lists.
inline std::vector<std::vector<std::uint32_t>> mesh_faces(const QuadMesh& mesh) {
    std::vector<std::vector<std::uint32_t>> faces;
    faces.reserve(mesh.face_count());
    for (const auto& q : mesh.quads) faces.emplace_back(q.begin(), q.end());
    for (const auto& t : mesh.triangles) faces.emplace_back(t.begin(), t.end());
    return faces;
}

struct EdgeStats {
    std::size_t edges = 0;
    std::size_t boundary = 0;      // used by one face
    std::size_t non_manifold = 0;  // used by three or more faces
};

inline EdgeStats edge_stats(const QuadMesh& mesh) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (const auto& f : mesh_faces(mesh))
        for (std::size_t k = 0; k < f.size(); ++k) {
            const std::uint32_t a = f[k], b = f[(k + 1) % f.size()];
            edges.emplace_back(std::min(a, b), std::max(a, b));
        }
    std::sort(edges.begin(), edges.end());
    EdgeStats s;
    for (std::size_t i = 0; i < edges.size();) {
        std::size_t j = i;
        while (j < edges.size() && edges[j] == edges[i]) ++j;
        ++s.edges;
        if (j - i == 1) ++s.boundary;
        if (j - i >= 3) ++s.non_manifold;
        i = j;
    }
    return s;
}

inline std::size_t count_boundary_edges(const QuadMesh& mesh) { return edge_stats(mesh).boundary; }

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::uint32_t{0}); }

    std::uint32_t find(std::uint32_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    /// The smaller root wins so labels are reproducible.
    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent_[b] = a;
        else parent_[a] = b;
    }

private:
    std::vector<std::uint32_t> parent_;
};

/// Component label per face (faces sharing a vertex are connected), numbered
/// in order of first appearance.
inline std::vector<std::uint32_t> face_components(const QuadMesh& mesh, std::size_t* count = nullptr) {
    const auto faces = mesh_faces(mesh);
    UnionFind uf(mesh.vertices.size());
    for (const auto& f : faces)
        for (std::size_t k = 1; k < f.size(); ++k) uf.unite(f[0], f[k]);
    std::vector<std::int64_t> label_of_root(mesh.vertices.size(), -1);
    std::vector<std::uint32_t> labels(faces.size());
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const auto root = uf.find(faces[i][0]);
        if (label_of_root[root] < 0) label_of_root[root] = next++;
        labels[i] = static_cast<std::uint32_t>(label_of_root[root]);
    }
    if (count) *count = next;
    return labels;
}

inline std::size_t count_components(const QuadMesh& mesh) {
    std::size_t n = 0;
    face_components(mesh, &n);
    return n;
}

/// Keeps the faces whose flag is set and drops vertices no kept face uses.
/// Relative order of vertices and faces is preserved.
inline QuadMesh filter_faces(const QuadMesh& mesh, std::span<const char> keep_face) {
    QuadMesh out;
    std::vector<std::int64_t> remap(mesh.vertices.size(), -1);
    auto use = [&](std::uint32_t v) {
        if (remap[v] < 0) remap[v] = 0;
    };
    const std::size_t nq = mesh.quads.size();
    for (std::size_t i = 0; i < nq; ++i)
        if (keep_face[i])
            for (auto v : mesh.quads[i]) use(v);
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
        if (keep_face[nq + i])
            for (auto v : mesh.triangles[i]) use(v);
    const bool normals = mesh.vertex_normals.size() == mesh.vertices.size();
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (remap[v] < 0) continue;
        remap[v] = static_cast<std::int64_t>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
        if (normals) out.vertex_normals.push_back(mesh.vertex_normals[v]);
    }
    for (std::size_t i = 0; i < nq; ++i) {
        if (!keep_face[i]) continue;
        std::array<std::uint32_t, 4> q;
        for (int k = 0; k < 4; ++k) q[k] = static_cast<std::uint32_t>(remap[mesh.quads[i][k]]);
        out.quads.push_back(q);
    }
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        if (!keep_face[nq + i]) continue;
        std::array<std::uint32_t, 3> t;
        for (int k = 0; k < 3; ++k) t[k] = static_cast<std::uint32_t>(remap[mesh.triangles[i][k]]);
        out.triangles.push_back(t);
    }
    return out;
}

/// Drops connected components with fewer than `min_faces` faces, or fewer
/// than `min_fraction` times the face count of the largest component. The
/// largest component (earliest on ties) always survives.
inline QuadMesh remove_small_fragments(const QuadMesh& mesh, std::size_t min_faces, double min_fraction = 0.0) {
    std::size_t count = 0;
    const auto labels = face_components(mesh, &count);
    if (count <= 1) return mesh;
    std::vector<std::size_t> size(count, 0);
    for (auto l : labels) ++size[l];
    const auto largest = static_cast<std::size_t>(std::max_element(size.begin(), size.end()) - size.begin());
    const double floor = min_fraction * static_cast<double>(size[largest]);
    std::vector<char> keep(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t n = size[labels[i]];
        keep[i] = labels[i] == largest || (n >= min_faces && static_cast<double>(n) >= floor);
    }
    return filter_faces(mesh, keep);
}

}  // namespace hrbf
