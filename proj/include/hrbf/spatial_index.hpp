#pragma once

/// \file spatial_index.hpp
/// Point octree used for support-size tuning and for every radius / kNN
/// query in the pipeline. Immutable after construction, so queries may run
/// concurrently.

#include "hrbf/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <span>
#include <vector>

namespace hrbf {

struct Neighbor {
    std::uint32_t index;
    double distance;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

class PointOctree {
public:
    static constexpr std::size_t kDefaultLeafCapacity = 16;
    static constexpr int kMaxDepth = 21;

    struct Node {
        AABB box;
        std::int32_t first_child = -1;  // children are contiguous
        std::uint8_t child_count = 0;
        std::uint32_t begin = 0, end = 0;  // range into the permuted index array
        int depth = 0;

        bool is_leaf() const { return child_count == 0; }
        std::size_t size() const { return end - begin; }
    };

    PointOctree() = default;

    explicit PointOctree(std::span<const Vec3> points, std::size_t leaf_capacity = kDefaultLeafCapacity,
                         int max_depth = kMaxDepth)
        : points_(points.begin(), points.end()), leaf_capacity_(leaf_capacity), max_depth_(max_depth) {
        if (points_.empty()) throw Error("octree needs at least one point");
        if (leaf_capacity_ < 1) throw Error("leaf capacity must be >= 1");
        if (max_depth_ < 0 || max_depth_ > kMaxDepth) throw Error("octree depth cap out of range");
        order_.resize(points_.size());
        for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
        AABB box;
        for (const auto& p : points_) box.extend(p);
        nodes_.push_back(Node{box, -1, 0, 0, static_cast<std::uint32_t>(points_.size()), 0});
        build(0);
        packed_.reserve(points_.size());
        for (auto i : order_) packed_.push_back(points_[i]);
    }

    std::size_t size() const { return points_.size(); }
    std::size_t leaf_capacity() const { return leaf_capacity_; }
    const std::vector<Vec3>& points() const { return points_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const AABB& bounds() const { return nodes_.front().box; }

    /// Point indices stored in a leaf, ascending.
    std::span<const std::uint32_t> leaf_points(const Node& leaf) const {
        return {order_.data() + leaf.begin, leaf.size()};
    }

    std::vector<const Node*> leaves() const {
        std::vector<const Node*> out;
        for (const auto& n : nodes_)
            if (n.is_leaf()) out.push_back(&n);
        return out;
    }

    std::vector<double> leaf_diagonals() const {
        std::vector<double> out;
        for (const auto& n : nodes_)
            if (n.is_leaf()) out.push_back(n.box.diagonal());
        return out;
    }

    /// Calls fn(index, squared_distance) for every point with |p - c| < radius.
    /// Visit order follows the tree layout, not the index order.
    template <class Fn>
    void for_each_in_radius(const Vec3& c, double radius, Fn&& fn) const {
        const double r2 = radius * radius;
        std::uint32_t stack[8 * (kMaxDepth + 2)];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            const Node& n = nodes_[stack[--top]];
            if (box_sq_distance(n.box, c) >= r2) continue;
            if (n.is_leaf()) {
                for (std::uint32_t k = n.begin; k < n.end; ++k) {
                    const double d2 = (packed_[k] - c).squaredNorm();
                    if (d2 < r2) fn(order_[k], d2);
                }
            } else {
                for (int ch = n.child_count - 1; ch >= 0; --ch) stack[top++] = static_cast<std::uint32_t>(n.first_child + ch);
            }
        }
    }

    /// Indices with |p - center| < radius, ascending.
    std::vector<std::uint32_t> radius_query(const Vec3& center, double radius) const {
        std::vector<std::uint32_t> out;
        for_each_in_radius(center, radius, [&](std::uint32_t i, double) { out.push_back(i); });
        std::sort(out.begin(), out.end());
        return out;
    }

    std::size_t radius_count(const Vec3& center, double radius) const {
        std::size_t count = 0;
        for_each_in_radius(center, radius, [&](std::uint32_t, double) { ++count; });
        return count;
    }

    /// k nearest points sorted by (distance, index). `exclude` removes one
    /// point index from consideration, typically the query point itself.
    std::vector<Neighbor> knn_query(const Vec3& center, std::size_t k,
                                    std::optional<std::uint32_t> exclude = std::nullopt) const {
        const std::size_t available = points_.size() - (exclude && *exclude < points_.size() ? 1 : 0);
        if (k < 1 || k > available)
            throw Error("knn_query: k=" + std::to_string(k) + " exceeds available points (" + std::to_string(available) + ")");

        using Entry = std::pair<double, std::uint32_t>;  // (squared distance, index); max-heap keeps the worst on top
        std::priority_queue<Entry> best;
        using NodeEntry = std::pair<double, std::uint32_t>;
        std::priority_queue<NodeEntry, std::vector<NodeEntry>, std::greater<>> frontier;
        frontier.emplace(box_sq_distance(nodes_[0].box, center), 0u);
        while (!frontier.empty()) {
            const auto [nd2, ni] = frontier.top();
            frontier.pop();
            if (best.size() == k && nd2 > best.top().first) break;
            const Node& n = nodes_[ni];
            if (n.is_leaf()) {
                for (std::uint32_t s = n.begin; s < n.end; ++s) {
                    const std::uint32_t i = order_[s];
                    if (exclude && i == *exclude) continue;
                    const Entry e{(packed_[s] - center).squaredNorm(), i};
                    if (best.size() < k) {
                        best.push(e);
                    } else if (e < best.top()) {
                        best.pop();
                        best.push(e);
                    }
                }
            } else {
                for (int ch = 0; ch < n.child_count; ++ch) {
                    const auto ci = static_cast<std::uint32_t>(n.first_child + ch);
                    frontier.emplace(box_sq_distance(nodes_[ci].box, center), ci);
                }
            }
        }
        std::vector<Neighbor> out(best.size());
        for (std::size_t j = out.size(); j-- > 0;) {
            out[j] = {best.top().second, std::sqrt(best.top().first)};
            best.pop();
        }
        return out;
    }

    static double box_sq_distance(const AABB& b, const Vec3& p) {
        const Vec3 d = (b.lo - p).cwiseMax(p - b.hi).cwiseMax(Vec3::Zero());
        return d.squaredNorm();
    }

private:
    void build(std::uint32_t root) {
        std::vector<std::uint32_t> pending{root};
        while (!pending.empty()) {
            const std::uint32_t ni = pending.back();
            pending.pop_back();
            Node node = nodes_[ni];
            if (node.size() <= leaf_capacity_ || node.depth >= max_depth_) continue;

            const Vec3 mid = node.box.center();
            auto octant = [&](std::uint32_t i) {
                const Vec3& p = points_[i];
                return (p.x() >= mid.x() ? 1 : 0) | (p.y() >= mid.y() ? 2 : 0) | (p.z() >= mid.z() ? 4 : 0);
            };
            // Counting sort by octant keeps indices ascending inside each child.
            std::array<std::uint32_t, 9> start{};
            for (std::uint32_t k = node.begin; k < node.end; ++k) ++start[octant(order_[k]) + 1];
            for (int o = 0; o < 8; ++o) start[o + 1] += start[o];
            std::vector<std::uint32_t> sorted(node.size());
            auto cursor = start;
            for (std::uint32_t k = node.begin; k < node.end; ++k) sorted[cursor[octant(order_[k])]++] = order_[k];
            std::copy(sorted.begin(), sorted.end(), order_.begin() + node.begin);

            const auto first = static_cast<std::int32_t>(nodes_.size());
            std::uint8_t count = 0;
            for (int o = 0; o < 8; ++o) {
                if (start[o + 1] == start[o]) continue;
                AABB box;
                for (int a = 0; a < 3; ++a) {
                    const bool upper = (o >> a) & 1;
                    box.lo[a] = upper ? mid[a] : node.box.lo[a];
                    box.hi[a] = upper ? node.box.hi[a] : mid[a];
                }
                nodes_.push_back(Node{box, -1, 0, node.begin + start[o], node.begin + start[o + 1], node.depth + 1});
                ++count;
            }
            nodes_[ni].first_child = first;
            nodes_[ni].child_count = count;
            for (int c = count - 1; c >= 0; --c) pending.push_back(static_cast<std::uint32_t>(first + c));
        }
    }

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Vec3> packed_;  // points_ permuted into leaf order
    std::vector<Node> nodes_;
    std::size_t leaf_capacity_ = kDefaultLeafCapacity;
    int max_depth_ = kMaxDepth;
};

}  // namespace hrbf
