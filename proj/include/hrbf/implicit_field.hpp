#pragma once

/// \file implicit_field.hpp
/// f(x) = sum_j a_j phi_j(x) - <b_j, grad phi_j(x)> over compactly supported
/// Wendland kernels. The quasi model is the a_j = 0 special case.

#include "hrbf/csrbf_kernel.hpp"
#include "hrbf/spatial_index.hpp"
#include "hrbf/types.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <vector>

namespace hrbf {

struct FieldSample {
    double value = 0.0;
    Vec3 gradient = Vec3::Zero();
};

/// Anything the isosurface extractor can contour. The field is defined only
/// inside the union of its support balls. `gather(box)` returns the centers
/// whose support meets the box, and the `(x, candidates)` overloads evaluate
/// from such a list; both evaluation paths must agree bit for bit.
template <class F>
concept ImplicitField = requires(const F& f, const Vec3& x, const AABB& box, std::span<const std::uint32_t> cand) {
    { f.value(x) } -> std::same_as<std::optional<double>>;
    { f.sample(x) } -> std::same_as<std::optional<FieldSample>>;
    { f.value(x, cand) } -> std::same_as<std::optional<double>>;
    { f.gather(box) } -> std::same_as<std::vector<std::uint32_t>>;
    { f.centers() } -> std::convertible_to<std::span<const Vec3>>;
    { f.radii() } -> std::convertible_to<std::span<const double>>;
};

/// Contributions are always accumulated in ascending center index, so the
/// value at a point does not depend on how the caller found its neighbors.
class HrbfField {
public:
    /// `a` may be empty, meaning all scalar coefficients are zero.
    HrbfField(std::vector<Vec3> centers, std::vector<double> rho, std::vector<double> a, std::vector<Vec3> b)
        : centers_(std::move(centers)), rho_(std::move(rho)), a_(std::move(a)), b_(std::move(b)),
          index_(centers_) {
        if (rho_.size() != centers_.size() || b_.size() != centers_.size() || (!a_.empty() && a_.size() != centers_.size()))
            throw Error("field coefficient arrays disagree in length");
        rho_max_ = *std::max_element(rho_.begin(), rho_.end());
    }

    std::span<const Vec3> centers() const { return centers_; }
    std::span<const double> radii() const { return rho_; }
    double rho_max() const { return rho_max_; }
    const PointOctree& index() const { return index_; }

    /// Centers whose support ball intersects `box`, ascending.
    std::vector<std::uint32_t> gather(const AABB& box) const {
        std::vector<std::uint32_t> out;
        const double reach = rho_max_ + 0.5 * box.diagonal();
        index_.for_each_in_radius(box.center(), reach, [&](std::uint32_t j, double) {
            if (PointOctree::box_sq_distance(box, centers_[j]) < rho_[j] * rho_[j]) out.push_back(j);
        });
        std::sort(out.begin(), out.end());
        return out;
    }

    std::optional<double> value(const Vec3& x) const { return value(x, gather_point(x)); }
    std::optional<FieldSample> sample(const Vec3& x) const { return sample(x, gather_point(x)); }

    std::optional<double> value(const Vec3& x, std::span<const std::uint32_t> candidates) const {
        bool covered = false;
        double f = 0.0;
        for (std::uint32_t j : candidates) {
            const Vec3 d = x - centers_[j];
            const double r2 = d.squaredNorm();
            if (r2 >= rho_[j] * rho_[j]) continue;
            covered = true;
            f += term(j, d, r2);
        }
        if (!covered) return std::nullopt;
        return f;
    }

    std::optional<FieldSample> sample(const Vec3& x, std::span<const std::uint32_t> candidates) const {
        bool covered = false;
        FieldSample s;
        for (std::uint32_t j : candidates) {
            const Vec3 d = x - centers_[j];
            const double r2 = d.squaredNorm();
            Vec3 grad;
            Mat3 hess;
            if (!csrbf::gradient_hessian(d, r2, rho_[j], grad, &hess)) continue;
            covered = true;
            s.gradient.noalias() -= hess * b_[j];
            if (!a_.empty()) s.gradient += a_[j] * grad;
        }
        if (!covered) return std::nullopt;
        s.value = *value(x, candidates);
        return s;
    }

private:
    /// Contribution of center j at offset d = x - c_j, |d|^2 = r2 < rho_j^2.
    double term(std::uint32_t j, const Vec3& d, double r2) const {
        const double inv_rho = 1.0 / rho_[j];
        const double t = std::sqrt(r2) * inv_rho;
        const double u = 1.0 - t;
        const double u3 = u * u * u;
        // -<b, grad phi> with grad phi = -(20/rho^2) u^3 d
        double f = 20.0 * inv_rho * inv_rho * u3 * b_[j].dot(d);
        if (!a_.empty()) f += a_[j] * u3 * u * (4.0 * t + 1.0);
        return f;
    }

    std::vector<std::uint32_t> gather_point(const Vec3& x) const {
        std::vector<std::uint32_t> out;
        index_.for_each_in_radius(x, rho_max_, [&](std::uint32_t j, double r2) {
            if (r2 < rho_[j] * rho_[j]) out.push_back(j);
        });
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<Vec3> centers_;
    std::vector<double> rho_;
    std::vector<double> a_;
    std::vector<Vec3> b_;
    PointOctree index_;
    double rho_max_ = 0.0;
};

static_assert(ImplicitField<HrbfField>);

}  // namespace hrbf
