#pragma once

/// \file csrbf_kernel.hpp
/// Wendland C2 kernel phi(t) = (1-t)^4 (4t+1) on t = r/rho, with closed-form
/// gradient and Hessian in Cartesian coordinates.

#include "hrbf/types.hpp"

#include <cmath>
#include <cstdint>

namespace hrbf::csrbf {

enum Want : std::uint8_t {
    kValue = 1u << 0,
    kGradient = 1u << 1,
    kHessian = 1u << 2,
    kAll = kValue | kGradient | kHessian,
};

struct KernelEval {
    double value = 0.0;
    Vec3 gradient = Vec3::Zero();
    Mat3 hessian = Mat3::Zero();
    double support = 0.0;
    bool inside_support = false;
};

/// Radial profile on t in [0, 1].
inline double profile(double t) {
    if (t >= 1.0) return 0.0;
    const double u = 1.0 - t;
    const double u2 = u * u;
    return u2 * u2 * (4.0 * t + 1.0);
}

namespace detail {

/// h += c d d^T, bitwise symmetric.
inline void add_outer(Mat3& h, double c, const Vec3& d) {
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            const double v = c * (d[i] * d[j]);
            h(i, j) += v;
            if (j != i) h(j, i) += v;
        }
}

}  // namespace detail

/// phi_rho centered at `center`, evaluated at x. Everything is exactly zero
/// for |x - center| >= rho.
inline KernelEval eval(const Vec3& center, double rho, const Vec3& x, std::uint8_t want = kAll) {
    KernelEval out;
    out.support = rho;
    const Vec3 d = x - center;
    const double r2 = d.squaredNorm();
    if (r2 >= rho * rho) return out;
    out.inside_support = true;

    const double r = std::sqrt(r2);
    const double inv_rho = 1.0 / rho;
    const double t = r * inv_rho;
    const double u = 1.0 - t;
    const double u2 = u * u;
    const double u3 = u2 * u;
    if (want & kValue) out.value = u2 * u2 * (4.0 * t + 1.0);
    const double g = -20.0 * inv_rho * inv_rho * u3;
    if (want & kGradient) out.gradient = g * d;
    if (want & kHessian) {
        out.hessian = g * Mat3::Identity();
        // (x_a x_b)/r -> 0 as r -> 0, leaving -20/rho^2 I at the center.
        if (r > 0.0) detail::add_outer(out.hessian, 60.0 * inv_rho * inv_rho * inv_rho * u2 / r, d);
    }
    return out;
}

/// Gradient and Hessian only, without the KernelEval packaging; returns false
/// outside the support. Hot path for implicit-function evaluation.
inline bool gradient_hessian(const Vec3& d, double r2, double rho, Vec3& grad, Mat3* hess) {
    if (r2 >= rho * rho) return false;
    const double r = std::sqrt(r2);
    const double inv_rho = 1.0 / rho;
    const double u = 1.0 - r * inv_rho;
    const double u2 = u * u;
    const double g = -20.0 * inv_rho * inv_rho * (u2 * u);
    grad = g * d;
    if (hess) {
        *hess = g * Mat3::Identity();
        if (r > 0.0) detail::add_outer(*hess, 60.0 * inv_rho * inv_rho * inv_rho * u2 / r, d);
    }
    return true;
}

/// Closed-form derivative bounds used by the coefficient error analysis.
struct DerivativeBounds {
    double grad_bound;           // |d phi / dx|
    double second_diag_bound;    // |d2 phi / dx2|
    double second_mixed_bound;   // |d2 phi / dx dy|
};

inline DerivativeBounds derivative_bounds(double rho) {
    return {5.0 / (4.0 * rho), 20.0 / (rho * rho), 15.0 / (2.0 * rho * rho)};
}

/// True supremum of |d phi / dx|: (20/rho) max_t t (1-t)^3, attained at
/// t = 1/4 on a coordinate axis. Larger than derivative_bounds().grad_bound.
inline double gradient_supremum(double rho) { return 135.0 / (64.0 * rho); }

}  // namespace hrbf::csrbf
