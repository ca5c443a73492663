#pragma once

/// \file hrbf_exact.hpp
/// Desk-scale exact HRBF solver. Assembles the regularized 4n x 4n Hermite
/// interpolation system, solves it directly, and reports the norms needed to
/// check the quasi-solution error bound. Used as an oracle, not for
/// production-size inputs.

#include "hrbf/csrbf_kernel.hpp"
#include "hrbf/implicit_field.hpp"
#include "hrbf/spatial_index.hpp"
#include "hrbf/types.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hrbf {

struct ExactOptions {
    std::size_t max_points = 5000;
    /// Systems with n at or below this use dense LU with a condition estimate.
    std::size_t dense_limit = 500;
    /// Reciprocal condition numbers below this are reported as a failure.
    double min_rcond = 1e-14;
};

/// Raised when the regularized system cannot be solved reliably.
class SolveError : public Error {
public:
    SolveError(const std::string& what, double rcond, double residual)
        : Error(what + " (rcond estimate " + std::to_string(rcond) + ", residual " + std::to_string(residual) +
                "; regularization eta is likely too small)"),
          rcond_(rcond), residual_(residual) {}
    double rcond() const noexcept { return rcond_; }
    double residual() const noexcept { return residual_; }

private:
    double rcond_;
    double residual_;
};

/// (A + eta I) lambda = y with y_i = (0, n_i).
struct ExactSystem {
    std::size_t n = 0;
    double eta = 0.0;
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<double> rho;
    Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;  // A + eta I
    Eigen::VectorXd rhs;

    /// 4x4 block (i, j) of A + eta I.
    Eigen::Matrix4d block(std::size_t i, std::size_t j) const {
        Eigen::Matrix4d out = Eigen::Matrix4d::Zero();
        for (int r = 0; r < 4; ++r)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(matrix, static_cast<Eigen::Index>(4 * i + r)); it; ++it)
                if (static_cast<std::size_t>(it.col() / 4) == j) out(r, it.col() % 4) = it.value();
        return out;
    }
};

struct ExactSolveResult {
    Eigen::VectorXd lambda;   // blocks (a_i, b_i)
    double residual_inf = 0.0;
    double delta_A_inf = 0.0; // max row sum of |A + eta I - D|
    double D_inv_inf = 0.0;
    double rcond = std::numeric_limits<double>::quiet_NaN();  // dense path only
    bool dense = false;

    double a(std::size_t i) const { return lambda[static_cast<Eigen::Index>(4 * i)]; }
    Vec3 b(std::size_t i) const { return lambda.segment<3>(static_cast<Eigen::Index>(4 * i + 1)); }
};

namespace detail {

/// Diagonal of the isolated-center matrix D for center i: (1 + eta, 20/rho^2 + eta x3),
/// computed with the same arithmetic as the kernel Hessian at r = 0.
inline Eigen::Vector4d isolated_diagonal(double rho, double eta) {
    const double inv_rho = 1.0 / rho;
    const double h = 20.0 * inv_rho * inv_rho;
    return {1.0 + eta, h + eta, h + eta, h + eta};
}

}  // namespace detail

inline ExactSystem assemble(const HermitePointSet& ps, std::span<const double> rho, double eta,
                            const ExactOptions& opt = {}) {
    const std::size_t n = ps.size();
    if (n == 0) throw Error("exact solver needs at least one point");
    if (n > opt.max_points)
        throw Error("exact solver is desk-scale only (n=" + std::to_string(n) + " > cap " + std::to_string(opt.max_points) + ")");
    if (rho.size() != n) throw Error("one support radius per point required");
    for (double r : rho)
        if (!(r > 0.0)) throw Error("support radii must be positive");

    ExactSystem sys;
    sys.n = n;
    sys.eta = eta;
    sys.points = ps.points;
    sys.normals = ps.normals;
    sys.rho.assign(rho.begin(), rho.end());

    const double rho_max = *std::max_element(rho.begin(), rho.end());
    PointOctree index(ps.points);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(n * 16 * 8);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& pi = ps.points[i];
        // Row block i holds the constraints at p_i; column block j the kernel centered at p_j.
        for (std::uint32_t j : index.radius_query(pi, rho_max)) {
            const auto k = csrbf::eval(ps.points[j], rho[j], pi);
            if (!k.inside_support) continue;
            const auto r0 = static_cast<int>(4 * i), c0 = static_cast<int>(4 * j);
            Eigen::Matrix4d blk;
            blk(0, 0) = k.value;
            blk.block<1, 3>(0, 1) = -k.gradient.transpose();
            blk.block<3, 1>(1, 0) = k.gradient;
            blk.block<3, 3>(1, 1) = -k.hessian;
            if (i == j) {
                blk.diagonal() = detail::isolated_diagonal(rho[j], eta);
            }
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c)
                    if (blk(r, c) != 0.0) triplets.emplace_back(r0 + r, c0 + c, blk(r, c));
        }
    }
    const auto dim = static_cast<Eigen::Index>(4 * n);
    sys.matrix.resize(dim, dim);
    sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
    sys.rhs = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < n; ++i) sys.rhs.segment<3>(static_cast<Eigen::Index>(4 * i + 1)) = ps.normals[i];
    return sys;
}

inline ExactSolveResult solve(const ExactSystem& sys, const ExactOptions& opt = {}) {
    ExactSolveResult res;
    const auto dim = sys.matrix.rows();

    for (Eigen::Index row = 0; row < dim; ++row) {
        const auto i = static_cast<std::size_t>(row / 4);
        const Eigen::Vector4d diag = detail::isolated_diagonal(sys.rho[i], sys.eta);
        double sum = 0.0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(sys.matrix, row); it; ++it) {
            double v = it.value();
            if (it.col() == row) v -= diag[row % 4];
            sum += std::abs(v);
        }
        res.delta_A_inf = std::max(res.delta_A_inf, sum);
    }
    for (double r : sys.rho)
        res.D_inv_inf = std::max({res.D_inv_inf, 1.0 / (1.0 + sys.eta), r * r / (20.0 + sys.eta * r * r)});

    if (sys.n <= opt.dense_limit) {
        res.dense = true;
        const Eigen::MatrixXd dense(sys.matrix);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(dense);
        res.rcond = lu.rcond();
        res.lambda = lu.solve(sys.rhs);
    } else {
        Eigen::SparseMatrix<double> colmajor(sys.matrix);
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(colmajor);
        if (lu.info() != Eigen::Success)
            throw SolveError("sparse LU factorization failed: " + lu.lastErrorMessage(), 0.0,
                             std::numeric_limits<double>::infinity());
        res.lambda = lu.solve(sys.rhs);
    }
    const Eigen::VectorXd r = sys.matrix * res.lambda - sys.rhs;
    res.residual_inf = res.lambda.allFinite() ? r.lpNorm<Eigen::Infinity>() : std::numeric_limits<double>::infinity();
    const double tol = 1e-9 * (1.0 + sys.rhs.lpNorm<Eigen::Infinity>());
    if (res.dense && !(res.rcond >= opt.min_rcond))
        throw SolveError("system is numerically singular", res.rcond, res.residual_inf);
    if (!(res.residual_inf <= tol)) throw SolveError("residual above tolerance", res.rcond, res.residual_inf);
    return res;
}

/// Brute-force evaluation of the exact interpolant at x; 0 outside every support.
inline double eval_exact(const HermitePointSet& ps, std::span<const double> rho, const Eigen::VectorXd& lambda,
                         const Vec3& x) {
    double f = 0.0;
    for (std::size_t j = 0; j < ps.size(); ++j) {
        const auto k = csrbf::eval(ps.points[j], rho[j], x, csrbf::kValue | csrbf::kGradient);
        if (!k.inside_support) continue;
        const auto o = static_cast<Eigen::Index>(4 * j);
        f += lambda[o] * k.value - lambda.segment<3>(o + 1).dot(k.gradient);
    }
    return f;
}

/// Gradient counterpart of eval_exact.
inline Vec3 eval_exact_gradient(const HermitePointSet& ps, std::span<const double> rho, const Eigen::VectorXd& lambda,
                                const Vec3& x) {
    Vec3 g = Vec3::Zero();
    for (std::size_t j = 0; j < ps.size(); ++j) {
        const auto k = csrbf::eval(ps.points[j], rho[j], x, csrbf::kGradient | csrbf::kHessian);
        if (!k.inside_support) continue;
        const auto o = static_cast<Eigen::Index>(4 * j);
        g += lambda[o] * k.gradient - k.hessian * lambda.segment<3>(o + 1);
    }
    return g;
}

/// Indexed field over the exact coefficients, for contouring.
inline HrbfField make_exact_field(const HermitePointSet& ps, std::span<const double> rho, const Eigen::VectorXd& lambda) {
    std::vector<double> a(ps.size());
    std::vector<Vec3> b(ps.size());
    for (std::size_t j = 0; j < ps.size(); ++j) {
        a[j] = lambda[static_cast<Eigen::Index>(4 * j)];
        b[j] = lambda.segment<3>(static_cast<Eigen::Index>(4 * j + 1));
    }
    return HrbfField(ps.points, std::vector<double>(rho.begin(), rho.end()), std::move(a), std::move(b));
}

}  // namespace hrbf
