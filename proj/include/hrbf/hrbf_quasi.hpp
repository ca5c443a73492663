#pragma once

/// \file hrbf_quasi.hpp
/// Closed-form HRBF quasi-interpolation.
///
/// Replacing the Hermite system matrix by its isolated-center diagonal gives
/// a_j = 0 and b_j = rho_j^2 n_j / (20 + eta rho_j^2), so the implicit
/// function f~(x) = -sum_j <b_j, grad phi_j(x)> needs no global solve. The
/// distance of these coefficients from the exact regularized solution is
/// bounded when every support holds at most m centers, rho_max < sqrt(20),
/// and eta > m (5/(4 rho_min) + 35/rho_min^2) - 1. tune_parameters() picks
/// supports and eta so that those premises hold.

#include "hrbf/hrbf_exact.hpp"
#include "hrbf/implicit_field.hpp"
#include "hrbf/parallel.hpp"
#include "hrbf/spatial_index.hpp"
#include "hrbf/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace hrbf {

inline const double kMaxSupport = std::sqrt(20.0);

struct TuneOptions {
    /// Per-step growth factor of the support enlargement.
    double growth = 1.05;
    /// Added to the smallest admissible eta.
    double eta_margin = 1e-5;
    std::optional<double> eta_override;
    unsigned threads = 1;
};

struct TuningParams {
    double s = 1.0;
    double d_bar = 0.0;
    std::size_t m = 0;
    std::vector<double> rho;
    double rho_min = 0.0;
    double rho_max = 0.0;
    double eta = 0.0;
    double eta_threshold = 0.0;  // m (5/(4 rho_min) + 35/rho_min^2) - 1
    bool eta_overridden = false;
    bool uniform_support = false;
    /// Largest support count after enlargement (<= m) and the count one
    /// growth step further (> m unless capped).
    std::size_t max_cover_final = 0;
    std::size_t max_cover_next_step = 0;
};

/// m (5/(4 rho_min) + 35/rho_min^2), the bound on |A + eta I - D|_inf.
inline double a_bar(std::size_t m, double rho_min) {
    return static_cast<double>(m) * (5.0 / (4.0 * rho_min) + 35.0 / (rho_min * rho_min));
}

inline double eta_lower_bound(std::size_t m, double rho_min) { return a_bar(m, rho_min) - 1.0; }

/// Support radii and regularization for the quasi model.
///
/// d_bar is 3/4 of the mean leaf diagonal of `idx`; m is the largest number of
/// points strictly inside any temporary support s * d_bar (the center itself
/// included). Each radius then grows geometrically for as long as its support
/// holds at most m points, and stays at the last size that did. With
/// `noisy_mode` every radius is replaced by the smallest one.
inline TuningParams tune_parameters(const HermitePointSet& ps, const PointOctree& idx, double s, bool noisy_mode,
                                    const TuneOptions& opt = {}) {
    const std::size_t n = ps.size();
    if (n < 2) throw Error("parameter tuning needs at least 2 points");
    if (idx.size() != n) throw Error("octree does not match the point set");
    if (!(s >= 1.0)) throw Error("support amplifier s must be >= 1");
    if (!(opt.growth > 1.0)) throw Error("support growth factor must exceed 1");

    TuningParams tp;
    tp.s = s;
    const auto diags = idx.leaf_diagonals();
    tp.d_bar = 0.75 * std::accumulate(diags.begin(), diags.end(), 0.0) / static_cast<double>(diags.size());
    if (!(tp.d_bar > 0.0)) throw Error("degenerate extent");

    const double rho0 = s * tp.d_bar;
    std::vector<std::size_t> counts(n);
    parallel_for(n, opt.threads, [&](std::size_t j) { counts[j] = idx.radius_count(ps.points[j], rho0); });
    tp.m = *std::max_element(counts.begin(), counts.end());

    // Growing past the bbox diagonal cannot change any count.
    const double cap = std::max(ps.bbox.empty() ? idx.bounds().diagonal() : ps.bbox.diagonal(), rho0);
    tp.rho.assign(n, rho0);
    std::vector<std::size_t> final_count(n), next_count(n);
    parallel_chunks(n, opt.threads, [&](std::size_t begin, std::size_t end, std::size_t) {
        std::vector<double> d2;  // squared distances within `search`, self included
        for (std::size_t j = begin; j < end; ++j) {
            const Vec3& p = ps.points[j];
            double search = 1.5 * rho0;
            for (;;) {
                d2.clear();
                idx.for_each_in_radius(p, search, [&](std::uint32_t, double r2) { d2.push_back(r2); });
                if (d2.size() > tp.m || search >= cap) break;
                search *= 2.0;
            }
            // count(r) > m  <=>  the (m+1)-th nearest distance is < r.
            double limit = std::numeric_limits<double>::infinity();
            if (d2.size() > tp.m) {
                std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(tp.m), d2.end());
                limit = std::sqrt(d2[tp.m]);
            }
            double rho = rho0;
            while (rho < cap) {
                const double next = rho * opt.growth;
                if (next > limit) break;
                rho = next;
            }
            tp.rho[j] = rho;
            auto count_below = [&](double r) {
                if (r > search) return idx.radius_count(p, r);
                return static_cast<std::size_t>(std::count_if(d2.begin(), d2.end(), [&](double v) { return v < r * r; }));
            };
            final_count[j] = count_below(rho);
            next_count[j] = count_below(rho * opt.growth);
        }
    });
    tp.max_cover_final = *std::max_element(final_count.begin(), final_count.end());
    tp.max_cover_next_step = *std::max_element(next_count.begin(), next_count.end());

    if (noisy_mode) {
        const double r = *std::min_element(tp.rho.begin(), tp.rho.end());
        std::fill(tp.rho.begin(), tp.rho.end(), r);
        tp.uniform_support = true;
    }
    tp.rho_min = *std::min_element(tp.rho.begin(), tp.rho.end());
    tp.rho_max = *std::max_element(tp.rho.begin(), tp.rho.end());
    if (!(tp.rho_max < kMaxSupport)) throw Error("model not normalized: support radius exceeds sqrt(20)");

    tp.eta_threshold = eta_lower_bound(tp.m, tp.rho_min);
    if (opt.eta_override) {
        tp.eta = *opt.eta_override;
        tp.eta_overridden = true;
    } else {
        tp.eta = tp.eta_threshold + opt.eta_margin;
    }
    return tp;
}

/// Quasi-interpolation coefficients. The scalar coefficients are all zero.
struct HrbfModel {
    std::vector<Vec3> centers;
    std::vector<Vec3> normals;
    std::vector<double> rho;
    double eta = 0.0;
    std::vector<Vec3> b_coeffs;

    std::size_t size() const { return centers.size(); }

    /// The coefficient vector laid out like the exact system's lambda.
    Eigen::VectorXd lambda() const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(4 * size()));
        for (std::size_t j = 0; j < size(); ++j) out.segment<3>(static_cast<Eigen::Index>(4 * j + 1)) = b_coeffs[j];
        return out;
    }
};

inline HrbfModel build_model(const HermitePointSet& ps, const TuningParams& tp) {
    if (tp.rho.size() != ps.size()) throw Error("tuning parameters do not match the point set");
    HrbfModel model;
    model.centers = ps.points;
    model.normals = ps.normals;
    model.rho = tp.rho;
    model.eta = tp.eta;
    model.b_coeffs.resize(ps.size());
    for (std::size_t j = 0; j < ps.size(); ++j) {
        // rho^2 n / (20 + eta rho^2), written as n / D_jj so that isolated
        // centers reproduce a direct solve bit for bit.
        const double inv_rho = 1.0 / tp.rho[j];
        model.b_coeffs[j] = ps.normals[j] / (20.0 * inv_rho * inv_rho + tp.eta);
    }
    return model;
}

/// Indexed evaluator for f~ and its gradient.
inline HrbfField make_quasi_field(const HrbfModel& model) {
    return HrbfField(model.centers, model.rho, {}, model.b_coeffs);
}

/// f~ and grad f~ at x, or nullopt outside every support.
inline std::optional<FieldSample> eval_implicit(const HrbfField& field, const Vec3& x) { return field.sample(x); }

struct BoundReport {
    std::size_t n = 0;
    std::size_t m = 0;
    double eta = 0.0;
    double rho_min = 0.0;
    double rho_max = 0.0;
    double A_bar = 0.0;
    double contraction = 0.0;       // A_bar / (1 + eta)
    bool applicable = false;        // contraction < 1
    double bound_value = std::numeric_limits<double>::infinity();
    double measured_inf_error = 0.0;
    bool holds = false;
    /// Same check with exactly computed norms instead of A_bar.
    double exact_contraction = 0.0; // |D^-1|_inf |A + eta I - D|_inf
    double exact_bound = std::numeric_limits<double>::infinity();
    bool exact_holds = false;
};

/// Compares the quasi coefficients with an exact solve on the same inputs.
inline BoundReport verify_error_bound(const HrbfModel& model, const TuningParams& tp, const ExactSolveResult& exact) {
    if (exact.lambda.size() != static_cast<Eigen::Index>(4 * model.size()))
        throw Error("exact solution does not match the model size");
    BoundReport r;
    r.n = model.size();
    r.m = tp.m;
    r.eta = model.eta;
    r.rho_min = tp.rho_min;
    r.rho_max = tp.rho_max;
    r.A_bar = a_bar(tp.m, tp.rho_min);
    r.contraction = r.A_bar / (1.0 + r.eta);
    r.applicable = r.contraction < 1.0;
    const double quasi = model.lambda().lpNorm<Eigen::Infinity>();
    r.measured_inf_error = (model.lambda() - exact.lambda).lpNorm<Eigen::Infinity>();
    if (r.applicable) {
        const double rmax2 = tp.rho_max * tp.rho_max;
        r.bound_value = r.A_bar * rmax2 / ((1.0 + r.eta - r.A_bar) * (20.0 + r.eta * rmax2));
        r.holds = r.measured_inf_error <= r.bound_value;
    }
    r.exact_contraction = exact.D_inv_inf * exact.delta_A_inf;
    if (r.exact_contraction < 1.0) {
        r.exact_bound = r.exact_contraction / (1.0 - r.exact_contraction) * quasi;
        r.exact_holds = r.measured_inf_error <= r.exact_bound;
    }
    return r;
}

}  // namespace hrbf
