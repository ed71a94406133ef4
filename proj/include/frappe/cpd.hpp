// SPDX-License-Identifier: Apache-2.0
#pragma once

// CP-ALS at a fixed rank. Validation only: the rank estimators never call
// into this header, and cp_als_invocations() lets tests prove it.

#include "frappe/error.hpp"
#include "frappe/stats.hpp"
#include "frappe/tensor.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace frappe {

struct AlsOptions {
    std::size_t max_iters = 200;
    /// Stop once the relative error changes by less than this between sweeps.
    double rel_change_tol = 1e-8;
    std::size_t n_restarts = 3;
    std::uint64_t seed = 0;

    void validate() const {
        if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
        if (!(rel_change_tol > 0.0)) throw InvalidArgument("rel_change_tol must be > 0");
        if (n_restarts < 1) throw InvalidArgument("n_restarts must be >= 1");
    }
};

struct CpdResult {
    FactorSet factors;
    /// |T - from_factors(factors)|_F / |T|_F
    double relative_error = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    /// Set when R exceeds the column count of some mode unfolding, i.e. the
    /// product of the other dimensions. Allowed, but the fit is degenerate.
    bool rank_exceeds_unfolding = false;
    /// Relative error after each sweep of the returned run.
    std::vector<double> error_history;
};

/// Process-wide count of cp_als calls.
[[nodiscard]] inline std::atomic<std::size_t>& cp_als_invocations() {
    static std::atomic<std::size_t> count{0};
    return count;
}

namespace detail {

/// Matricized tensor times Khatri-Rao product for `mode`:
/// sum over all other indices of T(..) * prod_{m != mode} F_m(i_m, :).
inline Eigen::MatrixXd mttkrp(const DenseTensor& t, std::span<const Eigen::MatrixXd> factors,
                              std::size_t mode) {
    const Shape& s = t.shape();
    const Eigen::Index rank = factors[0].cols();
    const auto d = static_cast<Eigen::Index>(s.dim(mode));
    const Eigen::MatrixXd before = khatri_rao(factors.subspan(0, mode), rank);
    const Eigen::MatrixXd after = khatri_rao(factors.subspan(mode + 1), rank);
    const Eigen::Index outer = before.rows();
    const Eigen::Index inner = after.rows();
    const double* data = t.values().data();

    if (inner == 1) {
        Eigen::Map<const RowMajorMatrix> x(data, outer, d);
        return x.transpose() * before;
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, rank);
    for (Eigen::Index p = 0; p < outer; ++p) {
        Eigen::Map<const RowMajorMatrix> slab(data + p * d * inner, d, inner);
        if (outer == 1) {
            out.noalias() += slab * after;
        } else {
            out.noalias() += slab * (after.array().rowwise() * before.row(p).array()).matrix();
        }
    }
    return out;
}

inline double relative_error(const DenseTensor& t, const FactorSet& f, double t_norm) {
    const DenseTensor model = from_factors(f);
    std::vector<double> diff(t.size());
    const auto a = t.values();
    const auto b = model.values();
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a[i] - b[i];
    return frobenius_norm(diff) / t_norm;
}

inline FactorSet with_weights(std::vector<Eigen::MatrixXd> factors, const Eigen::VectorXd& lambda) {
    factors[0] = factors[0] * lambda.asDiagonal();
    return FactorSet(std::move(factors));
}

struct AlsRun {
    std::vector<Eigen::MatrixXd> factors;
    Eigen::VectorXd lambda;
    double error = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> history;
};

inline AlsRun als_run(const DenseTensor& t, std::size_t rank, const AlsOptions& opts,
                      std::uint64_t seed, double t_norm) {
    const Shape& s = t.shape();
    const auto r = static_cast<Eigen::Index>(rank);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    AlsRun run;
    for (std::size_t m = 0; m < s.order(); ++m) {
        Eigen::MatrixXd f(static_cast<Eigen::Index>(s.dim(m)), r);
        for (Eigen::Index i = 0; i < f.rows(); ++i) {
            for (Eigen::Index c = 0; c < r; ++c) f(i, c) = unit(rng);
        }
        run.factors.push_back(std::move(f));
    }
    run.lambda = Eigen::VectorXd::Ones(r);

    std::vector<Eigen::MatrixXd> grams;
    for (const auto& f : run.factors) grams.push_back(f.transpose() * f);

    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < opts.max_iters; ++it) {
        for (std::size_t n = 0; n < s.order(); ++n) {
            Eigen::MatrixXd v = Eigen::MatrixXd::Ones(r, r);
            for (std::size_t m = 0; m < s.order(); ++m) {
                if (m != n) v = v.cwiseProduct(grams[m]);
            }
            const Eigen::MatrixXd rhs = mttkrp(t, run.factors, n);
            // Least-squares solve of V X^T = rhs^T; the complete orthogonal
            // decomposition gives the pseudo-inverse solution when V is singular.
            Eigen::MatrixXd updated = v.completeOrthogonalDecomposition().solve(rhs.transpose()).transpose();
            for (Eigen::Index c = 0; c < r; ++c) {
                const double norm = updated.col(c).norm();
                run.lambda(c) = norm;
                if (norm > 0.0) updated.col(c) /= norm;
            }
            run.factors[n] = std::move(updated);
            grams[n] = run.factors[n].transpose() * run.factors[n];
        }
        run.error = relative_error(t, with_weights(run.factors, run.lambda), t_norm);
        run.history.push_back(run.error);
        run.iterations = it + 1;
        if (std::abs(previous - run.error) < opts.rel_change_tol) {
            run.converged = true;
            break;
        }
        previous = run.error;
    }
    return run;
}

}  // namespace detail

/// Best-of-restarts CP-ALS fit of `t` with `rank` components.
[[nodiscard]] inline CpdResult cp_als(const DenseTensor& t, std::size_t rank, const AlsOptions& opts = {}) {
    ++cp_als_invocations();
    opts.validate();
    if (rank < 1) throw InvalidArgument("cp_als: rank must be >= 1");
    const double t_norm = frobenius_norm(t);
    if (t_norm == 0.0) throw ComputationError("cp_als: zero tensor");

    detail::AlsRun best;
    for (std::size_t k = 0; k < opts.n_restarts; ++k) {
        detail::AlsRun run = detail::als_run(t, rank, opts, derive_seed(opts.seed, k), t_norm);
        if (run.error < best.error) best = std::move(run);
    }

    FactorSet factors = detail::with_weights(std::move(best.factors), best.lambda);
    const double err = detail::relative_error(t, factors, t_norm);
    bool exceeds = false;
    for (std::size_t m = 0; m < t.order(); ++m) {
        if (rank > t.size() / t.shape().dim(m)) exceeds = true;
    }
    return {std::move(factors), err, best.iterations, best.converged, exceeds, std::move(best.history)};
}

struct CurvePoint {
    std::size_t rank = 0;
    double relative_error = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// One cp_als per rank, all with the same options (and seed).
[[nodiscard]] inline std::vector<CurvePoint> error_curve(const DenseTensor& t, std::span<const std::size_t> ranks,
                                                         const AlsOptions& opts = {}) {
    if (ranks.empty()) throw InvalidArgument("error_curve: no ranks given");
    for (std::size_t i = 1; i < ranks.size(); ++i) {
        if (!(ranks[i] > ranks[i - 1])) throw InvalidArgument("error_curve: ranks must be ascending");
    }
    std::vector<CurvePoint> out;
    for (std::size_t r : ranks) {
        const CpdResult res = cp_als(t, r, opts);
        out.push_back({r, res.relative_error, res.iterations, res.converged});
    }
    return out;
}

}  // namespace frappe
