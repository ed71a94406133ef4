// SPDX-License-Identifier: Apache-2.0
#pragma once

// Size-agnostic tensor features used as regressor inputs.
//
// Order-3 layout (112 values, 1-based feature numbers):
//   1-3      dimensions I, J, K
//   4        total non-zeros
//   5-13     per mode 1..3: slice non-zeros (min, median, max)
//   14-22    per mode 1..3: slice numerical rank (min, median, max)
//   23-103   per threshold 0.1..0.9, per mode 1..3: count of min-max
//            normalized values <= threshold in each slice (min, median, max)
//   104-112  per mode 1..3: Pearson correlation over all slice pairs
//            (min, median, max)
//
// Order-4 layout (133 values): no dimension block and no rank block (slices
// are order-3 tensors); the remaining blocks gain a fourth mode:
//   1        total non-zeros
//   2-13     per mode 1..4: slice non-zeros
//   14-121   per threshold, per mode 1..4: thresholded counts
//   122-133  per mode 1..4: slice-pair correlation

#include "frappe/error.hpp"
#include "frappe/stats.hpp"
#include "frappe/tensor.hpp"

#include <Eigen/Dense>
#include <lapacke.h>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

namespace frappe {

enum class RankTolerance {
    /// tau = max(rows, cols) * sigma_1 * machine epsilon
    relative,
    /// tau = FeatureConfig::rank_tolerance_value
    absolute,
};

[[nodiscard]] inline std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int k = 1; k <= 9; ++k) t.push_back(k / 10.0);
    return t;
}

struct FeatureConfig {
    RankTolerance rank_tolerance_mode = RankTolerance::relative;
    double rank_tolerance_value = 0.0;
    std::vector<double> thresholds = default_thresholds();
    /// Upper bound on slice pairs per mode for the correlation block; pairs
    /// are subsampled uniformly (seeded) when a mode has more. Unset = all.
    std::optional<std::size_t> correlation_pair_cap;
    std::uint64_t seed = 0;

    void validate() const {
        if (thresholds.empty()) throw InvalidArgument("at least one threshold is required");
        for (std::size_t i = 0; i < thresholds.size(); ++i) {
            if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0)) {
                throw InvalidArgument("thresholds must lie in (0, 1)");
            }
            if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
                throw InvalidArgument("thresholds must be strictly increasing");
            }
        }
        if (correlation_pair_cap && *correlation_pair_cap < 1) {
            throw InvalidArgument("correlation_pair_cap must be >= 1");
        }
        if (rank_tolerance_mode == RankTolerance::absolute &&
            !(rank_tolerance_value >= 0.0 && std::isfinite(rank_tolerance_value))) {
            throw InvalidArgument("absolute rank tolerance must be finite and >= 0");
        }
    }
};

struct FeatureVector {
    std::vector<std::string> names;
    std::vector<double> values;

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }

    [[nodiscard]] double operator[](const std::string& name) const {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw InvalidArgument("no feature named '" + name + "'");
        return values[static_cast<std::size_t>(it - names.begin())];
    }
};

namespace detail {

inline std::string threshold_label(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", t);
    return buf;
}

inline constexpr const char* kStatNames[3] = {"min", "median", "max"};

/// Calls emit(name, group) in canonical feature order.
template <typename Emit>
void for_each_feature(std::size_t order, const FeatureConfig& cfg, Emit&& emit) {
    std::size_t number = 0;
    auto push = [&](const std::string& stem, const std::string& group) {
        char prefix[8];
        std::snprintf(prefix, sizeof prefix, "f%03zu_", ++number);
        emit(prefix + stem, group);
    };
    auto per_mode = [&](const std::string& stem, const std::string& group) {
        for (std::size_t m = 1; m <= order; ++m) {
            for (const char* s : kStatNames) {
                push(stem + "_mode" + std::to_string(m) + "_" + s, group);
            }
        }
    };
    if (order == 3) {
        for (std::size_t m = 1; m <= order; ++m) push("dim" + std::to_string(m), "dims");
    }
    push("nnz_total", "nnz");
    per_mode("nnz", "nnz");
    if (order == 3) per_mode("rank", "rank");
    for (double t : cfg.thresholds) {
        const std::string label = "le" + threshold_label(t);
        per_mode(label, label);
    }
    per_mode("corr", "corr");
}

}  // namespace detail

/// Canonical feature names for a tensor order (f001_dim1 ... f112_corr_mode3_max).
[[nodiscard]] inline std::vector<std::string> feature_names(std::size_t order,
                                                            const FeatureConfig& cfg = {}) {
    std::vector<std::string> names;
    detail::for_each_feature(order, cfg, [&](std::string n, const std::string&) {
        names.push_back(std::move(n));
    });
    return names;
}

/// Importance group of each feature: dims, nnz, rank, le<threshold>, corr.
[[nodiscard]] inline std::vector<std::string> feature_groups(std::size_t order,
                                                             const FeatureConfig& cfg = {}) {
    std::vector<std::string> groups;
    detail::for_each_feature(order, cfg,
                             [&](const std::string&, const std::string& g) { groups.push_back(g); });
    return groups;
}

[[nodiscard]] inline std::size_t feature_count(std::size_t order, const FeatureConfig& cfg = {}) {
    return feature_names(order, cfg).size();
}

/// Singular values of `m` in descending order (LAPACK dgesvd, no vectors).
[[nodiscard]] inline Eigen::VectorXd singular_values(const Eigen::MatrixXd& m) {
    const auto rows = static_cast<lapack_int>(m.rows());
    const auto cols = static_cast<lapack_int>(m.cols());
    const auto k = std::min(m.rows(), m.cols());
    Eigen::VectorXd sv(k);
    if (k == 0) return sv;
    Eigen::MatrixXd work = m;  // dgesvd destroys its input
    Eigen::VectorXd superb(std::max<Eigen::Index>(k - 1, 1));
    const lapack_int info = LAPACKE_dgesvd(LAPACK_COL_MAJOR, 'N', 'N', rows, cols, work.data(), rows, sv.data(),
                                           nullptr, 1, nullptr, 1, superb.data());
    if (info != 0) {
        throw ComputationError("SVD did not converge (dgesvd info " + std::to_string(info) + ")");
    }
    return sv;
}

/// Number of singular values above the configured tolerance. Zero matrix -> 0.
[[nodiscard]] inline std::size_t numerical_rank(const Eigen::MatrixXd& m,
                                                const FeatureConfig& cfg = {}) {
    if (m.size() == 0) return 0;
    if (!m.allFinite()) throw InvalidArgument("numerical_rank: matrix has non-finite entries");
    const Eigen::VectorXd sv = singular_values(m);
    const double sigma1 = sv(0);
    const double tau = cfg.rank_tolerance_mode == RankTolerance::absolute
                           ? cfg.rank_tolerance_value
                           : static_cast<double>(std::max(m.rows(), m.cols())) * sigma1 *
                                 std::numeric_limits<double>::epsilon();
    std::size_t r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > tau) ++r;
    }
    return r;
}

enum class SliceStatistic { nnz, rank, threshold_count, correlation };

namespace detail {

/// Slices of `mode` as the rows of a matrix, each in row-major order of the
/// remaining modes.
inline RowMajorMatrix slices_as_rows(const DenseTensor& t, std::size_t mode) {
    const Shape& s = t.shape();
    const std::size_t d = s.dim(mode);
    const std::size_t inner = s.strides()[mode];
    const std::size_t outer = s.size() / (inner * d);
    RowMajorMatrix rows(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(outer * inner));
    const auto v = t.values();
    for (std::size_t i = 0; i < d; ++i) {
        double* dst = rows.row(static_cast<Eigen::Index>(i)).data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((o * d + i) * inner), inner,
                        dst + o * inner);
        }
    }
    return rows;
}

/// Pearson correlation of every unordered slice pair along `mode`, or of a
/// seeded uniform subsample when cfg caps the pair count.
inline std::vector<double> pairwise_correlations(const DenseTensor& t, std::size_t mode,
                                                 const FeatureConfig& cfg) {
    RowMajorMatrix z = slices_as_rows(t, mode);
    const Eigen::Index n = z.rows();
    std::vector<bool> constant(static_cast<std::size_t>(n));
    Eigen::VectorXd norms(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto row = z.row(i);
        const double first = row(0);
        constant[static_cast<std::size_t>(i)] = (row.array() == first).all();
        row.array() -= row.mean();
        norms(i) = row.norm();
    }
    auto corr = [&](Eigen::Index a, Eigen::Index b, double dot) {
        if (constant[static_cast<std::size_t>(a)] || constant[static_cast<std::size_t>(b)]) {
            return 0.0;
        }
        return std::clamp(dot / (norms(a) * norms(b)), -1.0, 1.0);
    };

    const std::size_t total = static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2;
    std::vector<double> out;
    if (total == 0) return out;
    if (!cfg.correlation_pair_cap || *cfg.correlation_pair_cap >= total) {
        out.reserve(total);
        const Eigen::MatrixXd gram = z * z.transpose();
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = a + 1; b < n; ++b) out.push_back(corr(a, b, gram(a, b)));
        }
        return out;
    }
    // Floyd's sampling of `cap` distinct pair ordinals, then sorted so the
    // output order is canonical.
    const std::size_t cap = *cfg.correlation_pair_cap;
    std::mt19937_64 rng(derive_seed(cfg.seed, mode));
    std::unordered_set<std::size_t> chosen;
    for (std::size_t j = total - cap; j < total; ++j) {
        const std::size_t r = std::uniform_int_distribution<std::size_t>(0, j)(rng);
        if (!chosen.insert(r).second) chosen.insert(j);
    }
    std::vector<std::size_t> ordinals(chosen.begin(), chosen.end());
    std::sort(ordinals.begin(), ordinals.end());
    out.reserve(cap);
    Eigen::Index a = 0;
    std::size_t row_start = 0;  // ordinal of pair (a, a+1)
    for (std::size_t k : ordinals) {
        while (k >= row_start + static_cast<std::size_t>(n - 1 - a)) {
            row_start += static_cast<std::size_t>(n - 1 - a);
            ++a;
        }
        const Eigen::Index b = a + 1 + static_cast<Eigen::Index>(k - row_start);
        out.push_back(corr(a, b, z.row(a).dot(z.row(b))));
    }
    return out;
}

inline std::vector<std::vector<double>> slice_nnz_counts(const DenseTensor& t) {
    const Shape& s = t.shape();
    std::vector<std::vector<double>> counts(s.order());
    for (std::size_t m = 0; m < s.order(); ++m) counts[m].assign(s.dim(m), 0.0);
    const auto v = t.values();
    for (std::size_t f = 0; f < v.size(); ++f) {
        if (v[f] == 0.0) continue;
        for (std::size_t m = 0; m < s.order(); ++m) counts[m][(f / s.strides()[m]) % s.dim(m)] += 1.0;
    }
    return counts;
}

/// counts[threshold][mode][slice] of normalized values <= threshold.
inline std::vector<std::vector<std::vector<double>>> slice_threshold_counts(
    const DenseTensor& normalized, std::span<const double> thresholds) {
    const Shape& s = normalized.shape();
    const std::size_t nt = thresholds.size();
    // hist[mode][slice * (nt + 1) + bin], bin = first threshold >= x.
    std::vector<std::vector<std::size_t>> hist(s.order());
    for (std::size_t m = 0; m < s.order(); ++m) hist[m].assign(s.dim(m) * (nt + 1), 0);
    const auto v = normalized.values();
    for (std::size_t f = 0; f < v.size(); ++f) {
        const auto bin = static_cast<std::size_t>(
            std::lower_bound(thresholds.begin(), thresholds.end(), v[f]) - thresholds.begin());
        for (std::size_t m = 0; m < s.order(); ++m) {
            ++hist[m][((f / s.strides()[m]) % s.dim(m)) * (nt + 1) + bin];
        }
    }
    std::vector<std::vector<std::vector<double>>> out(
        nt, std::vector<std::vector<double>>(s.order()));
    for (std::size_t m = 0; m < s.order(); ++m) {
        for (std::size_t i = 0; i < s.dim(m); ++i) {
            std::size_t running = 0;
            for (std::size_t k = 0; k < nt; ++k) {
                running += hist[m][i * (nt + 1) + k];
                out[k][m].push_back(static_cast<double>(running));
            }
        }
    }
    return out;
}

inline std::vector<double> slice_ranks(const DenseTensor& t, std::size_t mode,
                                       const FeatureConfig& cfg) {
    std::vector<double> ranks;
    for (std::size_t i = 0; i < t.shape().dim(mode); ++i) {
        ranks.push_back(static_cast<double>(numerical_rank(slice_matrix(t, mode, i), cfg)));
    }
    return ranks;
}

}  // namespace detail

/// (min, median, max) of one per-slice statistic along `mode`. For
/// threshold_count, `t` must already be min-max normalized. Correlation is
/// taken over unordered slice pairs; a mode with a single slice yields zeros.
[[nodiscard]] inline Summary slice_stats(const DenseTensor& t, std::size_t mode, SliceStatistic kind,
                                         const FeatureConfig& cfg = {}, double threshold = 0.5) {
    if (mode >= t.order()) throw InvalidArgument("slice_stats: mode out of range");
    switch (kind) {
        case SliceStatistic::nnz:
            return summarize(detail::slice_nnz_counts(t)[mode]);
        case SliceStatistic::rank:
            return summarize(detail::slice_ranks(t, mode, cfg));
        case SliceStatistic::threshold_count: {
            const double th[1] = {threshold};
            return summarize(detail::slice_threshold_counts(t, th)[0][mode]);
        }
        case SliceStatistic::correlation:
            return summarize(detail::pairwise_correlations(t, mode, cfg));
    }
    return {};
}

[[nodiscard]] inline FeatureVector extract_features(const DenseTensor& t,
                                                    const FeatureConfig& cfg = {}) {
    cfg.validate();
    const Shape& s = t.shape();
    const std::size_t order = s.order();
    std::vector<double> values;
    auto push = [&](const Summary& sm) {
        values.push_back(sm.min);
        values.push_back(sm.median);
        values.push_back(sm.max);
    };

    if (order == 3) {
        for (std::size_t m = 0; m < order; ++m) values.push_back(static_cast<double>(s.dim(m)));
    }
    values.push_back(static_cast<double>(nnz(t)));
    const auto nnz_counts = detail::slice_nnz_counts(t);
    for (std::size_t m = 0; m < order; ++m) push(summarize(nnz_counts[m]));
    if (order == 3) {
        for (std::size_t m = 0; m < order; ++m) push(summarize(detail::slice_ranks(t, m, cfg)));
    }
    const auto thr = detail::slice_threshold_counts(minmax_normalize(t), cfg.thresholds);
    for (const auto& per_mode : thr) {
        for (std::size_t m = 0; m < order; ++m) push(summarize(per_mode[m]));
    }
    for (std::size_t m = 0; m < order; ++m) {
        push(summarize(detail::pairwise_correlations(t, m, cfg)));
    }

    FeatureVector fv{feature_names(order, cfg), std::move(values)};
    if (fv.names.size() != fv.values.size()) {
        throw ComputationError("feature layout mismatch");  // unreachable
    }
    return fv;
}

[[nodiscard]] inline FeatureVector extract_features(const CooTensor& t, const FeatureConfig& cfg = {}) {
    return extract_features(to_dense(t), cfg);
}

[[nodiscard]] inline FeatureVector extract_features(const Tensor& t, const FeatureConfig& cfg = {}) {
    return extract_features(to_dense(t), cfg);
}

}  // namespace frappe
