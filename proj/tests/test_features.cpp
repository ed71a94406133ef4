// SPDX-License-Identifier: Apache-2.0
#include "frappe/features.hpp"
#include "frappe/stats.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace frappe {
namespace {

using testing::random_factors;
using testing::random_tensor;

// ---------------------------------------------------------------------------
// stats helpers
// ---------------------------------------------------------------------------

TEST(Stats, PearsonExamples) {
    const std::vector<double> a = {1, 2, 3};
    const std::vector<double> b = {2, 4, 6};
    const std::vector<double> c = {3, 2, 1};
    const std::vector<double> k = {1, 1, 1};
    EXPECT_NEAR(pearson(a, b), 1.0, 1e-15);
    EXPECT_NEAR(pearson(a, c), -1.0, 1e-15);
    EXPECT_EQ(pearson(k, a), 0.0);
    EXPECT_EQ(pearson(a, k), 0.0);
}

TEST(Stats, MedianExamples) {
    EXPECT_EQ(median({1, 3}), 2.0);
    EXPECT_EQ(median({5}), 5.0);
    EXPECT_EQ(median({4, 1, 3}), 3.0);
    const auto s = summarize({7, 1, 4, 2});
    EXPECT_EQ(s.min, 1.0);
    EXPECT_EQ(s.median, 3.0);
    EXPECT_EQ(s.max, 7.0);
}

TEST(Stats, SpearmanHandlesTies) {
    const std::vector<double> x = {1, 2, 2, 3};
    const std::vector<double> y = {10, 20, 20, 30};
    EXPECT_NEAR(spearman(x, y), 1.0, 1e-15);
    const std::vector<double> r = {4, 3, 3, 1};
    EXPECT_NEAR(spearman(x, r), -1.0, 1e-15);
}

// ---------------------------------------------------------------------------
// numerical_rank
// ---------------------------------------------------------------------------

TEST(NumericalRank, Examples) {
    EXPECT_EQ(numerical_rank(Eigen::MatrixXd::Identity(3, 3)), 3u);
    EXPECT_EQ(numerical_rank(Eigen::MatrixXd::Zero(4, 5)), 0u);
    Eigen::Vector2d u(1, 2);
    Eigen::Vector2d v(3, 4);
    EXPECT_EQ(numerical_rank(u * v.transpose()), 1u);
}

TEST(NumericalRank, AbsoluteTolerance) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
    m(0, 0) = 1.0;
    m(1, 1) = 1e-3;
    m(2, 2) = 1e-9;
    EXPECT_EQ(numerical_rank(m), 3u);
    FeatureConfig cfg;
    cfg.rank_tolerance_mode = RankTolerance::absolute;
    cfg.rank_tolerance_value = 1e-6;
    EXPECT_EQ(numerical_rank(m, cfg), 2u);
    cfg.rank_tolerance_value = 0.01;
    EXPECT_EQ(numerical_rank(m, cfg), 1u);
}

// ---------------------------------------------------------------------------
// layout
// ---------------------------------------------------------------------------

TEST(FeatureLayout, CountsAndNames) {
    EXPECT_EQ(feature_count(3), 112u);
    EXPECT_EQ(feature_count(4), 133u);
    const auto names = feature_names(3);
    EXPECT_EQ(names.front(), "f001_dim1");
    EXPECT_EQ(names[3], "f004_nnz_total");
    EXPECT_EQ(names[4], "f005_nnz_mode1_min");
    EXPECT_EQ(names[13], "f014_rank_mode1_min");
    EXPECT_EQ(names[22], "f023_le0.1_mode1_min");
    EXPECT_EQ(names[31], "f032_le0.2_mode1_min");
    EXPECT_EQ(names[102], "f103_le0.9_mode3_max");
    EXPECT_EQ(names[103], "f104_corr_mode1_min");
    EXPECT_EQ(names.back(), "f112_corr_mode3_max");
    const auto names4 = feature_names(4);
    EXPECT_EQ(names4.front(), "f001_nnz_total");
    EXPECT_EQ(names4.back(), "f133_corr_mode4_max");
    EXPECT_EQ(std::count_if(names4.begin(), names4.end(),
                            [](const std::string& n) { return n.find("rank") != std::string::npos; }),
              0);
}

TEST(FeatureLayout, Groups) {
    const auto g = feature_groups(3);
    ASSERT_EQ(g.size(), 112u);
    EXPECT_EQ(std::count(g.begin(), g.end(), "dims"), 3);
    EXPECT_EQ(std::count(g.begin(), g.end(), "nnz"), 10);
    EXPECT_EQ(std::count(g.begin(), g.end(), "rank"), 9);
    EXPECT_EQ(std::count(g.begin(), g.end(), "le0.5"), 9);
    EXPECT_EQ(std::count(g.begin(), g.end(), "corr"), 9);
}

TEST(FeatureConfig, Validation) {
    FeatureConfig cfg;
    cfg.thresholds = {0.5, 0.2};
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg.thresholds = {0.0, 0.5};
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg.thresholds = {0.5};
    cfg.correlation_pair_cap = 0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
}

// ---------------------------------------------------------------------------
// extract_features
// ---------------------------------------------------------------------------

TEST(ExtractFeatures, DimsExample) {
    const auto fv = extract_features(random_tensor({10, 20, 30}, 1));
    ASSERT_EQ(fv.size(), 112u);
    EXPECT_EQ(fv.values[0], 10.0);
    EXPECT_EQ(fv.values[1], 20.0);
    EXPECT_EQ(fv.values[2], 30.0);
    EXPECT_EQ(fv["f004_nnz_total"], 6000.0);
}

TEST(ExtractFeatures, ZeroTensor) {
    const auto fv = extract_features(DenseTensor::zeros(Shape({4, 5, 6})));
    for (std::size_t i = 3; i < 13; ++i) EXPECT_EQ(fv.values[i], 0.0) << fv.names[i];
    for (std::size_t i = 103; i < 112; ++i) EXPECT_EQ(fv.values[i], 0.0) << fv.names[i];
}

TEST(ExtractFeatures, PositiveRankOne) {
    const auto t = from_factors(random_factors({6, 7, 8}, 1, 4, 0.1, 1.0));
    const auto fv = extract_features(t);
    for (std::size_t i = 13; i < 22; ++i) EXPECT_EQ(fv.values[i], 1.0) << fv.names[i];
    for (std::size_t i = 103; i < 112; ++i) EXPECT_NEAR(fv.values[i], 1.0, 1e-12) << fv.names[i];
}

TEST(ExtractFeatures, NnzBlock) {
    // Non-zeros at (0,0,0), (0,1,2), (1,1,1) in a 2x3x3 tensor.
    const CooTensor c(Shape({2, 3, 3}), {{0, 0, 0, 0}, {0, 1, 2, 0}, {1, 1, 1, 0}}, {1.0, 2.0, 3.0});
    const auto fv = extract_features(c);
    EXPECT_EQ(fv["f004_nnz_total"], 3.0);
    EXPECT_EQ(fv["f005_nnz_mode1_min"], 1.0);
    EXPECT_EQ(fv["f006_nnz_mode1_median"], 1.5);
    EXPECT_EQ(fv["f007_nnz_mode1_max"], 2.0);
    EXPECT_EQ(fv["f008_nnz_mode2_min"], 0.0);
    EXPECT_EQ(fv["f009_nnz_mode2_median"], 1.0);
    EXPECT_EQ(fv["f010_nnz_mode2_max"], 2.0);
}

TEST(ExtractFeatures, CooAndDenseAgree) {
    const auto t = random_tensor({6, 5, 4}, 12, 0.3);
    const auto a = extract_features(t);
    const auto b = extract_features(to_coo(t));
    EXPECT_EQ(a.values, b.values);
    const Tensor v = to_coo(t);
    EXPECT_EQ(extract_features(v).values, a.values);
}

TEST(ExtractFeatures, FuzzLengthAndFiniteness) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> dim(1, 14);
    std::uniform_real_distribution<double> keep(0.0, 1.0);
    for (int i = 0; i < 60; ++i) {
        const bool four = i % 3 == 0;
        std::vector<std::size_t> dims = {dim(rng), dim(rng), dim(rng)};
        if (four) dims.push_back(dim(rng) / 2 + 1);
        const auto t = random_tensor(dims, rng(), keep(rng));
        const auto fv = extract_features(t);
        EXPECT_EQ(fv.size(), four ? 133u : 112u);
        EXPECT_EQ(fv.names.size(), fv.size());
        for (double v : fv.values) EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(ExtractFeatures, LengthIndependentOfDims) {
    for (std::size_t n : {2u, 5u, 17u}) {
        EXPECT_EQ(extract_features(random_tensor({n, n + 1, 3}, n)).size(), 112u);
        EXPECT_EQ(extract_features(random_tensor({n, 2, 3, 2}, n)).size(), 133u);
    }
}

TEST(ExtractFeatures, UnsupportedInputs) {
    FeatureConfig cfg;
    cfg.thresholds = {};
    EXPECT_THROW((void)extract_features(random_tensor({2, 2, 2}, 1), cfg), InvalidArgument);
}

TEST(ExtractFeatures, RankUpperBound) {
    for (std::size_t r = 1; r <= 6; ++r) {
        const auto t = from_factors(random_factors({12, 14, 16}, r, 100 + r));
        for (std::size_t m = 0; m < 3; ++m) {
            EXPECT_LE(slice_stats(t, m, SliceStatistic::rank).max, static_cast<double>(r));
        }
    }
}

TEST(ExtractFeatures, ThresholdCountsMonotone) {
    const auto t = minmax_normalize(random_tensor({5, 6, 7, 3}, 5, 0.7));
    const auto counts = detail::slice_threshold_counts(t, default_thresholds());
    for (std::size_t m = 0; m < 4; ++m) {
        for (std::size_t s = 0; s < t.shape().dim(m); ++s) {
            for (std::size_t k = 1; k < counts.size(); ++k) EXPECT_LE(counts[k - 1][m][s], counts[k][m][s]);
        }
    }
}

TEST(ExtractFeatures, PermutationInvariance) {
    const auto t = random_tensor({7, 6, 5}, 31, 0.8);
    for (std::size_t mode = 0; mode < 3; ++mode) {
        std::vector<std::size_t> perm(t.shape().dim(mode));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), std::mt19937_64(mode));
        std::vector<double> v(t.size());
        for (std::size_t f = 0; f < t.size(); ++f) {
            auto idx = t.shape().unravel(f);
            idx[mode] = perm[idx[mode]];
            v[t.shape().flat(idx)] = t.values()[f];
        }
        const auto a = extract_features(t);
        const auto b = extract_features(DenseTensor(t.shape(), v));
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-12) << a.names[i];
    }
}

TEST(ExtractFeatures, CorrelationPairCap) {
    const auto t = random_tensor({30, 8, 9}, 7);
    FeatureConfig capped;
    capped.correlation_pair_cap = 20;
    const auto corr = detail::pairwise_correlations(t, 0, capped);
    EXPECT_EQ(corr.size(), 20u);
    EXPECT_EQ(detail::pairwise_correlations(t, 0, {}).size(), 30u * 29u / 2u);
    EXPECT_EQ(extract_features(t, capped).values, extract_features(t, capped).values);
}

TEST(SliceStats, ThresholdExample) {
    const DenseTensor t(Shape({1, 2, 2}), {0.0, 0.15, 0.5, 1.0});
    const auto s = slice_stats(t, 0, SliceStatistic::threshold_count, {}, 0.2);
    EXPECT_EQ(s.min, 2.0);
    EXPECT_EQ(s.median, 2.0);
    EXPECT_EQ(s.max, 2.0);
}

TEST(SliceStats, CorrelationMatchesPearson) {
    const auto t = random_tensor({4, 3, 5}, 2);
    std::vector<double> expect;
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a + 1; b < 3; ++b) {
            const auto x = slice_values(t, 1, a);
            const auto y = slice_values(t, 1, b);
            expect.push_back(pearson(x, y));
        }
    }
    const auto s = slice_stats(t, 1, SliceStatistic::correlation);
    const auto e = summarize(expect);
    EXPECT_NEAR(s.min, e.min, 1e-12);
    EXPECT_NEAR(s.median, e.median, 1e-12);
    EXPECT_NEAR(s.max, e.max, 1e-12);
}

TEST(SliceStats, ModeOutOfRange) {
    EXPECT_THROW((void)slice_stats(random_tensor({2, 2, 2}, 1), 3, SliceStatistic::nnz), InvalidArgument);
}

TEST(CorrelationRank, DuplicatedColumnsSpearman) {
    // Columns drawn from k base vectors plus noise (gamma = 0.01): more
    // duplication means higher mean correlation and lower rank.
    constexpr std::size_t n = 30;
    constexpr double gamma = 0.01;
    FeatureConfig cfg;
    cfg.rank_tolerance_mode = RankTolerance::absolute;
    cfg.rank_tolerance_value = 0.5;
    std::vector<double> mean_corr;
    std::vector<double> ranks;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t trial = 0; trial < 100; ++trial) {
        const std::size_t k = trial % n + 1;
        Eigen::MatrixXd base(n, k);
        for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] = unit(rng);
        Eigen::MatrixXd m(n, n);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) m(i, j) = base(i, j % k) + gamma * gauss(rng);
        }
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                const Eigen::VectorXd ca = m.col(a);
                const Eigen::VectorXd cb = m.col(b);
                sum += pearson(std::span<const double>(ca.data(), n), std::span<const double>(cb.data(), n));
                ++pairs;
            }
        }
        mean_corr.push_back(sum / static_cast<double>(pairs));
        ranks.push_back(static_cast<double>(numerical_rank(m, cfg)));
    }
    EXPECT_LE(spearman(mean_corr, ranks), -0.8);
}

TEST(ExtractFeatures, ComplexityGuard) {
    auto best_ms = [](std::size_t n) {
        const auto t = random_tensor({n, n, n}, n);
        double best = 1e300;
        for (int rep = 0; rep < 3; ++rep) {
            const auto start = std::chrono::steady_clock::now();
            const auto fv = extract_features(t);
            EXPECT_EQ(fv.size(), 112u);
            best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                                      .count());
        }
        return best;
    };
    const double t40 = best_ms(40);
    const double t80 = best_ms(80);
    RecordProperty("ratio", std::to_string(t80 / t40));
    EXPECT_LT(t80 / t40, 20.0) << "n=40: " << t40 << " ms, n=80: " << t80 << " ms";
}

}  // namespace
}  // namespace frappe
