// SPDX-License-Identifier: Apache-2.0
#pragma once

// Rank estimation front end.
//
// estimate_rank() is the self-supervised per-input mode: it synthesizes
// tensors of known rank shaped and sparsified like the input, trains a
// throwaway boosted-tree regressor on their features and evaluates it once
// on the input. No decomposition of the input is ever computed.
//
// train_global() / predict_with_model() are the pre-trained mode: one model
// fitted on a broad synthetic corpus and reused across inputs.

#include "frappe/error.hpp"
#include "frappe/features.hpp"
#include "frappe/gbdt.hpp"
#include "frappe/parallel.hpp"
#include "frappe/synth.hpp"
#include "frappe/tensor.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace frappe {

struct EstimateOptions {
    /// Largest rank considered; required.
    std::size_t max_rank = 0;
    std::size_t n_samples = 200;
    double noise_lo = 0.02;
    double noise_hi = 0.10;
    FeatureConfig features;
    GbdtParams gbdt;
    std::uint64_t seed = 0;
    /// Worker threads for generation and extraction; 0 = all cores.
    std::size_t threads = 1;

    void validate() const {
        if (max_rank < 1) throw InvalidArgument("max_rank must be >= 1");
        if (n_samples < 1) throw InvalidArgument("n_samples must be >= 1");
        if (!(noise_lo >= 0.0 && noise_lo <= noise_hi && noise_hi < 1.0)) {
            throw InvalidArgument("noise range must satisfy 0 <= lo <= hi < 1");
        }
        features.validate();
        gbdt.validate();
    }
};

struct Timings {
    double generate_ms = 0.0;
    double extract_ms = 0.0;
    double train_ms = 0.0;
    double predict_ms = 0.0;

    [[nodiscard]] double total_ms() const noexcept {
        return generate_ms + extract_ms + train_ms + predict_ms;
    }
};

struct RankEstimate {
    double raw_prediction = 0.0;
    std::size_t rank = 0;
    std::size_t max_rank = 0;
    /// Samples the model was trained on (0 for a supplied model).
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    Importances importances;
    FeatureVector features;
    Timings timings;
};

/// Round half away from zero, then clamp into [1, max_rank].
[[nodiscard]] inline std::size_t round_rank(double raw, std::size_t max_rank) {
    if (!std::isfinite(raw)) throw ComputationError("regressor produced a non-finite prediction");
    if (max_rank < 1) throw InvalidArgument("max_rank must be >= 1");
    const double r = std::round(raw);
    if (r < 1.0) return 1;
    if (r > static_cast<double>(max_rank)) return max_rank;
    return static_cast<std::size_t>(r);
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

inline Eigen::MatrixXd feature_matrix(std::span<const FeatureVector> rows) {
    if (rows.empty()) return {};
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw InvalidArgument("feature vectors differ in length");
        for (std::size_t f = 0; f < rows[i].size(); ++f) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = rows[i].values[f];
        }
    }
    return x;
}

}  // namespace detail

/// Self-supervised estimate for one input tensor.
[[nodiscard]] inline RankEstimate estimate_rank(const DenseTensor& t, const EstimateOptions& opts) {
    opts.validate();
    if (nnz(t) == 0) throw ComputationError("zero tensor: rank estimation needs a non-zero input");
    using detail::Clock;
    RankEstimate est;
    est.max_rank = opts.max_rank;
    est.n_samples = opts.n_samples;
    est.seed = opts.seed;

    auto start = Clock::now();
    const auto recipes = match_recipes(t, opts.max_rank, opts.n_samples, opts.noise_lo, opts.noise_hi, opts.seed);
    std::vector<std::optional<LabeledTensor>> synthetic(recipes.size());
    parallel_for(recipes.size(), opts.threads, [&](std::size_t i) { synthetic[i] = gen_tensor(recipes[i]); });
    est.timings.generate_ms = detail::ms_since(start);

    start = Clock::now();
    std::vector<FeatureVector> rows(recipes.size());
    parallel_for(recipes.size(), opts.threads, [&](std::size_t i) {
        rows[i] = extract_features(synthetic[i]->tensor, opts.features);
        synthetic[i].reset();
    });
    est.features = extract_features(t, opts.features);
    est.timings.extract_ms = detail::ms_since(start);

    start = Clock::now();
    std::vector<double> targets;
    targets.reserve(recipes.size());
    for (const auto& r : recipes) targets.push_back(static_cast<double>(r.rank));
    GbdtModel model = fit(detail::feature_matrix(rows), targets, opts.gbdt);
    est.timings.train_ms = detail::ms_since(start);

    start = Clock::now();
    est.raw_prediction = model.predict(est.features.values);
    est.rank = round_rank(est.raw_prediction, opts.max_rank);
    est.timings.predict_ms = detail::ms_since(start);

    const auto groups = feature_groups(t.order(), opts.features);
    est.importances = importances(model, groups);
    return est;
}

/// Fits one model over tensors with known ranks.
[[nodiscard]] inline GbdtModel train_global(std::span<const DenseTensor> tensors, std::span<const std::size_t> ranks,
                                            const GbdtParams& params = {}, const FeatureConfig& cfg = {},
                                            std::size_t threads = 1) {
    if (tensors.empty()) throw InvalidArgument("train_global: empty dataset");
    if (tensors.size() != ranks.size()) throw InvalidArgument("train_global: one rank per tensor required");
    const std::size_t order = tensors.front().order();
    for (const auto& t : tensors) {
        if (t.order() != order) throw InvalidArgument("train_global: dataset mixes tensor orders");
    }
    std::vector<FeatureVector> rows(tensors.size());
    parallel_for(tensors.size(), threads, [&](std::size_t i) { rows[i] = extract_features(tensors[i], cfg); });
    std::vector<double> targets(ranks.begin(), ranks.end());
    GbdtModel model = fit(detail::feature_matrix(rows), targets, params);
    model.feature_names = rows.front().names;
    return model;
}

/// Fits one model over a labelled synthetic corpus.
[[nodiscard]] inline GbdtModel train_global(std::span<const LabeledTensor> dataset, const GbdtParams& params = {},
                                            const FeatureConfig& cfg = {}, std::size_t threads = 1) {
    std::vector<DenseTensor> tensors;
    std::vector<std::size_t> ranks;
    for (const auto& lt : dataset) {
        tensors.push_back(lt.tensor);
        ranks.push_back(lt.true_rank);
    }
    return train_global(tensors, ranks, params, cfg, threads);
}

/// Extract, predict and round with a pre-trained model.
[[nodiscard]] inline RankEstimate predict_with_model(const GbdtModel& model, const DenseTensor& t,
                                                     const FeatureConfig& cfg, std::size_t max_rank) {
    if (max_rank < 1) throw InvalidArgument("max_rank must be >= 1");
    using detail::Clock;
    RankEstimate est;
    est.max_rank = max_rank;
    auto start = Clock::now();
    est.features = extract_features(t, cfg);
    est.timings.extract_ms = detail::ms_since(start);
    if (est.features.size() != model.n_features) {
        throw InvalidArgument("model expects " + std::to_string(model.n_features) + " features but the tensor yields " +
                              std::to_string(est.features.size()));
    }
    start = Clock::now();
    est.raw_prediction = model.predict(est.features.values);
    est.rank = round_rank(est.raw_prediction, max_rank);
    est.timings.predict_ms = detail::ms_since(start);
    est.importances = importances(model, feature_groups(t.order(), cfg));
    return est;
}

/// Report document. Timings are omitted when `include_timing` is false so
/// repeated runs compare byte-identically.
[[nodiscard]] inline nlohmann::json to_json(const RankEstimate& e, bool include_timing = true) {
    nlohmann::json imp = nlohmann::json::array();
    for (const auto& [group, count] : e.importances.groups) imp.push_back({{"group", group}, {"count", count}});
    nlohmann::json feats = nlohmann::json::object();
    for (std::size_t i = 0; i < e.features.size(); ++i) feats[e.features.names[i]] = e.features.values[i];
    nlohmann::json j = {
        {"rank", e.rank},
        {"raw_prediction", e.raw_prediction},
        {"max_rank", e.max_rank},
        {"n_samples", e.n_samples},
        {"seed", e.seed},
        {"importances", std::move(imp)},
        {"features", std::move(feats)},
    };
    if (include_timing) {
        j["timings"] = {{"generate_ms", e.timings.generate_ms},
                        {"extract_ms", e.timings.extract_ms},
                        {"train_ms", e.timings.train_ms},
                        {"predict_ms", e.timings.predict_ms}};
    }
    return j;
}

}  // namespace frappe
