// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "frappe/dataset.hpp"
#include "frappe/error.hpp"
#include "frappe/frappe.hpp"
#include "frappe/gbdt.hpp"
#include "frappe/stats.hpp"
#include "frappe/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace frappe {

struct BenchRecord {
    std::string id;
    std::size_t true_rank = 0;
    std::size_t predicted_rank = 0;
    double raw_prediction = 0.0;
    std::size_t max_rank = 0;
    double abs_error = 0.0;
    double pct_error = 0.0;
    double wall_ms = 0.0;
};

struct BenchAggregates {
    double mape = 0.0;  ///< mean |pred - true| / true, in percent
    double mae = 0.0;
    double mse = 0.0;
    double spearman = 0.0;
    double total_ms = 0.0;
};

[[nodiscard]] inline BenchRecord make_record(std::string id, std::size_t true_rank, std::size_t predicted,
                                             double wall_ms = 0.0) {
    if (true_rank < 1) throw InvalidArgument("true rank must be >= 1");
    BenchRecord r;
    r.id = std::move(id);
    r.true_rank = true_rank;
    r.predicted_rank = predicted;
    r.raw_prediction = static_cast<double>(predicted);
    r.abs_error = std::abs(static_cast<double>(predicted) - static_cast<double>(true_rank));
    r.pct_error = 100.0 * r.abs_error / static_cast<double>(true_rank);
    r.wall_ms = wall_ms;
    return r;
}

[[nodiscard]] inline BenchAggregates aggregate(std::span<const BenchRecord> records) {
    BenchAggregates a;
    if (records.empty()) return a;
    std::vector<double> truth;
    std::vector<double> pred;
    for (const auto& r : records) {
        a.mape += r.pct_error;
        a.mae += r.abs_error;
        a.mse += r.abs_error * r.abs_error;
        a.total_ms += r.wall_ms;
        truth.push_back(static_cast<double>(r.true_rank));
        pred.push_back(static_cast<double>(r.predicted_rank));
    }
    const auto n = static_cast<double>(records.size());
    a.mape /= n;
    a.mae /= n;
    a.mse /= n;
    a.spearman = spearman(pred, truth);
    return a;
}

struct BenchConfig {
    /// Self-supervised per-input mode when no model is given.
    std::optional<GbdtModel> model;
    /// Fixed candidate bound; 0 means twice each tensor's true rank.
    std::size_t max_rank = 0;
    std::size_t n_samples = 200;
    double noise_lo = 0.02;
    double noise_hi = 0.10;
    FeatureConfig features;
    GbdtParams gbdt;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct BenchReport {
    std::string mode;
    std::vector<BenchRecord> records;
    BenchAggregates aggregates;
    BenchConfig config;
};

/// Estimator input for one manifest entry: tensor i is estimated with seed
/// derive_seed(config.seed, i).
[[nodiscard]] inline EstimateOptions bench_estimate_options(const BenchConfig& cfg, std::size_t index,
                                                            std::size_t true_rank) {
    EstimateOptions o;
    o.max_rank = cfg.max_rank > 0 ? cfg.max_rank : 2 * true_rank;
    o.n_samples = cfg.n_samples;
    o.noise_lo = cfg.noise_lo;
    o.noise_hi = cfg.noise_hi;
    o.features = cfg.features;
    o.gbdt = cfg.gbdt;
    o.seed = derive_seed(cfg.seed, index);
    o.threads = cfg.threads;
    return o;
}

/// Estimates every tensor and scores it against its label. `on_record`, when
/// given, is called after each tensor (progress reporting).
template <typename OnRecord = std::nullptr_t>
[[nodiscard]] BenchReport run_bench(std::span<const DenseTensor> tensors, std::span<const std::size_t> true_ranks,
                                    std::span<const std::string> ids, const BenchConfig& cfg,
                                    OnRecord&& on_record = nullptr) {
    if (tensors.size() != true_ranks.size() || tensors.size() != ids.size()) {
        throw InvalidArgument("run_bench: tensors, ranks and ids differ in length");
    }
    BenchReport report;
    report.mode = cfg.model ? "model" : "frappe";
    report.config = cfg;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        const EstimateOptions opts = bench_estimate_options(cfg, i, true_ranks[i]);
        const RankEstimate est = cfg.model ? predict_with_model(*cfg.model, tensors[i], cfg.features, opts.max_rank)
                                           : estimate_rank(tensors[i], opts);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        BenchRecord rec = make_record(ids[i], true_ranks[i], est.rank, ms);
        rec.raw_prediction = est.raw_prediction;
        rec.max_rank = opts.max_rank;
        report.records.push_back(std::move(rec));
        if constexpr (!std::is_same_v<std::decay_t<OnRecord>, std::nullptr_t>) on_record(report.records.back());
    }
    report.aggregates = aggregate(report.records);
    return report;
}

/// Report document; wall-clock fields are dropped when `include_timing` is
/// false so repeated runs compare byte-identically.
[[nodiscard]] inline nlohmann::json to_json(const BenchReport& r, bool include_timing = true) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& rec : r.records) {
        nlohmann::json j = {{"id", rec.id},
                            {"true_rank", rec.true_rank},
                            {"predicted_rank", rec.predicted_rank},
                            {"raw_prediction", rec.raw_prediction},
                            {"max_rank", rec.max_rank},
                            {"abs_error", rec.abs_error},
                            {"pct_error", rec.pct_error}};
        if (include_timing) j["wall_ms"] = rec.wall_ms;
        records.push_back(std::move(j));
    }
    nlohmann::json agg = {{"mape", r.aggregates.mape},
                          {"mae", r.aggregates.mae},
                          {"mse", r.aggregates.mse},
                          {"spearman", r.aggregates.spearman}};
    if (include_timing) agg["total_ms"] = r.aggregates.total_ms;
    nlohmann::json config = {{"mode", r.mode},
                             {"max_rank", r.config.max_rank},
                             {"n_samples", r.config.n_samples},
                             {"noise", {r.config.noise_lo, r.config.noise_hi}},
                             {"threads", r.config.threads},
                             {"gbdt",
                              {{"n_trees", r.config.gbdt.n_trees},
                               {"learning_rate", r.config.gbdt.learning_rate},
                               {"max_leaves", r.config.gbdt.max_leaves},
                               {"min_samples_leaf", r.config.gbdt.min_samples_leaf}}}};
    return {{"records", std::move(records)},
            {"aggregates", std::move(agg)},
            {"config", std::move(config)},
            {"seed", r.config.seed}};
}

}  // namespace frappe
