// SPDX-License-Identifier: Apache-2.0
#pragma once

// Least-squares gradient-boosted regression trees with exact greedy splits
// and leaf-wise growth. Each tree fits the current residuals; a leaf holds
// the mean residual of its samples and the ensemble predicts
//
//     base + learning_rate * sum_k tree_k(x)
//
// Feature importance is the number of splits that use each feature.

#include "frappe/error.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace frappe {

struct GbdtParams {
    std::size_t n_trees = 100;
    double learning_rate = 0.1;
    std::size_t max_leaves = 31;
    std::size_t min_samples_leaf = 5;
    /// Recorded with the model; fitting itself draws no random numbers.
    std::uint64_t seed = 0;

    void validate() const {
        if (n_trees < 1) throw InvalidArgument("n_trees must be >= 1");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
            throw InvalidArgument("learning_rate must lie in (0, 1]");
        }
        if (max_leaves < 2) throw InvalidArgument("max_leaves must be >= 2");
        if (min_samples_leaf < 1) throw InvalidArgument("min_samples_leaf must be >= 1");
    }
};

/// Internal nodes route x[feature] < threshold to `left`. Leaves have
/// feature == -1 and carry `value`.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    [[nodiscard]] bool is_leaf() const noexcept { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    [[nodiscard]] double predict(std::span<const double> x) const {
        std::size_t n = 0;
        while (!nodes[n].is_leaf()) {
            const TreeNode& node = nodes[n];
            n = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] < node.threshold
                                             ? node.left
                                             : node.right);
        }
        return nodes[n].value;
    }
};

struct GbdtModel {
    double base_prediction = 0.0;
    GbdtParams params;
    std::size_t n_features = 0;
    std::vector<RegressionTree> trees;
    std::vector<std::size_t> feature_split_counts;
    /// Optional, aligned with features when present.
    std::vector<std::string> feature_names;

    [[nodiscard]] double predict(std::span<const double> x) const {
        if (x.size() != n_features) {
            throw InvalidArgument("predict: expected " + std::to_string(n_features) +
                                  " features, got " + std::to_string(x.size()));
        }
        double out = base_prediction;
        for (const auto& t : trees) out += params.learning_rate * t.predict(x);
        return out;
    }
};

[[nodiscard]] inline double predict(const GbdtModel& model, std::span<const double> x) {
    return model.predict(x);
}

namespace detail {

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    [[nodiscard]] bool valid() const noexcept { return feature >= 0; }
};

/// Gains at or below this fraction of the node's sum of squared residuals are
/// treated as rounding noise.
inline constexpr double kRelativeMinGain = 1e-12;

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, const std::vector<std::vector<std::size_t>>& sorted,
                const GbdtParams& params)
        : x_(x), sorted_(sorted), params_(params) {}

    RegressionTree build(const std::vector<double>& residual, std::vector<std::size_t>& split_counts) {
        const std::size_t n = residual.size();
        residual_ = &residual;
        leaf_of_.assign(n, 0);
        RegressionTree tree;
        tree.nodes.push_back({});
        leaves_.clear();
        leaves_.push_back(make_leaf(0, 0, n));

        while (leaves_.size() < params_.max_leaves) {
            // Earliest-created leaf wins ties.
            std::size_t best = leaves_.size();
            for (std::size_t l = 0; l < leaves_.size(); ++l) {
                if (!leaves_[l].split.valid()) continue;
                if (best == leaves_.size() || leaves_[l].split.gain > leaves_[best].split.gain) best = l;
            }
            if (best == leaves_.size()) break;
            split_leaf(tree, best, split_counts);
        }
        for (const Leaf& leaf : leaves_) {
            tree.nodes[leaf.node].value = leaf.sum / static_cast<double>(leaf.count);
        }
        return tree;
    }

private:
    struct Leaf {
        std::size_t node;
        std::size_t id;
        std::size_t count;
        double sum;
        SplitCandidate split;
    };

    Leaf make_leaf(std::size_t node, std::size_t id, std::size_t count) {
        Leaf leaf{node, id, count, 0.0, {}};
        double sumsq = 0.0;
        for (std::size_t i = 0; i < leaf_of_.size(); ++i) {
            if (leaf_of_[i] != id) continue;
            leaf.sum += (*residual_)[i];
            sumsq += (*residual_)[i] * (*residual_)[i];
        }
        leaf.split = best_split(id, count, leaf.sum, sumsq);
        return leaf;
    }

    SplitCandidate best_split(std::size_t id, std::size_t count, double sum, double sumsq) const {
        SplitCandidate best;
        const std::size_t msl = params_.min_samples_leaf;
        if (count < 2 * msl) return best;
        const double parent = sum * sum / static_cast<double>(count);
        const double min_gain = kRelativeMinGain * sumsq;
        std::vector<std::size_t> members;
        members.reserve(count);
        for (std::size_t f = 0; f < sorted_.size(); ++f) {
            members.clear();
            for (std::size_t i : sorted_[f]) {
                if (leaf_of_[i] == id) members.push_back(i);
            }
            const auto col = static_cast<Eigen::Index>(f);
            double left_sum = 0.0;
            for (std::size_t k = 1; k < count; ++k) {
                left_sum += (*residual_)[members[k - 1]];
                if (k < msl || count - k < msl) continue;
                const double lo = x_(static_cast<Eigen::Index>(members[k - 1]), col);
                const double hi = x_(static_cast<Eigen::Index>(members[k]), col);
                if (!(lo < hi)) continue;
                const double right_sum = sum - left_sum;
                const double gain = left_sum * left_sum / static_cast<double>(k) +
                                    right_sum * right_sum / static_cast<double>(count - k) - parent;
                if (gain > min_gain && gain > best.gain) {
                    double threshold = lo + 0.5 * (hi - lo);
                    if (!(threshold > lo)) threshold = hi;
                    best = {gain, static_cast<int>(f), threshold};
                }
            }
        }
        return best;
    }

    void split_leaf(RegressionTree& tree, std::size_t leaf_index, std::vector<std::size_t>& split_counts) {
        const Leaf parent = leaves_[leaf_index];
        const auto left_node = tree.nodes.size();
        const auto right_node = left_node + 1;
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        TreeNode& node = tree.nodes[parent.node];
        node.feature = parent.split.feature;
        node.threshold = parent.split.threshold;
        node.left = static_cast<int>(left_node);
        node.right = static_cast<int>(right_node);
        ++split_counts[static_cast<std::size_t>(parent.split.feature)];

        const std::size_t left_id = next_id_++;
        const std::size_t right_id = next_id_++;
        std::size_t left_count = 0;
        const auto col = static_cast<Eigen::Index>(parent.split.feature);
        for (std::size_t i = 0; i < leaf_of_.size(); ++i) {
            if (leaf_of_[i] != parent.id) continue;
            if (x_(static_cast<Eigen::Index>(i), col) < parent.split.threshold) {
                leaf_of_[i] = left_id;
                ++left_count;
            } else {
                leaf_of_[i] = right_id;
            }
        }
        leaves_[leaf_index] = make_leaf(left_node, left_id, left_count);
        leaves_.push_back(make_leaf(right_node, right_id, parent.count - left_count));
    }

    const Eigen::MatrixXd& x_;
    const std::vector<std::vector<std::size_t>>& sorted_;
    const GbdtParams& params_;
    const std::vector<double>* residual_ = nullptr;
    std::vector<std::size_t> leaf_of_;
    std::vector<Leaf> leaves_;
    std::size_t next_id_ = 1;
};

}  // namespace detail

/// Fits the ensemble on rows of `x` against targets `y`. Deterministic: ties
/// between candidate splits go to the lowest feature index, then the lowest
/// threshold; ties between leaves go to the earliest-created leaf.
[[nodiscard]] inline GbdtModel fit(const Eigen::MatrixXd& x, std::span<const double> y,
                                   const GbdtParams& params = {}) {
    params.validate();
    if (x.rows() == 0 || y.empty()) throw InvalidArgument("fit: empty training data");
    if (static_cast<std::size_t>(x.rows()) != y.size()) {
        throw InvalidArgument("fit: feature rows and targets differ in length");
    }
    if (x.cols() == 0) throw InvalidArgument("fit: no features");
    if (!x.allFinite()) throw InvalidArgument("fit: NaN or infinite feature value");
    for (double v : y) {
        if (!std::isfinite(v)) throw InvalidArgument("fit: NaN or infinite target");
    }

    const std::size_t n = y.size();
    const auto n_features = static_cast<std::size_t>(x.cols());
    GbdtModel model;
    model.params = params;
    model.n_features = n_features;
    model.feature_split_counts.assign(n_features, 0);
    model.base_prediction = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

    std::vector<std::vector<std::size_t>> sorted(n_features);
    for (std::size_t f = 0; f < n_features; ++f) {
        auto& order = sorted[f];
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
        const auto col = static_cast<Eigen::Index>(f);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return x(static_cast<Eigen::Index>(a), col) < x(static_cast<Eigen::Index>(b), col);
        });
    }

    std::vector<double> prediction(n, model.base_prediction);
    std::vector<double> residual(n);
    std::vector<double> row(n_features);
    for (std::size_t k = 0; k < params.n_trees; ++k) {
        for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - prediction[i];
        detail::TreeBuilder builder(x, sorted, params);
        RegressionTree tree = builder.build(residual, model.feature_split_counts);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t f = 0; f < n_features; ++f) {
                row[f] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
            }
            prediction[i] += params.learning_rate * tree.predict(row);
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

/// Split counts per feature and summed per group.
struct Importances {
    std::vector<std::size_t> counts;
    /// (group, total count) in order of first appearance in `groups`.
    std::vector<std::pair<std::string, std::size_t>> groups;
};

/// `groups` labels each feature (e.g. feature_groups()); pass an empty list
/// to skip grouping.
[[nodiscard]] inline Importances importances(const GbdtModel& model,
                                             std::span<const std::string> groups = {}) {
    Importances out;
    out.counts = model.feature_split_counts;
    if (out.counts.size() < model.n_features) out.counts.resize(model.n_features, 0);
    if (groups.empty()) return out;
    if (groups.size() != out.counts.size()) {
        throw InvalidArgument("importances: group labels do not match the feature count");
    }
    for (std::size_t f = 0; f < groups.size(); ++f) {
        auto it = std::find_if(out.groups.begin(), out.groups.end(),
                               [&](const auto& g) { return g.first == groups[f]; });
        if (it == out.groups.end()) {
            out.groups.emplace_back(groups[f], out.counts[f]);
        } else {
            it->second += out.counts[f];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence. Versioned JSON; doubles are written with round-trip precision
// so a loaded model predicts bit-identically.
// ---------------------------------------------------------------------------

inline constexpr const char* kModelFormat = "frappe-gbdt";
inline constexpr int kModelVersion = 1;

[[nodiscard]] inline nlohmann::json to_json(const GbdtModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) {
                nodes.push_back({{"value", n.value}});
            } else {
                nodes.push_back(
                    {{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
            }
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    return {
        {"format", kModelFormat},
        {"version", kModelVersion},
        {"n_features", m.n_features},
        {"base_prediction", m.base_prediction},
        {"params",
         {{"n_trees", m.params.n_trees},
          {"learning_rate", m.params.learning_rate},
          {"max_leaves", m.params.max_leaves},
          {"min_samples_leaf", m.params.min_samples_leaf},
          {"seed", m.params.seed}}},
        {"feature_names", m.feature_names},
        {"feature_split_counts", m.feature_split_counts},
        {"trees", std::move(trees)},
    };
}

[[nodiscard]] inline GbdtModel model_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object() || j.value("format", "") != kModelFormat) {
            throw ParseError("not a frappe-gbdt model document", 0);
        }
        const int version = j.at("version").get<int>();
        if (version != kModelVersion) {
            throw ParseError("unsupported model version " + std::to_string(version) + " (expected " +
                                 std::to_string(kModelVersion) + ")",
                             0);
        }
        GbdtModel m;
        m.n_features = j.at("n_features").get<std::size_t>();
        m.base_prediction = j.at("base_prediction").get<double>();
        const auto& p = j.at("params");
        m.params.n_trees = p.at("n_trees").get<std::size_t>();
        m.params.learning_rate = p.at("learning_rate").get<double>();
        m.params.max_leaves = p.at("max_leaves").get<std::size_t>();
        m.params.min_samples_leaf = p.at("min_samples_leaf").get<std::size_t>();
        m.params.seed = p.at("seed").get<std::uint64_t>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.feature_split_counts = j.at("feature_split_counts").get<std::vector<std::size_t>>();
        if (!m.feature_names.empty() && m.feature_names.size() != m.n_features) {
            throw ParseError("feature_names length differs from n_features", 0);
        }
        if (m.feature_split_counts.size() != m.n_features) {
            throw ParseError("feature_split_counts length differs from n_features", 0);
        }

        std::vector<std::size_t> recount(m.n_features, 0);
        for (const auto& jt : j.at("trees")) {
            RegressionTree t;
            for (const auto& jn : jt.at("nodes")) {
                TreeNode n;
                if (jn.contains("value")) {
                    n.value = jn.at("value").get<double>();
                } else {
                    n.feature = jn.at("feature").get<int>();
                    n.threshold = jn.at("threshold").get<double>();
                    n.left = jn.at("left").get<int>();
                    n.right = jn.at("right").get<int>();
                    if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= m.n_features) {
                        throw ParseError("split feature index out of range", 0);
                    }
                    ++recount[static_cast<std::size_t>(n.feature)];
                }
                t.nodes.push_back(n);
            }
            if (t.nodes.empty()) throw ParseError("tree without nodes", 0);
            // Children must point forward so traversal terminates.
            for (std::size_t i = 0; i < t.nodes.size(); ++i) {
                const auto& n = t.nodes[i];
                if (n.is_leaf()) continue;
                for (int c : {n.left, n.right}) {
                    if (c <= static_cast<int>(i) || static_cast<std::size_t>(c) >= t.nodes.size()) {
                        throw ParseError("tree child index out of range", 0);
                    }
                }
            }
            m.trees.push_back(std::move(t));
        }
        if (recount != m.feature_split_counts) {
            throw ParseError("feature_split_counts disagree with the stored trees", 0);
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed model document: ") + e.what(), 0);
    }
}

inline void save_model(const GbdtModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << to_json(m).dump(1) << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

[[nodiscard]] inline GbdtModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": malformed model document: " + e.what(), 0);
    }
    try {
        return model_from_json(j);
    } catch (const ParseError& e) {
        throw e.in_file(path);
    }
}

}  // namespace frappe
