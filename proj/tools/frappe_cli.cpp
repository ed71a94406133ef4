// SPDX-License-Identifier: Apache-2.0
//
// frappe: command-line front end.
//
//   frappe estimate --input F --max-rank K [--samples N --seed S --threads T --json OUT]
//   frappe features --input F [--csv OUT]
//   frappe synth    --out DIR --count-per-class C --dims LO..HI --ranks LO..HI --noise LO..HI --seed S
//   frappe train    --manifest M --model OUT
//   frappe bench    --manifest M (--frappe | --model FILE) --report OUT
//   frappe cpd      --input F --ranks LIST
//
// Exit codes: 0 ok, 1 usage or invalid option, 2 I/O or parse error,
// 3 computation error (for example an all-zero input).

#include "frappe/bench.hpp"
#include "frappe/cpd.hpp"
#include "frappe/dataset.hpp"
#include "frappe/features.hpp"
#include "frappe/frappe.hpp"
#include "frappe/gbdt.hpp"
#include "frappe/synth.hpp"
#include "frappe/tensor_io.hpp"
#include "frappe/version.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitCompute = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename T>
T parse_number(const std::string& s, const std::string& what) {
    std::istringstream in(s);
    T v{};
    if (!(in >> v) || !in.eof()) throw UsageError("invalid " + what + " '" + s + "'");
    return v;
}

/// "LO..HI" or a single value.
template <typename T>
std::pair<T, T> parse_range(const std::string& s, const std::string& what) {
    const auto dots = s.find("..");
    if (dots == std::string::npos) {
        const T v = parse_number<T>(s, what);
        return {v, v};
    }
    const T lo = parse_number<T>(s.substr(0, dots), what);
    const T hi = parse_number<T>(s.substr(dots + 2), what);
    if (hi < lo) throw UsageError(what + " range '" + s + "' is empty");
    return {lo, hi};
}

/// "1,2,5" or "1..5".
std::vector<std::size_t> parse_rank_list(const std::string& s) {
    std::vector<std::size_t> out;
    if (s.find("..") != std::string::npos) {
        const auto [lo, hi] = parse_range<std::size_t>(s, "rank");
        for (std::size_t r = lo; r <= hi; ++r) out.push_back(r);
        return out;
    }
    std::stringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) out.push_back(parse_number<std::size_t>(tok, "rank"));
    return out;
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("FRAPPE_SEED")) return parse_number<std::uint64_t>(env, "FRAPPE_SEED");
    return 0;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw frappe::IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw frappe::IoError("failed writing '" + path + "'");
}

std::string csv_number(double v) { return frappe::detail::format_double(v); }

std::string features_csv(const frappe::FeatureVector& fv, bool header) {
    std::string out;
    if (header) {
        for (std::size_t i = 0; i < fv.size(); ++i) out += (i ? "," : "") + fv.names[i];
        out += '\n';
    }
    for (std::size_t i = 0; i < fv.size(); ++i) out += (i ? "," : "") + csv_number(fv.values[i]);
    out += '\n';
    return out;
}

std::string importances_csv(const frappe::Importances& imp, const std::vector<std::string>& names,
                            const std::vector<std::string>& groups) {
    std::string out = "feature_name,split_count,group\n";
    for (std::size_t f = 0; f < imp.counts.size(); ++f) {
        out += names[f] + "," + std::to_string(imp.counts[f]) + "," + groups[f] + "\n";
    }
    return out;
}

frappe::DenseTensor load_dense(const std::string& path) { return frappe::to_dense(frappe::parse_tensor(path)); }

struct GbdtFlags {
    std::size_t trees = 100;
    double learning_rate = 0.1;
    std::size_t max_leaves = 31;
    std::size_t min_samples_leaf = 5;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--trees", trees, "Boosting rounds")->capture_default_str();
        cmd->add_option("--learning-rate", learning_rate, "Shrinkage per tree")->capture_default_str();
        cmd->add_option("--max-leaves", max_leaves, "Leaves per tree")->capture_default_str();
        cmd->add_option("--min-samples-leaf", min_samples_leaf, "Minimum samples per leaf")->capture_default_str();
    }

    [[nodiscard]] frappe::GbdtParams params(std::uint64_t seed) const {
        frappe::GbdtParams p;
        p.n_trees = trees;
        p.learning_rate = learning_rate;
        p.max_leaves = max_leaves;
        p.min_samples_leaf = min_samples_leaf;
        p.seed = seed;
        return p;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor canonical-rank estimation from explainable features"};
    app.require_subcommand(1);
    app.set_version_flag("--version",
                         std::string("frappe ") + frappe::kVersion + " (model schema " +
                             std::to_string(frappe::kModelVersion) + ", report schema " +
                             std::to_string(frappe::kReportSchemaVersion) + ", manifest schema " +
                             std::to_string(frappe::kManifestSchemaVersion) + ")");

    std::uint64_t seed = 0;
    std::size_t threads = 0;
    bool no_timing = false;
    auto add_seed = [&](CLI::App* cmd) { cmd->add_option("--seed", seed, "Random seed (default: $FRAPPE_SEED or 0)"); };
    auto add_threads = [&](CLI::App* cmd) {
        cmd->add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
    };

    // estimate
    auto* estimate = app.add_subcommand("estimate", "Estimate the rank of one tensor (self-supervised)");
    std::string input;
    std::size_t max_rank = 0;
    std::size_t samples = 200;
    std::string json_out;
    std::string importances_out;
    std::string noise = "0.02..0.10";
    GbdtFlags gbdt_flags;
    estimate->add_option("--input", input, "Tensor file")->required();
    estimate->add_option("--max-rank", max_rank, "Largest candidate rank")->required();
    estimate->add_option("--samples", samples, "Synthetic training tensors")->capture_default_str();
    estimate->add_option("--noise", noise, "Synthetic noise range LO..HI")->capture_default_str();
    estimate->add_option("--json", json_out, "Write the report here instead of stdout");
    estimate->add_option("--importances", importances_out, "Write per-feature split counts (CSV)");
    estimate->add_flag("--no-timing", no_timing, "Omit wall-clock fields from the report");
    add_seed(estimate);
    add_threads(estimate);
    gbdt_flags.add_to(estimate);

    // features
    auto* features = app.add_subcommand("features", "Dump the feature vector of a tensor");
    std::string csv_out;
    features->add_option("--input", input, "Tensor file")->required();
    features->add_option("--csv", csv_out, "Output CSV (default stdout)");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic dataset");
    std::string out_dir;
    std::size_t count_per_class = 10;
    std::string dims = "20..40";
    std::string ranks = "1..10";
    std::size_t order = 3;
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--count-per-class", count_per_class, "Tensors per class")->capture_default_str();
    synth->add_option("--dims", dims, "Dimension range LO..HI")->capture_default_str();
    synth->add_option("--ranks", ranks, "Rank range LO..HI")->capture_default_str();
    synth->add_option("--noise", noise, "Noise range LO..HI")->capture_default_str();
    synth->add_option("--order", order, "Tensor order (3 or 4)")->capture_default_str();
    add_seed(synth);
    add_threads(synth);

    // train
    auto* train = app.add_subcommand("train", "Train a reusable global model on a dataset");
    std::string manifest;
    std::string model_out;
    train->add_option("--manifest", manifest, "Dataset manifest")->required();
    train->add_option("--model", model_out, "Output model JSON")->required();
    train->add_option("--importances", importances_out, "Write per-feature split counts (CSV)");
    add_seed(train);
    add_threads(train);
    gbdt_flags.add_to(train);

    // bench
    auto* bench = app.add_subcommand("bench", "Score estimates against a labelled dataset");
    bool use_frappe = false;
    std::string model_in;
    std::string report_out;
    bool verbose = false;
    bench->add_option("--manifest", manifest, "Dataset manifest")->required();
    auto* frappe_flag = bench->add_flag("--frappe", use_frappe, "Self-supervised per-tensor estimation");
    auto* model_opt = bench->add_option("--model", model_in, "Pre-trained model JSON");
    frappe_flag->excludes(model_opt);
    bench->add_option("--report", report_out, "Output report JSON")->required();
    bench->add_option("--max-rank", max_rank, "Fixed candidate bound (default: 2x true rank)");
    bench->add_option("--samples", samples, "Synthetic training tensors per input")->capture_default_str();
    bench->add_option("--noise", noise, "Synthetic noise range LO..HI")->capture_default_str();
    bench->add_flag("--no-timing", no_timing, "Omit wall-clock fields from the report");
    bench->add_flag("-v,--verbose", verbose, "Print one line per tensor on stderr");
    add_seed(bench);
    add_threads(bench);
    gbdt_flags.add_to(bench);

    // cpd
    auto* cpd = app.add_subcommand("cpd", "CP-ALS reconstruction-error curve (validation only)");
    std::string rank_list;
    frappe::AlsOptions als;
    cpd->add_option("--input", input, "Tensor file")->required();
    cpd->add_option("--ranks", rank_list, "Ranks, e.g. 1,2,4 or 1..8")->required();
    cpd->add_option("--max-iters", als.max_iters, "ALS sweeps per run")->capture_default_str();
    cpd->add_option("--tol", als.rel_change_tol, "Stop when the error changes less than this")->capture_default_str();
    cpd->add_option("--restarts", als.n_restarts, "Random restarts per rank")->capture_default_str();
    cpd->add_option("--csv", csv_out, "Output CSV (default stdout)");
    add_seed(cpd);

    try {
        seed = default_seed();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*estimate) {
            frappe::EstimateOptions opts;
            opts.max_rank = max_rank;
            opts.n_samples = samples;
            std::tie(opts.noise_lo, opts.noise_hi) = parse_range<double>(noise, "noise");
            opts.gbdt = gbdt_flags.params(seed);
            opts.seed = seed;
            opts.threads = threads;
            const auto t = load_dense(input);
            const auto est = frappe::estimate_rank(t, opts);
            write_text(json_out, frappe::to_json(est, !no_timing).dump(2) + "\n");
            if (!importances_out.empty()) {
                write_text(importances_out,
                           importances_csv(est.importances, est.features.names,
                                           frappe::feature_groups(t.order(), opts.features)));
            }
            if (!json_out.empty()) std::cout << "rank " << est.rank << '\n';
        } else if (*features) {
            const auto fv = frappe::extract_features(load_dense(input));
            write_text(csv_out, features_csv(fv, true));
        } else if (*synth) {
            frappe::DatasetSpec spec;
            spec.counts = {count_per_class, count_per_class, count_per_class};
            const auto [dlo, dhi] = parse_range<std::size_t>(dims, "dims");
            spec.shapes = {order, dlo, dhi};
            std::tie(spec.rank_lo, spec.rank_hi) = parse_range<std::size_t>(ranks, "ranks");
            std::tie(spec.noise_lo, spec.noise_hi) = parse_range<double>(noise, "noise");
            spec.seed = seed;
            spec.threads = threads;
            const auto data = frappe::gen_dataset(spec);
            const auto path = frappe::write_dataset(out_dir, data);
            std::cout << "wrote " << data.size() << " tensors and " << path.string() << '\n';
        } else if (*train) {
            const auto entries = frappe::read_manifest(manifest);
            std::vector<frappe::DenseTensor> tensors;
            std::vector<std::size_t> labels;
            for (const auto& e : entries) {
                tensors.push_back(load_dense(e.resolved.string()));
                labels.push_back(e.true_rank);
            }
            const auto model = frappe::train_global(tensors, labels, gbdt_flags.params(seed), {}, threads);
            frappe::save_model(model, model_out);
            if (!importances_out.empty()) {
                write_text(importances_out,
                           importances_csv(frappe::importances(model), model.feature_names,
                                           frappe::feature_groups(tensors.front().order())));
            }
            std::cout << "trained on " << tensors.size() << " tensors -> " << model_out << '\n';
        } else if (*bench) {
            if (!use_frappe && model_in.empty()) throw UsageError("bench needs --frappe or --model FILE");
            frappe::BenchConfig cfg;
            if (!model_in.empty()) cfg.model = frappe::load_model(model_in);
            cfg.max_rank = max_rank;
            cfg.n_samples = samples;
            std::tie(cfg.noise_lo, cfg.noise_hi) = parse_range<double>(noise, "noise");
            cfg.gbdt = gbdt_flags.params(seed);
            cfg.seed = seed;
            cfg.threads = threads;
            const auto entries = frappe::read_manifest(manifest);
            std::vector<frappe::DenseTensor> tensors;
            std::vector<std::size_t> labels;
            std::vector<std::string> ids;
            for (const auto& e : entries) {
                tensors.push_back(load_dense(e.resolved.string()));
                labels.push_back(e.true_rank);
                ids.push_back(e.path);
            }
            const auto report = frappe::run_bench(tensors, labels, ids, cfg, [&](const frappe::BenchRecord& r) {
                if (verbose) {
                    std::cerr << r.id << ": true " << r.true_rank << " predicted " << r.predicted_rank << '\n';
                }
            });
            write_text(report_out, frappe::to_json(report, !no_timing).dump(2) + "\n");
            std::cout << "MAPE " << report.aggregates.mape << " MAE " << report.aggregates.mae << " MSE "
                      << report.aggregates.mse << '\n';
        } else if (*cpd) {
            als.seed = seed;
            const auto t = load_dense(input);
            const auto rank_values = parse_rank_list(rank_list);
            const auto curve = frappe::error_curve(t, rank_values, als);
            std::string out = "rank,relative_error,iterations,converged\n";
            for (const auto& p : curve) {
                out += std::to_string(p.rank) + "," + csv_number(p.relative_error) + "," + std::to_string(p.iterations) +
                       "," + (p.converged ? "true" : "false") + "\n";
            }
            write_text(csv_out, out);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const frappe::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const frappe::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCompute;
    }
    return 0;
}
