// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any gating criterion fails. The explainability check
// (7) is reported but never gates.

#include "frappe/bench.hpp"
#include "frappe/cpd.hpp"
#include "frappe/features.hpp"
#include "frappe/frappe.hpp"
#include "frappe/gbdt.hpp"
#include "frappe/stats.hpp"
#include "frappe/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace frappe;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

std::vector<double> difference(const DenseTensor& a, const DenseTensor& b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a.values()[i] - b.values()[i];
    return d;
}

// 1. Feature vector length and finiteness over random shapes and densities.
Outcome feature_contract() {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> val(-5.0, 5.0);
    std::size_t bad = 0;
    std::size_t checked = 0;
    auto run = [&](std::size_t order, std::size_t count, std::size_t dim_hi, std::size_t expected) {
        std::uniform_int_distribution<std::size_t> dim(1, dim_hi);
        for (std::size_t i = 0; i < count; ++i) {
            std::vector<std::size_t> dims;
            for (std::size_t m = 0; m < order; ++m) dims.push_back(dim(rng));
            const Shape shape(dims);
            const double keep = unit(rng);
            std::vector<double> v(shape.size());
            for (auto& x : v) x = unit(rng) < keep ? val(rng) : 0.0;
            const auto fv = extract_features(DenseTensor(shape, std::move(v)));
            const bool finite = std::all_of(fv.values.begin(), fv.values.end(), [](double x) { return std::isfinite(x); });
            if (fv.size() != expected || fv.names.size() != expected || !finite) ++bad;
            ++checked;
        }
    };
    run(3, 200, 30, 112);
    run(4, 200, 9, 133);
    return {bad == 0, fmt("%zu tensors (200 order-3 -> 112, 200 order-4 -> 133), %zu violations", checked, bad)};
}

// 2. Noiseless tensors: slice ranks bounded by the true rank and CP-ALS
// recovers them at the true rank.
Outcome known_rank_soundness() {
    const auto start = Clock::now();
    DatasetSpec spec;
    spec.counts = {10, 10, 10};
    spec.shapes = {3, 20, 40};
    spec.rank_lo = 1;
    spec.rank_hi = 10;
    spec.noise_lo = 0.0;
    spec.noise_hi = 0.0;
    spec.seed = 202;
    const auto data = gen_dataset(spec);
    AlsOptions als;
    als.max_iters = 3000;
    als.rel_change_tol = 1e-13;
    als.n_restarts = 5;
    std::size_t rank_violations = 0;
    std::size_t fit_failures = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& lt = data[i];
        for (std::size_t m = 0; m < 3; ++m) {
            if (slice_stats(lt.tensor, m, SliceStatistic::rank).max > static_cast<double>(lt.true_rank)) {
                ++rank_violations;
            }
        }
        als.seed = i;
        const double err = cp_als(lt.tensor, lt.true_rank, als).relative_error;
        worst = std::max(worst, err);
        if (!(err < 1e-5)) ++fit_failures;
    }
    const double secs = seconds_since(start);
    return {rank_violations == 0 && fit_failures == 0 && secs < 120.0,
            fmt("30 tensors: %zu slice-rank violations, %zu fits >= 1e-5 (worst %.2e), %.1f s (limit 120 s)",
                rank_violations, fit_failures, worst, secs)};
}

// 3. Injected noise has relative norm alpha.
Outcome noise_contract() {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> alpha(0.02, 0.10);
    std::uniform_int_distribution<std::size_t> dim(10, 30);
    std::uniform_int_distribution<std::size_t> rank(1, 10);
    double worst = 0.0;
    for (std::size_t i = 0; i < 30; ++i) {
        SynthRecipe r;
        r.klass = kSynthClasses[i % 3];
        r.shape = Shape({dim(rng), dim(rng), dim(rng)});
        r.rank = rank(rng);
        r.noise_alpha = alpha(rng);
        r.factor_density = r.klass == SynthClass::dense ? 1.0 : 0.6;
        r.seed = rng();
        const auto lt = gen_tensor(r);
        const auto g = from_factors(lt.factors);
        const double measured = frobenius_norm(difference(lt.tensor, g)) / frobenius_norm(g);
        worst = std::max(worst, std::abs(measured - r.noise_alpha));
    }
    return {worst <= 1e-12, fmt("30 tensors, max |measured - alpha| = %.2e (limit 1e-12)", worst)};
}

// 4. Mean pairwise column correlation against numerical rank.
Outcome correlation_rank() {
    constexpr std::size_t n = 30;
    constexpr double gamma = 0.01;
    FeatureConfig cfg;
    cfg.rank_tolerance_mode = RankTolerance::absolute;
    cfg.rank_tolerance_value = 0.5;
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> corr;
    std::vector<double> ranks;
    for (std::size_t trial = 0; trial < 100; ++trial) {
        const std::size_t groups = trial % n + 1;
        Eigen::MatrixXd base(n, groups);
        for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] = unit(rng);
        Eigen::MatrixXd m(n, n);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) m(i, j) = base(i, j % groups) + gamma * gauss(rng);
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
        corr.push_back(sum / static_cast<double>(pairs));
        ranks.push_back(static_cast<double>(numerical_rank(m, cfg)));
    }
    const double rho = spearman(corr, ranks);
    return {rho <= -0.8, fmt("100 matrices (30x30, gamma 0.01): Spearman = %.4f (limit <= -0.8)", rho)};
}

// Shared state of the benchmark criteria (5, 6, 7).
struct Benchmark {
    std::vector<DenseTensor> tensors;
    std::vector<std::size_t> ranks;
    BenchReport report;
    double seconds = 0.0;
    std::size_t cp_als_calls = 0;
};

Benchmark run_benchmark() {
    DatasetSpec spec;
    spec.counts = {20, 20, 20};
    spec.shapes = {3, 25, 45};
    spec.rank_lo = 3;
    spec.rank_hi = 15;
    spec.noise_lo = 0.02;
    spec.noise_hi = 0.10;
    spec.seed = 2024;
    spec.threads = 0;
    Benchmark b;
    std::vector<std::string> ids;
    for (auto& lt : gen_dataset(spec)) {
        ids.push_back("tensor_" + std::to_string(ids.size()));
        b.tensors.push_back(std::move(lt.tensor));
        b.ranks.push_back(lt.true_rank);
    }
    BenchConfig cfg;
    cfg.n_samples = 200;
    cfg.seed = 7;
    cfg.threads = 0;
    const std::size_t calls_before = cp_als_invocations().load();
    const auto start = Clock::now();
    b.report = run_bench(b.tensors, b.ranks, ids, cfg);
    b.seconds = seconds_since(start);
    b.cp_als_calls = cp_als_invocations().load() - calls_before;
    return b;
}

// 5. Benchmark accuracy against the constant midpoint predictor and wall time.
Outcome frappe_benchmark(const Benchmark& b) {
    const auto& agg = b.report.aggregates;
    std::size_t largest = 0;
    for (const auto& r : b.report.records) largest = std::max(largest, r.max_rank);
    const double midpoint = (1.0 + static_cast<double>(largest)) / 2.0;
    double baseline = 0.0;
    for (std::size_t r : b.ranks) baseline += std::abs(midpoint - static_cast<double>(r));
    baseline /= static_cast<double>(b.ranks.size());
    constexpr double kMinSpearman = 0.85;
    constexpr double kMaxMaeRatio = 0.35;
    constexpr double kMaxSeconds = 600.0;
    const double ratio = agg.mae / baseline;
    const bool pass = agg.spearman >= kMinSpearman && ratio <= kMaxMaeRatio && b.seconds < kMaxSeconds;
    return {pass, fmt("60 tensors: Spearman %.4f (>= %.2f), MAE %.3f vs midpoint %.1f MAE %.3f, ratio %.3f "
                      "(<= %.2f), MAPE %.2f%%, MSE %.3f, %.1f s (< %.0f s)",
                      agg.spearman, kMinSpearman, agg.mae, midpoint, baseline, ratio, kMaxMaeRatio, agg.mape,
                      agg.mse, b.seconds, kMaxSeconds)};
}

// 6. No CP-ALS call during estimation, and each estimate is faster than one
// CP-ALS fit at R = max_rank on the same tensor.
Outcome cpd_freedom(const Benchmark& b) {
    std::size_t faster = 0;
    double frappe_ms = 0.0;
    double cpd_ms = 0.0;
    for (std::size_t i = 0; i < b.tensors.size(); ++i) {
        const auto& rec = b.report.records[i];
        AlsOptions opts;
        opts.seed = derive_seed(7, i);
        const auto start = Clock::now();
        (void)cp_als(b.tensors[i], rec.max_rank, opts);
        const double ms = seconds_since(start) * 1e3;
        cpd_ms += ms;
        frappe_ms += rec.wall_ms;
        if (rec.wall_ms < ms) ++faster;
    }
    const std::size_t n = b.tensors.size();
    return {b.cp_als_calls == 0 && faster == n,
            fmt("cp_als calls during estimation: %zu; estimate faster than cp_als(R = max_rank) on %zu/%zu "
                "tensors (mean %.0f ms vs %.0f ms)",
                b.cp_als_calls, faster, n, frappe_ms / static_cast<double>(n), cpd_ms / static_cast<double>(n))};
}

// 7. Correlation features rank among the two most used groups of a global
// model fitted on the benchmark tensors.
Outcome explainability(const Benchmark& b) {
    const auto model = train_global(b.tensors, b.ranks, {}, {}, 0);
    const auto groups = feature_groups(3);
    auto imp = importances(model, groups).groups;
    std::stable_sort(imp.begin(), imp.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    std::string ranking;
    std::size_t corr_place = 0;
    for (std::size_t i = 0; i < imp.size(); ++i) {
        if (imp[i].first == "corr") corr_place = i + 1;
        if (i < 5) ranking += (i ? ", " : "") + imp[i].first + "=" + std::to_string(imp[i].second);
    }
    return {corr_place >= 1 && corr_place <= 2,
            fmt("corr group places #%zu by split count (top: %s)", corr_place, ranking.c_str())};
}

// 8. Two CLI bench runs with the same seed and threads are byte-identical.
Outcome cli_determinism() {
    const fs::path dir = fs::temp_directory_path() / "frappe_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = FRAPPE_CLI_PATH;
    const std::string quiet = " > " + (dir / "log.txt").string() + " 2>&1";
    auto sh = [&](const std::string& args) { return std::system((cli + " " + args + quiet).c_str()); };
    const std::string manifest = (dir / "ds" / "manifest.json").string();
    int rc = sh("synth --out " + (dir / "ds").string() +
                " --count-per-class 2 --dims 10..14 --ranks 2..5 --noise 0.02..0.10 --seed 11");
    const std::string bench_args = "bench --manifest " + manifest + " --frappe --samples 40 --seed 9 --threads 2 "
                                   "--no-timing --report ";
    if (rc == 0) rc = sh(bench_args + (dir / "a.json").string());
    if (rc == 0) rc = sh(bench_args + (dir / "b.json").string());
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string a = slurp(dir / "a.json");
    const std::string b = slurp(dir / "b.json");
    fs::remove_all(dir);
    const bool pass = rc == 0 && !a.empty() && a == b;
    return {pass, fmt("exit %d, reports %zu and %zu bytes, identical: %s", rc, a.size(), b.size(),
                      a == b ? "yes" : "no")};
}

// 9. Boosting on two separable clusters follows the closed form.
Outcome gbdt_oracle() {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(10, 3);
    std::vector<double> y(10);
    for (Eigen::Index i = 0; i < 10; ++i) {
        x(i, 0) = i < 5 ? 0.0 : 1.0;
        x(i, 1) = 2.0;
        y[static_cast<std::size_t>(i)] = i < 5 ? 0.0 : 10.0;
    }
    GbdtParams p;
    p.n_trees = 100;
    p.learning_rate = 0.1;
    p.min_samples_leaf = 1;
    const auto model = fit(x, y, p);
    const std::vector<double> probe = {1.0, 2.0, 0.0};
    const double got = model.predict(probe);
    const double expected = 10.0 - 5.0 * std::pow(0.9, 100);
    const double err = std::abs(got - expected);
    return {err <= 1e-9, fmt("prediction %.12f, closed form %.12f, |diff| %.2e (limit 1e-9)", got, expected, err)};
}

}  // namespace

int main() {
    std::size_t gating_failures = 0;
    auto report = [&](const char* id, const char* name, const Outcome& o, bool gating = true) {
        const char* status = o.pass ? "PASS" : (gating ? "FAIL" : "WARN");
        std::cout << status << "  [" << id << "] " << name << ": " << o.detail << std::endl;
        if (!o.pass && gating) ++gating_failures;
    };
    auto guarded = [](const std::function<Outcome()>& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            return Outcome{false, std::string("exception: ") + e.what()};
        }
    };

    report("1", "feature contract", guarded(feature_contract));
    report("2", "known-rank soundness", guarded(known_rank_soundness));
    report("3", "noise contract", guarded(noise_contract));
    report("4", "correlation-rank property", guarded(correlation_rank));

    std::optional<Benchmark> bench;
    const Outcome bench_outcome = guarded([&] {
        bench = run_benchmark();
        return frappe_benchmark(*bench);
    });
    report("5", "benchmark accuracy and runtime", bench_outcome);
    if (bench) {
        report("6", "estimation without decomposition", guarded([&] { return cpd_freedom(*bench); }));
        report("7", "explainability (non-gating)", guarded([&] { return explainability(*bench); }), false);
    } else {
        report("6", "estimation without decomposition", {false, "benchmark did not run"});
        report("7", "explainability (non-gating)", {false, "benchmark did not run"}, false);
    }
    report("8", "report determinism", guarded(cli_determinism));
    report("9", "boosting closed form", guarded(gbdt_oracle));

    std::cout << (gating_failures == 0 ? "all gating criteria passed" : std::to_string(gating_failures) +
                                                                            " gating criteria failed")
              << std::endl;
    return gating_failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
