// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "frappe/error.hpp"
#include "frappe/parallel.hpp"
#include "frappe/stats.hpp"
#include "frappe/tensor.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace frappe {

/// The three synthetic tensor families.
enum class SynthClass {
    sparse_sparse,  ///< sparse factors, Gaussian noise only on the non-zero support
    sparse_dense,   ///< sparse factors, Gaussian noise on every entry
    dense,          ///< dense factors, dense noise
};

inline constexpr std::array<SynthClass, 3> kSynthClasses = {
    SynthClass::sparse_sparse, SynthClass::sparse_dense, SynthClass::dense};

[[nodiscard]] inline std::string_view to_string(SynthClass c) {
    switch (c) {
        case SynthClass::sparse_sparse: return "sparse_sparse";
        case SynthClass::sparse_dense: return "sparse_dense";
        case SynthClass::dense: return "dense";
    }
    return "?";
}

[[nodiscard]] inline SynthClass synth_class_from_string(std::string_view s) {
    for (auto c : kSynthClasses) {
        if (to_string(c) == s) return c;
    }
    throw InvalidArgument("unknown synthetic class '" + std::string(s) + "'");
}

struct SynthRecipe {
    SynthClass klass = SynthClass::dense;
    Shape shape{1, 1, 1};
    std::size_t rank = 1;
    double noise_alpha = 0.0;
    /// Probability that a factor entry is kept non-zero.
    double factor_density = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (rank < 1) throw InvalidArgument("recipe rank must be >= 1");
        if (!(noise_alpha >= 0.0 && noise_alpha < 1.0)) {
            throw InvalidArgument("recipe noise_alpha must lie in [0, 1)");
        }
        if (!(factor_density > 0.0 && factor_density <= 1.0)) {
            throw InvalidArgument("recipe factor_density must lie in (0, 1]");
        }
        if (klass == SynthClass::dense && factor_density != 1.0) {
            throw InvalidArgument("dense recipes must use factor_density 1");
        }
    }
};

struct LabeledTensor {
    DenseTensor tensor;
    std::size_t true_rank;
    SynthRecipe recipe;
    /// Factors of the noiseless signal.
    FactorSet factors;
};

/// Per-entry factor keep probability p giving expected tensor density d for
/// rank R: solves 1 - (1 - p^3)^R = d.
[[nodiscard]] inline double solve_factor_density(double target_density, std::size_t rank) {
    if (!(target_density > 0.0 && target_density <= 1.0)) {
        throw InvalidArgument("target density must lie in (0, 1]");
    }
    if (rank < 1) throw InvalidArgument("rank must be >= 1");
    if (target_density == 1.0) return 1.0;
    const double per_component = 1.0 - std::pow(1.0 - target_density, 1.0 / static_cast<double>(rank));
    return std::cbrt(per_component);
}

inline constexpr int kMaxRedraws = 100;

/// Draws one known-rank tensor. Deterministic in the recipe.
[[nodiscard]] inline LabeledTensor gen_tensor(const SynthRecipe& recipe) {
    recipe.validate();
    const Shape& shape = recipe.shape;
    const auto r = static_cast<Eigen::Index>(recipe.rank);
    const bool sparse = recipe.klass != SynthClass::dense;
    std::mt19937_64 rng(recipe.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        std::vector<Eigen::MatrixXd> mats;
        for (std::size_t m = 0; m < shape.order(); ++m) {
            Eigen::MatrixXd f(static_cast<Eigen::Index>(shape.dim(m)), r);
            for (Eigen::Index i = 0; i < f.rows(); ++i) {
                for (Eigen::Index c = 0; c < r; ++c) {
                    double v = unit(rng);
                    if (sparse && unit(rng) >= recipe.factor_density) v = 0.0;
                    f(i, c) = v;
                }
            }
            mats.push_back(std::move(f));
        }
        FactorSet factors(std::move(mats));
        DenseTensor signal = from_factors(factors);
        if (nnz(signal) == 0) continue;

        if (recipe.noise_alpha == 0.0) {
            return {std::move(signal), recipe.rank, recipe, std::move(factors)};
        }
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<double> noise(shape.size());
        for (auto& x : noise) x = gauss(rng);
        if (recipe.klass == SynthClass::sparse_sparse) {
            const auto sv = signal.values();
            for (std::size_t f = 0; f < noise.size(); ++f) {
                if (sv[f] == 0.0) noise[f] = 0.0;
            }
        }
        DenseTensor noisy =
            add_scaled_noise(signal, DenseTensor(shape, std::move(noise)), recipe.noise_alpha);
        return {std::move(noisy), recipe.rank, recipe, std::move(factors)};
    }
    throw ComputationError("gen_tensor: every draw produced an all-zero tensor after " +
                           std::to_string(kMaxRedraws) + " attempts");
}

/// Draws each dimension uniformly from [dim_lo, dim_hi].
struct ShapeSampler {
    std::size_t order = 3;
    std::size_t dim_lo = 10;
    std::size_t dim_hi = 10;

    template <typename Rng>
    Shape operator()(Rng& rng) const {
        std::uniform_int_distribution<std::size_t> d(dim_lo, dim_hi);
        std::vector<std::size_t> dims;
        for (std::size_t m = 0; m < order; ++m) dims.push_back(d(rng));
        return Shape(std::move(dims));
    }
};

struct DatasetSpec {
    /// Tensors per class, in kSynthClasses order.
    std::array<std::size_t, 3> counts{1, 1, 1};
    ShapeSampler shapes;
    std::size_t rank_lo = 1;
    std::size_t rank_hi = 10;
    double noise_lo = 0.02;
    double noise_hi = 0.10;
    /// Factor keep probability for the sparse classes, drawn uniformly.
    double factor_density_lo = 0.2;
    double factor_density_hi = 0.7;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const {
        if (shapes.order != 3 && shapes.order != 4) throw InvalidArgument("order must be 3 or 4");
        if (shapes.dim_lo < 1 || shapes.dim_lo > shapes.dim_hi) {
            throw InvalidArgument("invalid dimension range");
        }
        if (rank_lo < 1 || rank_lo > rank_hi) throw InvalidArgument("invalid rank range");
        if (!(noise_lo >= 0.0 && noise_lo <= noise_hi && noise_hi < 1.0)) {
            throw InvalidArgument("invalid noise range");
        }
        if (!(factor_density_lo > 0.0 && factor_density_lo <= factor_density_hi &&
              factor_density_hi <= 1.0)) {
            throw InvalidArgument("invalid factor density range");
        }
    }
};

namespace detail {

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace detail

/// Recipes for a labelled dataset, class by class. Recipe i's parameters
/// and generation seed come from derive_seed(spec.seed, i).
[[nodiscard]] inline std::vector<SynthRecipe> dataset_recipes(const DatasetSpec& spec) {
    spec.validate();
    std::vector<SynthRecipe> recipes;
    std::uint64_t counter = 0;
    for (std::size_t c = 0; c < kSynthClasses.size(); ++c) {
        for (std::size_t k = 0; k < spec.counts[c]; ++k, ++counter) {
            std::mt19937_64 rng(derive_seed(spec.seed, counter));
            SynthRecipe r;
            r.klass = kSynthClasses[c];
            r.shape = spec.shapes(rng);
            r.rank = std::uniform_int_distribution<std::size_t>(spec.rank_lo, spec.rank_hi)(rng);
            r.noise_alpha = detail::uniform_in(rng, spec.noise_lo, spec.noise_hi);
            const double fd = detail::uniform_in(rng, spec.factor_density_lo, spec.factor_density_hi);
            r.factor_density = r.klass == SynthClass::dense ? 1.0 : fd;
            r.seed = rng();
            recipes.push_back(std::move(r));
        }
    }
    return recipes;
}

[[nodiscard]] inline std::vector<LabeledTensor> gen_dataset(const DatasetSpec& spec) {
    const auto recipes = dataset_recipes(spec);
    std::vector<std::optional<LabeledTensor>> slots(recipes.size());
    parallel_for(recipes.size(), spec.threads, [&](std::size_t i) { slots[i] = gen_tensor(recipes[i]); });
    std::vector<LabeledTensor> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

/// Tensors with density at or above this are matched with dense recipes.
inline constexpr double kDenseThreshold = 0.999;
/// Lower bound of the factor density drawn for sparse-signal recipes matched
/// to a fully dense input.
inline constexpr double kMixedFactorDensityLo = 0.1;

/// Training recipes mimicking `input`'s shape and sparsity.
[[nodiscard]] inline std::vector<SynthRecipe> match_recipes(const DenseTensor& input, std::size_t max_rank,
                                                            std::size_t n_samples, double noise_lo,
                                                            double noise_hi, std::uint64_t seed) {
    if (max_rank < 1) throw InvalidArgument("max_rank must be >= 1");
    if (n_samples < 1) throw InvalidArgument("n_samples must be >= 1");
    if (!(noise_lo >= 0.0 && noise_lo <= noise_hi && noise_hi < 1.0)) {
        throw InvalidArgument("invalid noise range");
    }
    const double d = density(input);
    if (d == 0.0) throw ComputationError("zero tensor: cannot match an all-zero input");
    const bool dense = d >= kDenseThreshold;

    std::vector<SynthRecipe> recipes;
    recipes.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        SynthRecipe r;
        r.shape = input.shape();
        r.rank = std::uniform_int_distribution<std::size_t>(1, max_rank)(rng);
        r.noise_alpha = detail::uniform_in(rng, noise_lo, noise_hi);
        if (dense) {
            if (i % 2 == 0) {
                r.klass = SynthClass::dense;
                r.factor_density = 1.0;
            } else {
                r.klass = SynthClass::sparse_dense;
                r.factor_density = detail::uniform_in(rng, kMixedFactorDensityLo, 1.0);
            }
        } else {
            r.klass = i % 2 == 0 ? SynthClass::sparse_sparse : SynthClass::sparse_dense;
            r.factor_density = solve_factor_density(d, r.rank);
        }
        r.seed = rng();
        recipes.push_back(std::move(r));
    }
    return recipes;
}

}  // namespace frappe
