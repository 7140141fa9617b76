#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "lungcrct/autograd.hpp"

namespace lungcrct::variation {

struct HistogramSpec {
    std::size_t bins = 5;
    void validate() const;
};

/// Sample standard deviation (n - 1 denominator); needs at least 2 values.
double sample_std(std::span<const double> values);
/// Sample standard deviation of one column of z[n,d].
double column_std(const Tensor& z, std::size_t column);

/// z with `amount` added to `column` only.
Tensor shift_column(const Tensor& z, std::size_t column, double amount);
/// 1-sigma impulse on `column`, sigma taken from z itself.
Tensor impulse(const Tensor& z, std::size_t column);

/// Base-2 entropy of an equal-width histogram over [min, max]. Constant input
/// gives 0.
double shannon_entropy(std::span<const double> values, const HistogramSpec& spec = {});

/// Differentiable entropy of each row of x[n, ...] with triangular soft bin
/// assignment over bin centres. Returns [n].
Var soft_entropy_rows(const Var& x, const HistogramSpec& spec = {});

struct VariationLoss {
    Var soft;     // training surrogate
    double hard;  // histogram entropy, for reporting
};

using Decoder = std::function<Var(const Var&)>;

/// Mean entropy of squared-difference images between G(z) and G(z + sigma_i e_i)
/// over `causal` columns and a random subset of `subset_size` rows. Sigmas
/// come from the full z; z carries no gradient.
VariationLoss variation_loss(const Tensor& z, const Decoder& decode, const std::vector<std::size_t>& causal,
                             std::mt19937_64& rng, std::size_t subset_size = 50,
                             const HistogramSpec& spec = {});

}  // namespace lungcrct::variation
