#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lungcrct/autograd.hpp"

namespace lungcrct::dependence {

/// Empirical distance correlation R(x, y) of two scalar samples, using
/// absolute differences and double-centred distance matrices. Returns 0 when
/// either distance variance vanishes. Requires equal lengths n >= 2.
double dcor(std::span<const double> x, std::span<const double> y);

/// Squared distance correlation R^2(x, y).
double dcor_squared(std::span<const double> x, std::span<const double> y);

/// Differentiable R(x, y) (or R^2 when `squared`) for x of shape [n] or [n,1]
/// against a fixed sample y. Coincident samples contribute a zero subgradient.
Var dcor(const Var& x, std::span<const double> y, bool squared = false);

struct LatentSplit {
    std::vector<std::size_t> non_causal;
    std::vector<std::size_t> causal;

    /// Throws ArgumentError unless the two sets are disjoint and cover 0..dim-1.
    void validate(std::size_t dim) const;
};

/// Disentanglement loss: mean dCor of the non-causal columns of z[n,d] with y
/// minus `tau` times the mean dCor of the causal columns. Lies in [-tau, 1].
Var dcor_loss(const Var& z, std::span<const double> y, const LatentSplit& split, double tau,
              bool squared = false);

/// Kraskov-Stoegbauer-Grassberger (first variant) k-nearest-neighbour mutual
/// information estimate in nats, clamped at 0. Evaluation only.
double knn_mi(std::span<const double> x, std::span<const double> y, std::size_t k = 5);

}  // namespace lungcrct::dependence
