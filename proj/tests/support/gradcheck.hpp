#pragma once

// Central finite-difference oracle used by the gradient tests. It only reads
// forward values, so it stays independent of every backward rule it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lungcrct/autograd.hpp"

namespace lungcrct::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
};

/// Compares backward() against central differences for every parameter.
/// `loss` must rebuild the graph from the current parameter values on each call.
/// At most `max_entries` coordinates per parameter are probed (chosen at random).
inline GradCheckResult gradcheck(std::vector<Var>& params, const std::function<Var()>& loss,
                                 double step = 1e-5, std::size_t max_entries = 64,
                                 unsigned seed = 7) {
    for (auto& p : params) p.zero_grad();
    Var root = loss();
    backward(root);
    std::vector<Tensor> analytic;
    for (auto& p : params) analytic.push_back(p.grad());
    for (auto& p : params) p.zero_grad();

    std::mt19937_64 rng(seed);
    GradCheckResult result;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& value = params[k].mutable_value();
        std::vector<std::size_t> idx(value.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (idx.size() > max_entries) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_entries);
        }
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i : idx) {
            const double orig = value[i];
            value[i] = orig + step;
            const double up = loss().value().item();
            value[i] = orig - step;
            const double down = loss().value().item();
            value[i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[k][i];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
            ++result.checked;
        }
        const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
        result.max_relative_error = std::max(result.max_relative_error, std::sqrt(diff2) / denom);
    }
    return result;
}

}  // namespace lungcrct::testing
