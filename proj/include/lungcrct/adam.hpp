#pragma once

#include <cstdint>
#include <vector>

#include "lungcrct/autograd.hpp"

namespace lungcrct {

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    std::uint64_t step = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
};

/// Bias-corrected adaptive-moment update of `params` from their accumulated
/// gradients. Moments are created (zero) on the first call. Gradients are
/// consumed: each parameter's gradient is cleared after the update.
void adam_step(std::vector<Var>& params, AdamState& state);

/// Same update with explicitly supplied gradients (no graph involved).
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state);

class Adam {
public:
    Adam() = default;
    explicit Adam(double learning_rate) { state_.learning_rate = learning_rate; }

    void step(std::vector<Var>& params) { adam_step(params, state_); }
    AdamState& state() { return state_; }
    const AdamState& state() const { return state_; }

private:
    AdamState state_;
};

}  // namespace lungcrct
