#include "lungcrct/adam.hpp"

#include <cmath>

#include "lungcrct/errors.hpp"

namespace lungcrct {

namespace {

void prepare(AdamState& state, std::size_t count, auto shape_of) {
    if (state.first_moment.empty()) {
        for (std::size_t i = 0; i < count; ++i) {
            state.first_moment.emplace_back(shape_of(i), 0.0);
            state.second_moment.emplace_back(shape_of(i), 0.0);
        }
    }
    if (state.first_moment.size() != count)
        throw ShapeError("adam: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(count));
    for (std::size_t i = 0; i < count; ++i)
        if (state.first_moment[i].shape() != shape_of(i))
            throw ShapeError("adam: moment " + shape_str(state.first_moment[i].shape()) +
                             " vs parameter " + shape_str(shape_of(i)));
}

void update(double* p, const double* g, std::size_t size, Tensor& m, Tensor& v,
            const AdamState& s) {
    const double t = static_cast<double>(s.step);
    const double c1 = 1.0 - std::pow(s.beta1, t);
    const double c2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t i = 0; i < size; ++i) {
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p[i] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
    }
}

}  // namespace

void adam_step(std::vector<Var>& params, AdamState& state) {
    prepare(state, params.size(), [&](std::size_t i) { return params[i].shape(); });
    ++state.step;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& node = *params[i].node();
        if (node.has_grad())
            update(node.value.data(), node.grad.data(), node.value.size(), state.first_moment[i],
                   state.second_moment[i], state);
        else {
            const Tensor zero(node.value.shape(), 0.0);
            update(node.value.data(), zero.data(), zero.size(), state.first_moment[i],
                   state.second_moment[i], state);
        }
        params[i].zero_grad();
    }
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state) {
    if (grads.size() != params.size())
        throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (grads[i].shape() != params[i].shape())
            throw ShapeError("adam: gradient " + shape_str(grads[i].shape()) + " vs parameter " +
                             shape_str(params[i].shape()));
    prepare(state, params.size(), [&](std::size_t i) { return params[i].shape(); });
    ++state.step;
    for (std::size_t i = 0; i < params.size(); ++i)
        update(params[i].data(), grads[i].data(), params[i].size(), state.first_moment[i],
               state.second_moment[i], state);
}

}  // namespace lungcrct
