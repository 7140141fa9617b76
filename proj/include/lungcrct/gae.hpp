#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lungcrct/adam.hpp"
#include "lungcrct/causal.hpp"

namespace lungcrct::gae {

struct GaeConfig {
    std::size_t d = 4;
    std::size_t hidden = 4;         // per-variable hidden width
    std::size_t embed_dim = 1;      // per-variable message width
    std::size_t hidden_layers = 2;  // ELU layers in each of f1 and f2

    void validate() const;
};

/// Dense layer over d stacked variables whose weight is restricted to the
/// diagonal blocks, so variable i only ever sees its own slice.
struct MaskedDense {
    Var weight;  // [d*in, d*out], raw
    Var bias;    // [d*out]
    Tensor mask;

    /// Effective weight is weight o mask, applied inside the graph.
    Var operator()(const Var& x) const;
};

/// [d*in, d*out] with ones on the d diagonal blocks of size in x out.
Tensor block_mask(std::size_t d, std::size_t in, std::size_t out);

/// H[n, i*e + k] = sum_j A[j][i] emb[n, j*e + k].
Var message_pass(const Var& emb, const Var& a, std::size_t embed_dim);

class Gae {
public:
    Gae(GaeConfig config, causal::AdjacencyMatrix structure, std::uint64_t seed);

    const GaeConfig& config() const { return config_; }
    std::size_t d() const { return config_.d; }

    /// Masked adjacency as a graph value (raw o allowed).
    Var adjacency() const;
    Tensor adjacency_value() const;
    /// Effective weights together with the structural mask.
    causal::AdjacencyMatrix adjacency_matrix() const;
    const Tensor& allowed_mask() const { return allowed_; }

    /// f1: [n,d] -> [n, d*embed_dim]
    Var encode(const Var& q) const;
    /// f2: [n, d*embed_dim] -> [n,d]
    Var decode(const Var& h) const;
    Var forward(const Var& q) const;
    Tensor predict(const Tensor& q) const;
    causal::Predictor predictor() const;

    Var& raw_adjacency() { return adjacency_raw_; }
    std::vector<Var> net_parameters() const;
    /// Sum of squared effective f1/f2 weights.
    Var net_weight_norm() const;
    std::vector<Var> adjacency_parameters() const { return {adjacency_raw_}; }

    /// Every stored tensor under a stable name, for serialisation.
    std::vector<std::pair<std::string, Var>> named_parameters() const;

private:
    GaeConfig config_;
    Tensor allowed_;
    Var adjacency_raw_;
    std::vector<MaskedDense> f1_, f2_;
};

struct CausalLoss {
    Var total;
    double reconstruction = 0;
    double l1 = 0;
    double h = 0;
};

/// (1/n) sum ||q - q_hat||^2 + lambda1 ||A||_1 + alpha h(A) + rho/2 h(A)^2,
/// plus net_weight_decay times the squared f1/f2 weights when positive.
CausalLoss causal_loss(const Var& q, const Gae& model, double lambda1,
                       const causal::AugLagState& state, causal::Constraint constraint,
                       double net_weight_decay = 0.0);

/// Adam step on the adjacency that never leaves the logdet feasible region:
/// an infeasible step is halved once, and a second failure restores the
/// previous weights and throws NumericalError.
void adjacency_step(Gae& model, Adam& optimizer, causal::Constraint constraint, double s);

struct FitOptions {
    std::size_t epochs = 3000;
    std::size_t steps_per_update = 1;  // optimizer steps between multiplier updates
    double lr_adjacency = 0.007;
    double lr_nets = 0.002;
    double lambda1 = 0.0;
    double net_weight_decay = 0.0;
    causal::Constraint constraint = causal::Constraint::LogDet;
    causal::AugLagState auglag;
};

struct FitTrace {
    std::vector<double> loss, reconstruction, h, alpha, rho;
};

/// Full-batch training on q[n,d]. Each epoch runs `steps_per_update` optimizer
/// steps and then one augmented-Lagrangian update.
FitTrace fit(Gae& model, const Tensor& q, const FitOptions& options);

}  // namespace lungcrct::gae
