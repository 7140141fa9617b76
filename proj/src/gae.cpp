#include "lungcrct/gae.hpp"

#include <cmath>
#include <random>

#include "lungcrct/errors.hpp"
#include "lungcrct/ops.hpp"

namespace lungcrct::gae {

void GaeConfig::validate() const {
    if (d < 2) throw ArgumentError("gae: d must be at least 2");
    if (hidden < 1 || embed_dim < 1) throw ArgumentError("gae: widths must be at least 1");
    if (hidden_layers < 1) throw ArgumentError("gae: need at least one hidden layer");
}

Tensor block_mask(std::size_t d, std::size_t in, std::size_t out) {
    Tensor m({d * in, d * out}, 0.0);
    for (std::size_t v = 0; v < d; ++v)
        for (std::size_t r = 0; r < in; ++r)
            for (std::size_t c = 0; c < out; ++c) m.at(v * in + r, v * out + c) = 1.0;
    return m;
}

Var MaskedDense::operator()(const Var& x) const {
    return dense(x, mul(weight, constant(mask)), bias);
}

Var message_pass(const Var& emb, const Var& a, std::size_t e) {
    const auto& ev = emb.value();
    const auto& av = a.value();
    if (ev.rank() != 2 || av.rank() != 2 || av.dim(0) != av.dim(1) || ev.dim(1) != av.dim(0) * e)
        throw ShapeError("message_pass: embeddings " + shape_str(ev.shape()) + " vs adjacency " +
                         shape_str(av.shape()) + " with embed_dim " + std::to_string(e));
    const std::size_t n = ev.dim(0), d = av.dim(0), w = d * e;
    Tensor out({n, w}, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < d; ++i) {
                const double aji = av.at(j, i);
                if (aji == 0.0) continue;
                for (std::size_t k = 0; k < e; ++k) out[r * w + i * e + k] += aji * ev[r * w + j * e + k];
            }
    return make_op(std::move(out), {emb, a}, [n, d, e, w](Node& self) {
        const auto& g = self.grad;
        auto& ein = *self.inputs[0];
        auto& ain = *self.inputs[1];
        if (ein.requires_grad) {
            auto& ge = ein.grad_buffer();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j)
                    for (std::size_t i = 0; i < d; ++i) {
                        const double aji = ain.value.at(j, i);
                        for (std::size_t k = 0; k < e; ++k)
                            ge[r * w + j * e + k] += aji * g[r * w + i * e + k];
                    }
        }
        if (ain.requires_grad) {
            auto& ga = ain.grad_buffer();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j)
                    for (std::size_t i = 0; i < d; ++i) {
                        double acc = 0.0;
                        for (std::size_t k = 0; k < e; ++k)
                            acc += ein.value[r * w + j * e + k] * g[r * w + i * e + k];
                        ga.at(j, i) += acc;
                    }
        }
    });
}

namespace {

MaskedDense make_layer(std::size_t d, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    MaskedDense layer;
    layer.mask = block_mask(d, in, out);
    const double limit = std::sqrt(3.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor w({d * in, d * out}, 0.0);
    for (std::size_t i = 0; i < w.size(); ++i)
        if (layer.mask[i] != 0.0) w[i] = u(rng);
    layer.weight = parameter(std::move(w));
    layer.bias = parameter(Tensor({d * out}, 0.0));
    return layer;
}

Var run_stack(const std::vector<MaskedDense>& layers, Var x) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        x = layers[l](x);
        if (l + 1 < layers.size()) x = elu(x);
    }
    return x;
}

}  // namespace

Gae::Gae(GaeConfig config, causal::AdjacencyMatrix structure, std::uint64_t seed)
    : config_(config) {
    config_.validate();
    if (structure.d() != config_.d)
        throw ShapeError("gae: adjacency has " + std::to_string(structure.d()) +
                         " nodes, config expects " + std::to_string(config_.d));
    structure.apply_mask();
    allowed_ = structure.allowed_mask();
    adjacency_raw_ = parameter(structure.weights);

    std::mt19937_64 rng(seed);
    const std::size_t d = config_.d, h = config_.hidden, e = config_.embed_dim;
    f1_.push_back(make_layer(d, 1, h, rng));
    for (std::size_t l = 1; l < config_.hidden_layers; ++l) f1_.push_back(make_layer(d, h, h, rng));
    f1_.push_back(make_layer(d, h, e, rng));
    f2_.push_back(make_layer(d, e, h, rng));
    for (std::size_t l = 1; l < config_.hidden_layers; ++l) f2_.push_back(make_layer(d, h, h, rng));
    f2_.push_back(make_layer(d, h, 1, rng));
}

Var Gae::adjacency() const { return mul(adjacency_raw_, constant(allowed_)); }

Tensor Gae::adjacency_value() const {
    Tensor a = adjacency_raw_.value();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= allowed_[i];
    return a;
}

causal::AdjacencyMatrix Gae::adjacency_matrix() const {
    causal::AdjacencyMatrix m;
    m.weights = adjacency_value();
    m.forbidden = causal::BoolMatrix(config_.d);
    for (std::size_t i = 0; i < allowed_.size(); ++i) m.forbidden.cells[i] = allowed_[i] == 0.0;
    return m;
}

Var Gae::encode(const Var& q) const {
    if (q.value().rank() != 2 || q.value().dim(1) != config_.d)
        throw ShapeError("gae: expected [n," + std::to_string(config_.d) + "] input, got " +
                         shape_str(q.shape()));
    return run_stack(f1_, q);
}

Var Gae::decode(const Var& h) const { return run_stack(f2_, h); }

Var Gae::forward(const Var& q) const {
    return decode(message_pass(encode(q), adjacency(), config_.embed_dim));
}

Tensor Gae::predict(const Tensor& q) const { return forward(constant(q)).value(); }

causal::Predictor Gae::predictor() const {
    return [this](std::span<const double> q) {
        const Tensor out = predict(Tensor({1, q.size()}, std::vector<double>(q.begin(), q.end())));
        return out.vec();
    };
}

std::vector<Var> Gae::net_parameters() const {
    std::vector<Var> out;
    for (const auto* stack : {&f1_, &f2_})
        for (const auto& layer : *stack) {
            out.push_back(layer.weight);
            out.push_back(layer.bias);
        }
    return out;
}

Var Gae::net_weight_norm() const {
    Var total;
    for (const auto* stack : {&f1_, &f2_})
        for (const auto& layer : *stack) {
            Var term = sum(square(mul(layer.weight, constant(layer.mask))));
            total = total.valid() ? add(total, term) : term;
        }
    return total;
}

std::vector<std::pair<std::string, Var>> Gae::named_parameters() const {
    std::vector<std::pair<std::string, Var>> out{{"gae.adjacency", adjacency_raw_}};
    for (std::size_t l = 0; l < f1_.size(); ++l) {
        out.emplace_back("gae.f1." + std::to_string(l) + ".weight", f1_[l].weight);
        out.emplace_back("gae.f1." + std::to_string(l) + ".bias", f1_[l].bias);
    }
    for (std::size_t l = 0; l < f2_.size(); ++l) {
        out.emplace_back("gae.f2." + std::to_string(l) + ".weight", f2_[l].weight);
        out.emplace_back("gae.f2." + std::to_string(l) + ".bias", f2_[l].bias);
    }
    return out;
}

CausalLoss causal_loss(const Var& q, const Gae& model, double lambda1,
                       const causal::AugLagState& state, causal::Constraint constraint,
                       double net_weight_decay) {
    if (lambda1 < 0) throw ArgumentError("causal_loss: lambda1 must be nonnegative");
    if (net_weight_decay < 0) throw ArgumentError("causal_loss: weight decay must be nonnegative");
    const Var a = model.adjacency();
    const Var recon = scale(sum(square(sub(q, model.forward(q)))),
                            1.0 / static_cast<double>(q.value().dim(0)));
    const Var h = causal::acyclicity(a, constraint, state.s);
    const Var l1 = sum(abs(a));
    Var total = add(recon, add(scale(h, state.alpha), scale(square(h), 0.5 * state.rho)));
    if (lambda1 > 0) total = add(total, scale(l1, lambda1));
    if (net_weight_decay > 0) total = add(total, scale(model.net_weight_norm(), net_weight_decay));

    CausalLoss out;
    out.total = total;
    out.reconstruction = recon.value().item();
    out.l1 = l1.value().item();
    out.h = h.value().item();
    return out;
}

void adjacency_step(Gae& model, Adam& optimizer, causal::Constraint constraint, double s) {
    Var& raw = model.raw_adjacency();
    const Tensor before = raw.value();
    std::vector<Var> params{raw};
    optimizer.step(params);
    if (constraint != causal::Constraint::LogDet) return;
    if (causal::logdet_feasible(model.adjacency_value(), s)) return;

    Tensor& now = raw.mutable_value();
    for (std::size_t i = 0; i < now.size(); ++i) now[i] = before[i] + 0.5 * (now[i] - before[i]);
    if (causal::logdet_feasible(model.adjacency_value(), s)) return;
    now = before;
    throw NumericalError("adjacency update left the logdet feasible region (s = " +
                         std::to_string(s) + ") even at half step");
}

FitTrace fit(Gae& model, const Tensor& q, const FitOptions& options) {
    options.auglag.validate();
    Adam adjacency_opt(options.lr_adjacency), net_opt(options.lr_nets);
    causal::AugLagState state = options.auglag;
    const Var input = constant(q);
    FitTrace trace;
    if (options.steps_per_update < 1) throw ArgumentError("gae fit: steps_per_update must be >= 1");
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        CausalLoss loss;
        for (std::size_t step = 0; step < options.steps_per_update; ++step) {
            loss = causal_loss(input, model, options.lambda1, state, options.constraint,
                               options.net_weight_decay);
            backward(loss.total);
            auto nets = model.net_parameters();
            net_opt.step(nets);
            adjacency_step(model, adjacency_opt, options.constraint, state.s);
        }

        const double h_new =
            causal::acyclicity(constant(model.adjacency_value()), options.constraint, state.s)
                .value()
                .item();
        state = causal::auglag_update(state, h_new);
        trace.loss.push_back(loss.total.value().item());
        trace.reconstruction.push_back(loss.reconstruction);
        trace.h.push_back(h_new);
        trace.alpha.push_back(state.alpha);
        trace.rho.push_back(state.rho);
    }
    return trace;
}

}  // namespace lungcrct::gae
