#include "lungcrct/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

#include "lungcrct/dependence.hpp"
#include "lungcrct/errors.hpp"

namespace lungcrct::pipeline {

const StageWeights& StageSchedule::at(std::size_t epoch) const {
    if (epoch < stage_b_start) return stage_a;
    if (epoch < stage_c_start) return stage_b;
    return stage_c;
}

void StageSchedule::validate() const {
    if (stage_b_start > stage_c_start) throw ArgumentError("stage B must not start after stage C");
    for (const auto* w : {&stage_a, &stage_b, &stage_c})
        for (double x : *w)
            if (!(x >= 0) || !std::isfinite(x)) throw ArgumentError("stage weights must be finite and nonnegative");
}

void TrainConfig::validate() const {
    cvae.validate();
    gae.validate();
    schedule.validate();
    auglag.validate();
    histogram.validate();
    if (gae.d != cvae.latent_causal + 1)
        throw ArgumentError("gae.d must equal the causal latent count plus one for the label");
    for (double lr : {lr_encoder, lr_decoder, lr_adjacency, lr_gae})
        if (!(lr > 0)) throw ArgumentError("learning rates must be positive");
    if (!(tau >= 0) || !(v >= 0) || !(lambda1 >= 0) || !(gae_weight_decay >= 0))
        throw ArgumentError("tau, v, lambda1 and gae weight decay must be nonnegative");
    if (!(label_scale > 0)) throw ArgumentError("label_scale must be positive");
    if (variation_subset < 1) throw ArgumentError("variation_subset must be >= 1");
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    std::mt19937_64 rng(seq);
    return rng();
}

const TrainConfig& validated(const TrainConfig& c) {
    c.validate();
    return c;
}

}  // namespace

Model::Model(const TrainConfig& c)
    : config(validated(c)),
      cvae(c.cvae, derive_seed(c.seed, 1)),
      gae(c.gae, causal::AdjacencyMatrix::with_label_blacklist(c.gae.d), derive_seed(c.seed, 2)) {}

Tensor Model::encode_means(const Tensor& images) const { return cvae.encode(constant(images)).mu.value(); }

Tensor Model::causal_part(const Tensor& z) const {
    const std::size_t n = z.dim(0), k = config.cvae.latent_causal, off = config.cvae.latent_non_causal;
    if (z.rank() != 2 || z.dim(1) != off + k) throw ShapeError("expected [n," + std::to_string(off + k) + "] latents");
    Tensor out({n, k});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) out.at(i, j) = z.at(i, off + j);
    return out;
}

Tensor Model::gae_input(const Tensor& z, const std::vector<int>& labels) const {
    const Tensor cs = causal_part(z);
    const std::size_t n = cs.dim(0), k = cs.dim(1);
    if (labels.size() != n) throw ShapeError("label count does not match the latent batch");
    Tensor q({n, k + 1});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) q.at(i, j) = cs.at(i, j);
        q.at(i, k) = labels[i] * config.label_scale;
    }
    return q;
}

void TrainReport::write_csv(std::ostream& os) const {
    os << "# lungcrct train-report v1 seed=" << seed << " seconds=" << seconds << '\n'
       << "epoch,total,l1,l2,l3,l4,l4_soft,h,alpha,rho\n";
    const auto prec = os.precision(17);
    for (const auto& r : rows)
        os << r.epoch << ',' << r.total << ',' << r.l1 << ',' << r.l2 << ',' << r.l3 << ',' << r.l4 << ','
           << r.l4_soft << ',' << r.h << ',' << r.alpha << ',' << r.rho << '\n';
    os.precision(prec);
}

TrainReport train_lungcrct(Model& model, const Tensor& images, const std::vector<int>& labels,
                           const EpochCallback& on_epoch) {
    const TrainConfig& cfg = model.config;
    cfg.validate();
    if (images.rank() != 4 || images.dim(0) == 0) throw ShapeError("training images must be a nonempty [n,C,H,W] batch");
    const std::size_t n = images.dim(0);
    if (labels.size() != n) throw ShapeError("label count does not match the image batch");
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] > 2) throw DataError("labels must be 0, 1 or 2");
        y[i] = labels[i];
    }
    if (cfg.variation_subset > n)
        throw ArgumentError("variation_subset exceeds the training set size");

    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(derive_seed(cfg.seed, 3));
    Adam enc_opt(cfg.lr_encoder), dec_opt(cfg.lr_decoder), adj_opt(cfg.lr_adjacency), gae_opt(cfg.lr_gae);
    causal::AugLagState state = cfg.auglag;
    const auto split = cfg.cvae.split();
    const std::size_t k = cfg.cvae.latent_causal, off = cfg.cvae.latent_non_causal;

    Tensor label_column({n, 1});
    for (std::size_t i = 0; i < n; ++i) label_column[i] = y[i] * cfg.label_scale;
    const Var x = constant(images);
    const Var label_var = constant(label_column);
    const auto decode = [&](const Var& z) { return model.cvae.decode(z); };

    TrainReport report;
    report.seed = cfg.seed;
    for (std::size_t epoch = 0; epoch < cfg.schedule.epochs; ++epoch) {
        const StageWeights& w = cfg.schedule.at(epoch);
        const auto enc = model.cvae.encode(x);
        const Tensor eps = cvae::standard_normal(enc.mu.shape(), rng);
        const Var z = cvae::reparameterize(enc.mu, enc.log_var, eps);
        const Var l1 = cvae::cvae_loss(images, model.cvae.decode(z), z, cfg.v, cfg.reconstruction);

        const Var q = concat({slice(enc.mu, 1, off, off + k), label_var}, 1);
        const auto causal = gae::causal_loss(q, model.gae, cfg.lambda1, state, cfg.constraint, cfg.gae_weight_decay);
        const Var l3 = dependence::dcor_loss(enc.mu, y, split, cfg.tau, cfg.dcor_squared);
        const auto l4 = variation::variation_loss(enc.mu.value(), decode, split.causal, rng, cfg.variation_subset,
                                                  cfg.histogram);

        Var total = scale(l1, w[0]);
        if (w[1] > 0) total = add(total, scale(causal.total, w[1]));
        if (w[2] > 0) total = add(total, scale(l3, w[2]));
        if (w[3] > 0) total = add(total, scale(l4.soft, w[3]));
        backward(total);

        auto enc_params = model.cvae.encoder_parameters();
        auto dec_params = model.cvae.decoder_parameters();
        auto nets = model.gae.net_parameters();
        enc_opt.step(enc_params);
        dec_opt.step(dec_params);
        gae_opt.step(nets);
        gae::adjacency_step(model.gae, adj_opt, cfg.constraint, state.s);

        const double h = causal::acyclicity(constant(model.gae.adjacency_value()), cfg.constraint, state.s)
                             .value()
                             .item();
        if (!std::isfinite(h)) throw NumericalError("acyclicity became non-finite at epoch " + std::to_string(epoch));
        state = causal::auglag_update(state, h);

        EpochRow row;
        row.epoch = epoch;
        row.total = total.value().item();
        row.l1 = l1.value().item();
        row.l2 = causal.total.value().item();
        row.l3 = l3.value().item();
        row.l4 = l4.hard;
        row.l4_soft = l4.soft.value().item();
        row.h = h;
        row.alpha = state.alpha;
        row.rho = state.rho;
        if (!std::isfinite(row.total)) throw NumericalError("training loss became non-finite at epoch " + std::to_string(epoch));
        report.rows.push_back(row);
        if (on_epoch && !on_epoch(row)) break;
    }
    report.adjacency = model.gae.adjacency_value();
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace lungcrct::pipeline
