#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "lungcrct/cvae.hpp"
#include "lungcrct/gae.hpp"
#include "lungcrct/variation.hpp"

namespace lungcrct::pipeline {

/// Loss weights (phi1..phi4) for reconstruction, causal, dCor and variation terms.
using StageWeights = std::array<double, 4>;

struct StageSchedule {
    std::size_t stage_b_start = 50;
    std::size_t stage_c_start = 100;
    std::size_t epochs = 450;
    StageWeights stage_a{1, 0.5, 0, 0};
    StageWeights stage_b{1, 1, 1, 0};
    StageWeights stage_c{1, 1, 1, 1};

    /// Weights in force at 0-based `epoch`.
    const StageWeights& at(std::size_t epoch) const;
    void validate() const;
};

struct TrainConfig {
    cvae::CvaeConfig cvae;
    gae::GaeConfig gae;
    StageSchedule schedule;

    double lr_encoder = 0.001;
    double lr_decoder = 0.0007;
    double lr_adjacency = 0.007;
    double lr_gae = 0.002;

    double tau = 1.5;
    double v = 0.001;
    cvae::Reduction reconstruction = cvae::Reduction::Mean;
    bool dcor_squared = false;

    causal::AugLagState auglag;
    causal::Constraint constraint = causal::Constraint::LogDet;
    double lambda1 = 0.0;
    double gae_weight_decay = 0.0;
    /// Labels enter the GAE as y * label_scale.
    double label_scale = 0.5;

    std::size_t variation_subset = 50;
    variation::HistogramSpec histogram;

    std::uint64_t seed = 1;

    void validate() const;
};

/// CVAE and GAE trained together.
struct Model {
    TrainConfig config;
    cvae::Cvae cvae;
    gae::Gae gae;

    explicit Model(const TrainConfig& config);

    /// Encoder means of images[n,C,H,W].
    Tensor encode_means(const Tensor& images) const;
    /// Causal columns of z[n,latent].
    Tensor causal_part(const Tensor& z) const;
    /// Rows [z_cs, y * label_scale] as fed to the GAE.
    Tensor gae_input(const Tensor& z, const std::vector<int>& labels) const;
};

struct EpochRow {
    std::size_t epoch = 0;
    double total = 0;
    double l1 = 0, l2 = 0, l3 = 0;
    double l4 = 0;       // hard histogram entropy
    double l4_soft = 0;  // surrogate that was optimised
    double h = 0, alpha = 0, rho = 0;
};

struct TrainReport {
    std::vector<EpochRow> rows;
    double seconds = 0;
    Tensor adjacency;
    std::uint64_t seed = 0;

    void write_csv(std::ostream& os) const;
};

/// Called after every epoch; return false to stop early.
using EpochCallback = std::function<bool(const EpochRow&)>;

/// Full-batch staged training on images[n,C,H,W] with labels in {0,1,2}.
/// Deterministic for a fixed config.
TrainReport train_lungcrct(Model& model, const Tensor& images, const std::vector<int>& labels,
                           const EpochCallback& on_epoch = {});

}  // namespace lungcrct::pipeline
