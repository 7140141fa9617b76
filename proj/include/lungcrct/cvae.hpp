#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lungcrct/dependence.hpp"
#include "lungcrct/ops.hpp"

namespace lungcrct::cvae {

struct ConvSpec {
    std::size_t filters = 0;
    std::size_t kernel = 0;
    std::size_t stride = 2;
};

struct CvaeConfig {
    std::size_t extent = 64;
    std::size_t channels = 1;
    Padding padding = Padding::Same;

    std::vector<ConvSpec> encoder_convs{{16, 6, 2}, {32, 6, 2}, {32, 4, 2}, {16, 4, 2}, {16, 3, 2}};
    std::vector<std::size_t> encoder_dense{128, 16};
    std::vector<std::size_t> decoder_dense{16, 128};
    /// Hidden transposed convolutions after the reshape.
    std::vector<ConvSpec> decoder_convs{{16, 3, 2}, {32, 4, 2}, {32, 4, 2}, {32, 6, 2}};
    /// Final transposed convolution to `channels` maps, sigmoid output.
    std::size_t output_kernel = 6;
    std::size_t output_stride = 2;

    std::size_t latent_non_causal = 5;
    std::size_t latent_causal = 3;

    std::size_t latent_dim() const { return latent_non_causal + latent_causal; }
    /// Non-causal first, causal last.
    dependence::LatentSplit split() const;
    /// [C,H,W] at the end of the encoder convolutions.
    Shape bottleneck() const;
    /// Throws ArgumentError unless the decoder returns exactly `extent`.
    void validate() const;
};

enum class Reduction { Mean, Sum };

class Cvae {
public:
    Cvae(CvaeConfig config, std::uint64_t seed);

    const CvaeConfig& config() const { return config_; }

    struct Encoded {
        Var mu;       // [n, latent]
        Var log_var;  // [n, latent]
    };

    /// x[n,C,H,W] with pixels in [0,1]; throws DataError otherwise.
    Encoded encode(const Var& x) const;
    /// z[n, latent] -> images [n,C,H,W] in (0,1).
    Var decode(const Var& z) const;

    std::vector<Var> encoder_parameters() const;
    std::vector<Var> decoder_parameters() const;
    std::vector<std::pair<std::string, Var>> named_parameters() const;
    std::size_t encoder_parameter_count() const;

private:
    struct Layer {
        Var weight, bias;
    };
    CvaeConfig config_;
    std::vector<Layer> enc_conv_, enc_dense_, dec_dense_, dec_conv_;
};

Tensor standard_normal(Shape shape, std::mt19937_64& rng);

/// z = mu + exp(log_var / 2) o eps with eps supplied by the caller.
Var reparameterize(const Var& mu, const Var& log_var, const Tensor& eps);

/// Batch mean of [BCE(x, recon) + (v/2) sum z^2]. With Reduction::Sum the BCE
/// is summed over pixels, with Mean it is averaged over them.
Var cvae_loss(const Tensor& x, const Var& recon, const Var& z, double v,
              Reduction reduction = Reduction::Mean);

}  // namespace lungcrct::cvae
