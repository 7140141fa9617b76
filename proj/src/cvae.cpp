#include "lungcrct/cvae.hpp"

#include <cmath>

#include "lungcrct/errors.hpp"

namespace lungcrct::cvae {

dependence::LatentSplit CvaeConfig::split() const {
    dependence::LatentSplit s;
    for (std::size_t i = 0; i < latent_non_causal; ++i) s.non_causal.push_back(i);
    for (std::size_t i = 0; i < latent_causal; ++i) s.causal.push_back(latent_non_causal + i);
    return s;
}

Shape CvaeConfig::bottleneck() const {
    std::size_t h = extent, c = channels;
    for (const auto& l : encoder_convs) {
        if (padding == Padding::Valid && h < l.kernel)
            throw ArgumentError("cvae: extent " + std::to_string(extent) +
                                " is too small for the encoder");
        h = conv_geometry(h, h, l.kernel, l.stride, padding).out_h;
        c = l.filters;
    }
    return {c, h, h};
}

void CvaeConfig::validate() const {
    if (extent < 1 || channels < 1) throw ArgumentError("cvae: extent and channels must be >= 1");
    if (latent_causal < 1 || latent_non_causal < 1)
        throw ArgumentError("cvae: both latent parts need at least one dimension");
    if (encoder_convs.empty() || decoder_convs.empty())
        throw ArgumentError("cvae: encoder and decoder need convolution layers");
    for (const auto* convs : {&encoder_convs, &decoder_convs})
        for (const auto& l : *convs)
            if (l.filters < 1 || l.kernel < 1 || l.stride < 1)
                throw ArgumentError("cvae: convolution filters, kernel and stride must be >= 1");
    const Shape b = bottleneck();
    std::size_t h = b[1];
    for (const auto& l : decoder_convs) h = conv_transpose_extent(h, l.kernel, l.stride, padding);
    h = conv_transpose_extent(h, output_kernel, output_stride, padding);
    if (h != extent)
        throw ArgumentError("cvae: decoder produces " + std::to_string(h) + "x" +
                            std::to_string(h) + " from a " + std::to_string(extent) +
                            " input; adjust extent, kernels or padding");
}

namespace {

Var glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = u(rng);
    return parameter(std::move(t));
}

}  // namespace

Cvae::Cvae(CvaeConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const auto& c = config_;

    std::size_t in_c = c.channels;
    for (const auto& l : c.encoder_convs) {
        const std::size_t kk = l.kernel * l.kernel;
        enc_conv_.push_back({glorot({l.filters, in_c, l.kernel, l.kernel}, in_c * kk, l.filters * kk, rng),
                             parameter(Tensor({l.filters}, 0.0))});
        in_c = l.filters;
    }
    const Shape b = c.bottleneck();
    const std::size_t flat = shape_numel(b);
    std::size_t in = flat;
    for (std::size_t width : c.encoder_dense) {
        enc_dense_.push_back({glorot({in, width}, in, width, rng), parameter(Tensor({width}, 0.0))});
        in = width;
    }
    const std::size_t out2 = 2 * c.latent_dim();
    enc_dense_.push_back({glorot({in, out2}, in, out2, rng), parameter(Tensor({out2}, 0.0))});

    in = c.latent_dim();
    for (std::size_t width : c.decoder_dense) {
        dec_dense_.push_back({glorot({in, width}, in, width, rng), parameter(Tensor({width}, 0.0))});
        in = width;
    }
    dec_dense_.push_back({glorot({in, flat}, in, flat, rng), parameter(Tensor({flat}, 0.0))});

    in_c = b[0];
    auto add_transpose = [&](std::size_t filters, std::size_t k) {
        const std::size_t kk = k * k;
        dec_conv_.push_back({glorot({in_c, filters, k, k}, filters * kk, in_c * kk, rng),
                             parameter(Tensor({filters}, 0.0))});
        in_c = filters;
    };
    for (const auto& l : c.decoder_convs) add_transpose(l.filters, l.kernel);
    add_transpose(c.channels, c.output_kernel);
}

Cvae::Encoded Cvae::encode(const Var& x) const {
    const auto& c = config_;
    const Tensor& xv = x.value();
    if (xv.rank() != 4 || xv.dim(1) != c.channels || xv.dim(2) != c.extent || xv.dim(3) != c.extent)
        throw ShapeError("cvae encode: expected [n," + std::to_string(c.channels) + "," +
                         std::to_string(c.extent) + "," + std::to_string(c.extent) + "], got " +
                         shape_str(xv.shape()));
    for (double p : xv.values())
        if (!(p >= 0.0 && p <= 1.0))
            throw DataError("cvae encode: pixel value " + std::to_string(p) + " outside [0, 1]");

    Var h = x;
    for (std::size_t i = 0; i < enc_conv_.size(); ++i)
        h = silu(conv2d(h, enc_conv_[i].weight, enc_conv_[i].bias, c.encoder_convs[i].stride, c.padding));
    h = flatten(h);
    for (std::size_t i = 0; i + 1 < enc_dense_.size(); ++i)
        h = elu(dense(h, enc_dense_[i].weight, enc_dense_[i].bias));
    h = dense(h, enc_dense_.back().weight, enc_dense_.back().bias);
    const std::size_t L = c.latent_dim();
    return {slice(h, 1, 0, L), slice(h, 1, L, 2 * L)};
}

Var Cvae::decode(const Var& z) const {
    const auto& c = config_;
    if (z.value().rank() != 2 || z.value().dim(1) != c.latent_dim())
        throw ShapeError("cvae decode: expected [n," + std::to_string(c.latent_dim()) + "], got " +
                         shape_str(z.shape()));
    Var h = z;
    for (const auto& l : dec_dense_) h = elu(dense(h, l.weight, l.bias));
    const Shape b = c.bottleneck();
    h = reshape(h, {z.value().dim(0), b[0], b[1], b[2]});
    for (std::size_t i = 0; i < c.decoder_convs.size(); ++i)
        h = silu(conv2d_transpose(h, dec_conv_[i].weight, dec_conv_[i].bias, c.decoder_convs[i].stride,
                                  c.padding));
    const auto& out = dec_conv_.back();
    return sigmoid(conv2d_transpose(h, out.weight, out.bias, c.output_stride, c.padding));
}

std::vector<Var> Cvae::encoder_parameters() const {
    std::vector<Var> out;
    for (const auto* group : {&enc_conv_, &enc_dense_})
        for (const auto& l : *group) {
            out.push_back(l.weight);
            out.push_back(l.bias);
        }
    return out;
}

std::vector<Var> Cvae::decoder_parameters() const {
    std::vector<Var> out;
    for (const auto* group : {&dec_dense_, &dec_conv_})
        for (const auto& l : *group) {
            out.push_back(l.weight);
            out.push_back(l.bias);
        }
    return out;
}

std::vector<std::pair<std::string, Var>> Cvae::named_parameters() const {
    std::vector<std::pair<std::string, Var>> out;
    auto add = [&](const std::string& prefix, const std::vector<Layer>& layers) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            out.emplace_back(prefix + std::to_string(i) + ".weight", layers[i].weight);
            out.emplace_back(prefix + std::to_string(i) + ".bias", layers[i].bias);
        }
    };
    add("cvae.enc_conv.", enc_conv_);
    add("cvae.enc_dense.", enc_dense_);
    add("cvae.dec_dense.", dec_dense_);
    add("cvae.dec_conv.", dec_conv_);
    return out;
}

std::size_t Cvae::encoder_parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : encoder_parameters()) total += p.size();
    return total;
}

Tensor standard_normal(Shape shape, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = n(rng);
    return t;
}

Var reparameterize(const Var& mu, const Var& log_var, const Tensor& eps) {
    if (mu.shape() != log_var.shape() || mu.shape() != eps.shape())
        throw ShapeError("reparameterize: mu " + shape_str(mu.shape()) + ", log_var " +
                         shape_str(log_var.shape()) + ", eps " + shape_str(eps.shape()));
    return add(mu, mul(exp(scale(log_var, 0.5)), constant(eps)));
}

Var cvae_loss(const Tensor& x, const Var& recon, const Var& z, double v, Reduction reduction) {
    if (x.shape() != recon.shape())
        throw ShapeError("cvae_loss: images " + shape_str(x.shape()) + " vs reconstruction " +
                         shape_str(recon.shape()));
    if (z.value().rank() != 2 || z.value().dim(0) != x.dim(0))
        throw ShapeError("cvae_loss: latent batch " + shape_str(z.shape()) + " does not match " +
                         shape_str(x.shape()));
    if (v < 0) throw ArgumentError("cvae_loss: v must be nonnegative");
    const double n = static_cast<double>(x.dim(0));
    const double pixels = static_cast<double>(x.size()) / n;
    Var rec = sum(bce(recon, x));
    rec = scale(rec, reduction == Reduction::Mean ? 1.0 / (n * pixels) : 1.0 / n);
    if (v == 0) return rec;
    return add(rec, scale(sum(square(z)), 0.5 * v / n));
}

}  // namespace lungcrct::cvae
