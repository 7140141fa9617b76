#pragma once

#include <cstddef>
#include <vector>

#include "lungcrct/autograd.hpp"

namespace lungcrct {

// Elementwise binary ops require identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);

Var square(const Var& x);
/// Derivative at exactly 0 is taken as 0.
Var sqrt(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
/// Subgradient 0 at 0.
Var abs(const Var& x);
Var silu(const Var& x);
Var elu(const Var& x);
Var sigmoid(const Var& x);
/// log(1 + e^x) evaluated without overflow.
Var softplus(const Var& x);

/// Elementwise binary cross-entropy of probabilities `p` against fixed targets.
/// Probabilities are clamped to [1e-7, 1 - 1e-7]; clamped entries pass no gradient.
Var bce(const Var& p, const Tensor& target);
inline constexpr double kBceClamp = 1e-7;

Var sum(const Var& x);
Var mean(const Var& x);

/// [m,k] x [k,n] -> [m,n]
Var matmul(const Var& a, const Var& b);
/// x[n,in] W[in,out] + b[out]
Var dense(const Var& x, const Var& w, const Var& b);

Var reshape(const Var& x, Shape shape);
/// [N, ...] -> [N, prod(...)]
Var flatten(const Var& x);
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);

enum class Padding { Same, Valid };

struct ConvGeometry {
    std::size_t in_h = 0, in_w = 0;
    std::size_t out_h = 0, out_w = 0;
    std::size_t kernel = 0, stride = 1;
    std::size_t pad_top = 0, pad_left = 0;
};

/// Geometry of a square-kernel strided convolution. Same padding gives
/// out = ceil(in / stride) with the extra pad row/column at the bottom/right.
ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel,
                           std::size_t stride, Padding padding);

/// Output extent of the transposed convolution whose adjoint maps it back to `in`.
std::size_t conv_transpose_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                  Padding padding);

/// x[N,C,H,W], w[O,C,k,k], b[O] -> [N,O,Ho,Wo]. `b` may be an invalid Var for no bias.
Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride, Padding padding);

/// x[N,C,H,W], w[C,O,k,k], b[O] -> [N,O,Ho,Wo]; the exact adjoint of conv2d
/// with the same weight viewed as [C,O,k,k] -> conv weight [O'=C, C'=O].
Var conv2d_transpose(const Var& x, const Var& w, const Var& b, std::size_t stride,
                     Padding padding);

struct BatchStats {
    Tensor mean;
    Tensor var;
};

/// Training-mode batch normalisation over rows of x[n,d] with biased variance.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps,
               BatchStats* stats = nullptr);

}  // namespace lungcrct
