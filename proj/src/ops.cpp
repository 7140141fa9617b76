#include "lungcrct/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "lungcrct/errors.hpp"

namespace lungcrct {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

void require_same(const char* op, const Var& a, const Var& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void require_rank(const char* op, const Var& x, std::size_t rank) {
    if (x.value().rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " operand, got " + shape_str(x.shape()));
}

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// y = f(x) with dy/dx = df(x, y).
template <class F, class DF>
Var unary(const Var& x, F f, DF df) {
    Tensor out(x.shape());
    const auto& xv = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    return make_op(std::move(out), {x}, [df](Node& self) {
        auto& in = *self.inputs[0];
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i] * df(in.value[i], self.value[i]);
    });
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require_same("add", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        for (auto& in : self.inputs) {
            if (!in->requires_grad) continue;
            auto& g = in->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same("sub", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const double sign[2] = {1.0, -1.0};
        for (std::size_t k = 0; k < 2; ++k) {
            auto& in = *self.inputs[k];
            if (!in.requires_grad) continue;
            auto& g = in.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same("mul", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        auto& a = *self.inputs[0];
        auto& b = *self.inputs[1];
        if (a.requires_grad) {
            auto& g = a.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b.value[i];
        }
        if (b.requires_grad) {
            auto& g = b.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a.value[i];
        }
    });
}

Var scale(const Var& x, double c) {
    return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& x, double c) {
    return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var square(const Var& x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var sqrt(const Var& x) {
    for (double v : x.value().values())
        if (v < 0) throw ArgumentError("sqrt: negative operand");
    return unary(
        x, [](double v) { return std::sqrt(v); },
        [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Var exp(const Var& x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
    for (double v : x.value().values())
        if (!(v > 0)) throw ArgumentError("log: non-positive operand");
    return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var abs(const Var& x) {
    return unary(
        x, [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var silu(const Var& x) {
    return unary(
        x, [](double v) { return v * stable_sigmoid(v); },
        [](double v, double) {
            const double s = stable_sigmoid(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Var elu(const Var& x) {
    return unary(
        x, [](double v) { return v > 0 ? v : std::expm1(v); },
        [](double v, double y) { return v > 0 ? 1.0 : y + 1.0; });
}

Var sigmoid(const Var& x) {
    return unary(
        x, [](double v) { return stable_sigmoid(v); },
        [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& x) {
    return unary(
        x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v, double) { return stable_sigmoid(v); });
}

Var bce(const Var& p, const Tensor& target) {
    if (p.shape() != target.shape())
        throw ShapeError("bce: shape mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(target.shape()));
    Tensor out(p.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double q = std::clamp(p.value()[i], kBceClamp, 1.0 - kBceClamp);
        const double t = target[i];
        out[i] = -(t * std::log(q) + (1.0 - t) * std::log1p(-q));
    }
    return make_op(std::move(out), {p}, [target](Node& self) {
        auto& in = *self.inputs[0];
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = in.value[i];
            if (v < kBceClamp || v > 1.0 - kBceClamp) continue;
            g[i] += self.grad[i] * (v - target[i]) / (v * (1.0 - v));
        }
    });
}

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return make_op(Tensor::scalar(s), {x}, [](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        const double up = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
    });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var matmul(const Var& a, const Var& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k)
        throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out({m, n});
    MapMat(out.data(), m, n).noalias() =
        MapConstMat(a.value().data(), m, k) * MapConstMat(b.value().data(), k, n);
    return make_op(std::move(out), {a, b}, [m, k, n](Node& self) {
        auto& a = *self.inputs[0];
        auto& b = *self.inputs[1];
        MapConstMat g(self.grad.data(), m, n);
        if (a.requires_grad)
            MapMat(a.grad_buffer().data(), m, k).noalias() +=
                g * MapConstMat(b.value.data(), k, n).transpose();
        if (b.requires_grad)
            MapMat(b.grad_buffer().data(), k, n).noalias() +=
                MapConstMat(a.value.data(), m, k).transpose() * g;
    });
}

Var dense(const Var& x, const Var& w, const Var& b) {
    require_rank("dense", x, 2);
    require_rank("dense", w, 2);
    const std::size_t n = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[1];
    if (w.shape()[0] != in || b.shape() != Shape{out_dim})
        throw ShapeError("dense: input " + shape_str(x.shape()) + " weight " +
                         shape_str(w.shape()) + " bias " + shape_str(b.shape()));
    Tensor out({n, out_dim});
    MapMat y(out.data(), n, out_dim);
    y.noalias() = MapConstMat(x.value().data(), n, in) * MapConstMat(w.value().data(), in, out_dim);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < out_dim; ++c) y(r, c) += b.value()[c];
    return make_op(std::move(out), {x, w, b}, [n, in, out_dim](Node& self) {
        auto& x = *self.inputs[0];
        auto& w = *self.inputs[1];
        auto& b = *self.inputs[2];
        MapConstMat g(self.grad.data(), n, out_dim);
        if (x.requires_grad)
            MapMat(x.grad_buffer().data(), n, in).noalias() +=
                g * MapConstMat(w.value.data(), in, out_dim).transpose();
        if (w.requires_grad)
            MapMat(w.grad_buffer().data(), in, out_dim).noalias() +=
                MapConstMat(x.value.data(), n, in).transpose() * g;
        if (b.requires_grad) {
            auto& gb = b.grad_buffer();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < out_dim; ++c) gb[c] += g(r, c);
        }
    });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return make_op(std::move(out), {x}, [](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Var flatten(const Var& x) {
    const std::size_t n = x.shape().at(0);
    return reshape(x, {n, x.size() / n});
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw ArgumentError("concat: no operands");
    const Shape& ref = parts[0].shape();
    if (axis >= ref.size()) throw ShapeError("concat: axis out of range for " + shape_str(ref));
    Shape out_shape = ref;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == ref.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d)
            if (d != axis && s[d] != ref[d]) ok = false;
        if (!ok)
            throw ShapeError("concat: shape mismatch " + shape_str(ref) + " vs " + shape_str(s));
        out_shape[axis] += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
    for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
    const std::size_t out_row = out_shape[axis] * inner;

    Tensor out(out_shape);
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const std::size_t row = p.shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(p.value().data() + o * row, row, out.data() + o * out_row + offset);
        offset += row;
    }
    return make_op(std::move(out), parts, [outer, out_row, offsets](Node& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            auto& in = *self.inputs[k];
            if (!in.requires_grad) continue;
            auto& g = in.grad_buffer();
            const std::size_t row = g.size() / outer;
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < row; ++i)
                    g[o * row + i] += self.grad[o * out_row + offsets[k] + i];
        }
    });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
    const Shape& s = x.shape();
    if (axis >= s.size() || begin >= end || end > s[axis])
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    const std::size_t in_row = s[axis] * inner;
    const std::size_t out_row = (end - begin) * inner;
    const std::size_t start = begin * inner;
    Tensor out(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.value().data() + o * in_row + start, out_row, out.data() + o * out_row);
    return make_op(std::move(out), {x}, [outer, in_row, out_row, start](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < out_row; ++i)
                g[o * in_row + start + i] += self.grad[o * out_row + i];
    });
}

// ---------------------------------------------------------------------------
// Convolution

ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel,
                           std::size_t stride, Padding padding) {
    if (stride < 1 || kernel < 1) throw ArgumentError("conv: stride and kernel must be >= 1");
    ConvGeometry g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.kernel = kernel;
    g.stride = stride;
    auto axis = [&](std::size_t in, std::size_t& out, std::size_t& pad) {
        if (padding == Padding::Same) {
            out = (in + stride - 1) / stride;
            const std::size_t need = (out - 1) * stride + kernel;
            pad = need > in ? (need - in) / 2 : 0;
        } else {
            if (in < kernel)
                throw ShapeError("conv: valid padding with kernel " + std::to_string(kernel) +
                                 " on extent " + std::to_string(in));
            out = (in - kernel) / stride + 1;
            pad = 0;
        }
    };
    axis(in_h, g.out_h, g.pad_top);
    axis(in_w, g.out_w, g.pad_left);
    return g;
}

std::size_t conv_transpose_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                  Padding padding) {
    return padding == Padding::Same ? in * stride : (in - 1) * stride + kernel;
}

namespace {

/// col[(c*k + ki)*k + kj][oy*Wo + ox] = x[c][oy*s + ki - pt][ox*s + kj - pl]
void im2col(const double* x, std::size_t channels, const ConvGeometry& g, double* col) {
    const std::size_t k = g.kernel, ohw = g.out_h * g.out_w;
    for (std::size_t c = 0; c < channels; ++c) {
        const double* xc = x + c * g.in_h * g.in_w;
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                double* row = col + ((c * k + ki) * k + kj) * ohw;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
                    double* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
                        std::fill_n(dst, g.out_w, 0.0);
                        continue;
                    }
                    const double* src = xc + static_cast<std::size_t>(iy) * g.in_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                        static_cast<std::ptrdiff_t>(g.pad_left);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                                      ? 0.0
                                      : src[ix];
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters columns back, accumulating into x.
void col2im_add(const double* col, std::size_t channels, const ConvGeometry& g, double* x) {
    const std::size_t k = g.kernel, ohw = g.out_h * g.out_w;
    for (std::size_t c = 0; c < channels; ++c) {
        double* xc = x + c * g.in_h * g.in_w;
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                const double* row = col + ((c * k + ki) * k + kj) * ohw;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    double* dst = xc + static_cast<std::size_t>(iy) * g.in_w;
                    const double* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                        static_cast<std::ptrdiff_t>(g.pad_left);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

void check_kernel(const char* op, const Var& w, std::size_t channels, std::size_t channel_axis) {
    const Shape& s = w.shape();
    if (s.size() != 4 || s[2] != s[3] || s[channel_axis] != channels)
        throw ShapeError(std::string(op) + ": kernel " + shape_str(s) +
                         " does not match input channels " + std::to_string(channels));
}

void check_bias(const char* op, const Var& b, std::size_t channels) {
    if (b.valid() && b.shape() != Shape{channels})
        throw ShapeError(std::string(op) + ": bias " + shape_str(b.shape()) + " for " +
                         std::to_string(channels) + " output channels");
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride, Padding padding) {
    require_rank("conv2d", x, 4);
    const std::size_t n = x.shape()[0], c = x.shape()[1];
    check_kernel("conv2d", w, c, 1);
    const std::size_t o = w.shape()[0], k = w.shape()[2];
    check_bias("conv2d", b, o);
    const ConvGeometry g = conv_geometry(x.shape()[2], x.shape()[3], k, stride, padding);
    const std::size_t ckk = c * k * k, ohw = g.out_h * g.out_w, ihw = g.in_h * g.in_w;

    Tensor out({n, o, g.out_h, g.out_w});
    Buffer col(ckk * ohw);
    MapConstMat wm(w.value().data(), o, ckk);
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x.value().data() + s * c * ihw, c, g, col.data());
        MapMat y(out.data() + s * o * ohw, o, ohw);
        y.noalias() = wm * MapConstMat(col.data(), ckk, ohw);
        if (b.valid())
            for (std::size_t oc = 0; oc < o; ++oc) y.row(oc).array() += b.value()[oc];
    }

    std::vector<Var> inputs{x, w};
    if (b.valid()) inputs.push_back(b);
    return make_op(std::move(out), std::move(inputs), [=](Node& self) {
        auto& xin = *self.inputs[0];
        auto& win = *self.inputs[1];
        Node* bin = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        Buffer col(ckk * ohw), dcol(ckk * ohw);
        MapConstMat wm(win.value.data(), o, ckk);
        for (std::size_t s = 0; s < n; ++s) {
            MapConstMat gy(self.grad.data() + s * o * ohw, o, ohw);
            if (win.requires_grad) {
                im2col(xin.value.data() + s * c * ihw, c, g, col.data());
                MapMat(win.grad_buffer().data(), o, ckk).noalias() +=
                    gy * MapConstMat(col.data(), ckk, ohw).transpose();
            }
            if (bin && bin->requires_grad) {
                auto& gb = bin->grad_buffer();
                for (std::size_t oc = 0; oc < o; ++oc) gb[oc] += gy.row(oc).sum();
            }
            if (xin.requires_grad) {
                MapMat(dcol.data(), ckk, ohw).noalias() = wm.transpose() * gy;
                col2im_add(dcol.data(), c, g, xin.grad_buffer().data() + s * c * ihw);
            }
        }
    });
}

Var conv2d_transpose(const Var& x, const Var& w, const Var& b, std::size_t stride,
                     Padding padding) {
    require_rank("conv2d_transpose", x, 4);
    const std::size_t n = x.shape()[0], c = x.shape()[1];
    check_kernel("conv2d_transpose", w, c, 0);
    const std::size_t o = w.shape()[1], k = w.shape()[2];
    check_bias("conv2d_transpose", b, o);
    const std::size_t oh = conv_transpose_extent(x.shape()[2], k, stride, padding);
    const std::size_t ow = conv_transpose_extent(x.shape()[3], k, stride, padding);
    // Geometry of the forward convolution this op is the adjoint of.
    const ConvGeometry g = conv_geometry(oh, ow, k, stride, padding);
    if (g.out_h != x.shape()[2] || g.out_w != x.shape()[3])
        throw ShapeError("conv2d_transpose: no adjoint geometry for " + shape_str(x.shape()));
    const std::size_t okk = o * k * k, ihw = g.out_h * g.out_w, ohw = oh * ow;

    Tensor out({n, o, oh, ow});
    Buffer cols(okk * ihw);
    MapConstMat wm(w.value().data(), c, okk);
    for (std::size_t s = 0; s < n; ++s) {
        MapMat(cols.data(), okk, ihw).noalias() =
            wm.transpose() * MapConstMat(x.value().data() + s * c * ihw, c, ihw);
        double* y = out.data() + s * o * ohw;
        col2im_add(cols.data(), o, g, y);
        if (b.valid())
            for (std::size_t oc = 0; oc < o; ++oc)
                for (std::size_t i = 0; i < ohw; ++i) y[oc * ohw + i] += b.value()[oc];
    }

    std::vector<Var> inputs{x, w};
    if (b.valid()) inputs.push_back(b);
    return make_op(std::move(out), std::move(inputs), [=](Node& self) {
        auto& xin = *self.inputs[0];
        auto& win = *self.inputs[1];
        Node* bin = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        Buffer cols(okk * ihw);
        MapConstMat wm(win.value.data(), c, okk);
        for (std::size_t s = 0; s < n; ++s) {
            const double* gy = self.grad.data() + s * o * ohw;
            if (bin && bin->requires_grad) {
                auto& gb = bin->grad_buffer();
                for (std::size_t oc = 0; oc < o; ++oc)
                    for (std::size_t i = 0; i < ohw; ++i) gb[oc] += gy[oc * ohw + i];
            }
            if (!xin.requires_grad && !win.requires_grad) continue;
            im2col(gy, o, g, cols.data());
            MapConstMat gcols(cols.data(), okk, ihw);
            if (xin.requires_grad)
                MapMat(xin.grad_buffer().data() + s * c * ihw, c, ihw).noalias() += wm * gcols;
            if (win.requires_grad)
                MapMat(win.grad_buffer().data(), c, okk).noalias() +=
                    MapConstMat(xin.value.data() + s * c * ihw, c, ihw) * gcols.transpose();
        }
    });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps, BatchStats* stats) {
    require_rank("batch_norm", x, 2);
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
        throw ShapeError("batch_norm: input " + shape_str(x.shape()) + " gamma " +
                         shape_str(gamma.shape()) + " beta " + shape_str(beta.shape()));
    Tensor mu({d}, 0.0), var({d}, 0.0);
    const auto& xv = x.value();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) mu[c] += xv.at(r, c);
    for (std::size_t c = 0; c < d; ++c) mu[c] /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            const double dv = xv.at(r, c) - mu[c];
            var[c] += dv * dv;
        }
    for (std::size_t c = 0; c < d; ++c) var[c] /= static_cast<double>(n);

    Tensor xhat({n, d}), out({n, d});
    std::vector<double> inv_std(d);
    for (std::size_t c = 0; c < d; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            xhat.at(r, c) = (xv.at(r, c) - mu[c]) * inv_std[c];
            out.at(r, c) = gamma.value()[c] * xhat.at(r, c) + beta.value()[c];
        }
    if (stats) *stats = {mu, var};

    return make_op(std::move(out), {x, gamma, beta}, [=](Node& self) {
        auto& xin = *self.inputs[0];
        auto& gin = *self.inputs[1];
        auto& bin = *self.inputs[2];
        std::vector<double> sum_dy(d, 0.0), sum_dy_xhat(d, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                sum_dy[c] += self.grad.at(r, c);
                sum_dy_xhat[c] += self.grad.at(r, c) * xhat.at(r, c);
            }
        if (gin.requires_grad)
            for (std::size_t c = 0; c < d; ++c) gin.grad_buffer()[c] += sum_dy_xhat[c];
        if (bin.requires_grad)
            for (std::size_t c = 0; c < d; ++c) bin.grad_buffer()[c] += sum_dy[c];
        if (xin.requires_grad) {
            auto& gx = xin.grad_buffer();
            const double nn = static_cast<double>(n);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < d; ++c) {
                    const double gmm = gin.value[c] * inv_std[c] / nn;
                    gx.at(r, c) += gmm * (nn * self.grad.at(r, c) - sum_dy[c] -
                                          xhat.at(r, c) * sum_dy_xhat[c]);
                }
        }
    });
}

}  // namespace lungcrct
