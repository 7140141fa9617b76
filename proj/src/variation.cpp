#include "lungcrct/variation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lungcrct/errors.hpp"
#include "lungcrct/ops.hpp"

namespace lungcrct::variation {

namespace {

/// Ranges this small relative to the values themselves count as constant input.
bool flat(double lo, double hi) { return !(hi - lo > 1e-12 * std::max(std::abs(lo), std::abs(hi))); }

double entropy_of_counts(std::span<const double> counts, double total) {
    double h = 0;
    for (double c : counts)
        if (c > 0) {
            const double p = c / total;
            h -= p * std::log2(p);
        }
    return std::max(0.0, h);
}

}  // namespace

void HistogramSpec::validate() const {
    if (bins < 2) throw ArgumentError("histogram needs at least 2 bins");
}

double sample_std(std::span<const double> values) {
    if (values.size() < 2) throw ArgumentError("sample standard deviation needs at least 2 values");
    const double n = static_cast<double>(values.size());
    const double m = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / (n - 1));
}

double column_std(const Tensor& z, std::size_t column) {
    if (z.rank() != 2) throw ShapeError("expected a [n,d] latent batch, got " + shape_str(z.shape()));
    if (column >= z.dim(1)) throw ArgumentError("latent column out of range");
    std::vector<double> col(z.dim(0));
    for (std::size_t i = 0; i < col.size(); ++i) col[i] = z.at(i, column);
    return sample_std(col);
}

Tensor shift_column(const Tensor& z, std::size_t column, double amount) {
    if (z.rank() != 2) throw ShapeError("expected a [n,d] latent batch, got " + shape_str(z.shape()));
    if (column >= z.dim(1)) throw ArgumentError("latent column out of range");
    Tensor out = z;
    for (std::size_t i = 0; i < z.dim(0); ++i) out.at(i, column) += amount;
    return out;
}

Tensor impulse(const Tensor& z, std::size_t column) { return shift_column(z, column, column_std(z, column)); }

double shannon_entropy(std::span<const double> values, const HistogramSpec& spec) {
    spec.validate();
    if (values.empty()) throw ArgumentError("entropy of an empty collection");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    if (!std::isfinite(range)) throw DataError("entropy of non-finite values");
    if (flat(*lo, *hi)) return 0.0;
    const std::size_t bins = spec.bins;
    std::vector<double> counts(bins, 0.0);
    for (double v : values) {
        const auto b = static_cast<std::size_t>((v - *lo) / range * static_cast<double>(bins));
        ++counts[std::min(b, bins - 1)];
    }
    return entropy_of_counts(counts, static_cast<double>(values.size()));
}

Var soft_entropy_rows(const Var& x, const HistogramSpec& spec) {
    spec.validate();
    if (x.shape().empty() || x.shape()[0] == 0) throw ShapeError("soft entropy needs a batch");
    const std::size_t n = x.shape()[0];
    const std::size_t p = x.size() / n;
    if (p == 0) throw ShapeError("soft entropy of empty rows");
    const std::size_t bins = spec.bins;
    const double b = static_cast<double>(bins);

    struct Row {
        std::size_t lo = 0, hi = 0;
        double range = 0;
        std::vector<double> prob;
    };
    std::vector<Row> rows(n);
    Tensor out({n}, 0.0);
    const double* xv = x.value().data();
    for (std::size_t r = 0; r < n; ++r) {
        const double* v = xv + r * p;
        Row& row = rows[r];
        row.lo = static_cast<std::size_t>(std::min_element(v, v + p) - v);
        row.hi = static_cast<std::size_t>(std::max_element(v, v + p) - v);
        row.range = v[row.hi] - v[row.lo];
        if (flat(v[row.lo], v[row.hi])) continue;
        row.prob.assign(bins, 0.0);
        for (std::size_t k = 0; k < p; ++k) {
            const double t = std::clamp((v[k] - v[row.lo]) / row.range * b - 0.5, 0.0, b - 1);
            const auto j = std::min(static_cast<std::size_t>(t), bins - 2);
            const double frac = t - static_cast<double>(j);
            row.prob[j] += 1 - frac;
            row.prob[j + 1] += frac;
        }
        for (auto& c : row.prob) c /= static_cast<double>(p);
        out[r] = entropy_of_counts(row.prob, 1.0);
    }

    return make_op(std::move(out), {x}, [rows = std::move(rows), n, p, bins, b](Node& node) {
        Node& in = *node.inputs[0];
        const double* v = in.value.data();
        Tensor& g = in.grad_buffer();
        std::vector<double> dp(bins);
        for (std::size_t r = 0; r < n; ++r) {
            const Row& row = rows[r];
            const double go = node.grad[r];
            if (row.prob.empty() || go == 0) continue;
            // dH/dc_j with c_j the soft count; p_j = c_j / P
            for (std::size_t j = 0; j < bins; ++j)
                dp[j] = row.prob[j] > 0 ? -(std::log2(row.prob[j]) + 1 / std::log(2.0)) / static_cast<double>(p) : 0.0;
            const double* vr = v + r * p;
            double* gr = g.data() + r * p;
            const double lo = vr[row.lo];
            double g_lo = 0, g_hi = 0;
            for (std::size_t k = 0; k < p; ++k) {
                const double t = (vr[k] - lo) / row.range * b - 0.5;
                if (t <= 0 || t >= b - 1) continue;
                const auto j = std::min(static_cast<std::size_t>(t), bins - 2);
                const double dt = go * (dp[j + 1] - dp[j]);  // dH/dt
                const double u = (vr[k] - lo) / row.range;
                gr[k] += dt * b / row.range;
                g_lo += dt * b * (u - 1) / row.range;
                g_hi -= dt * b * u / row.range;
            }
            gr[row.lo] += g_lo;
            gr[row.hi] += g_hi;
        }
    });
}

VariationLoss variation_loss(const Tensor& z, const Decoder& decode, const std::vector<std::size_t>& causal,
                             std::mt19937_64& rng, std::size_t subset_size, const HistogramSpec& spec) {
    spec.validate();
    if (z.rank() != 2) throw ShapeError("expected a [n,d] latent batch, got " + shape_str(z.shape()));
    if (causal.empty()) throw ArgumentError("variation loss needs at least one causal column");
    const std::size_t n = z.dim(0), d = z.dim(1);
    if (subset_size == 0 || subset_size > n)
        throw ArgumentError("variation subset of " + std::to_string(subset_size) + " from a batch of " +
                            std::to_string(n));

    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(subset_size);
    std::sort(rows.begin(), rows.end());

    const std::size_t m = subset_size, k = causal.size();
    Tensor stacked({m * (k + 1), d});
    for (std::size_t i = 0; i < m; ++i)
        std::copy(z.data() + rows[i] * d, z.data() + (rows[i] + 1) * d, stacked.data() + i * d);
    for (std::size_t c = 0; c < k; ++c) {
        const double sigma = column_std(z, causal[c]);
        for (std::size_t i = 0; i < m; ++i) {
            double* dst = stacked.data() + ((c + 1) * m + i) * d;
            std::copy(stacked.data() + i * d, stacked.data() + (i + 1) * d, dst);
            dst[causal[c]] += sigma;
        }
    }

    const Var images = decode(constant(std::move(stacked)));
    const Var base = slice(images, 0, 0, m);
    Var soft;
    double hard = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const Var diff = square(sub(slice(images, 0, (c + 1) * m, (c + 2) * m), base));
        const Var h = mean(soft_entropy_rows(diff, spec));
        soft = soft.valid() ? add(soft, h) : h;
        const std::size_t px = diff.size() / m;
        for (std::size_t i = 0; i < m; ++i)
            hard += shannon_entropy(std::span<const double>(diff.value().data() + i * px, px), spec);
    }
    return {scale(soft, 1.0 / static_cast<double>(k)), hard / static_cast<double>(k * m)};
}

}  // namespace lungcrct::variation
