#include "lungcrct/dependence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lungcrct/errors.hpp"
#include "lungcrct/ops.hpp"

namespace lungcrct::dependence {

namespace {

void check_pair(std::size_t nx, std::size_t ny) {
    if (nx != ny)
        throw ArgumentError("dcor: sample lengths differ (" + std::to_string(nx) + " vs " +
                            std::to_string(ny) + ")");
    if (nx < 2) throw ArgumentError("dcor: need at least 2 samples");
}

/// Double-centred |x_k - x_l| matrix, row-major n x n.
std::vector<double> centred_distances(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> a(n * n);
    std::vector<double> row_mean(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) {
            const double d = std::abs(x[k] - x[l]);
            a[k * n + l] = d;
            row_mean[k] += d;
        }
    double grand = 0.0;
    for (auto& m : row_mean) {
        grand += m;
        m /= static_cast<double>(n);
    }
    grand /= static_cast<double>(n * n);
    // a is symmetric, so column means equal row means.
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) a[k * n + l] += grand - row_mean[k] - row_mean[l];
    return a;
}

double mean_product(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s / static_cast<double>(a.size());
}

struct DcorParts {
    double vxy = 0.0, vxx = 0.0, vyy = 0.0;
    double r2() const {
        const double denom = vxx * vyy;
        return denom > 0 ? std::max(vxy, 0.0) / std::sqrt(denom) : 0.0;
    }
};

}  // namespace

double dcor_squared(std::span<const double> x, std::span<const double> y) {
    check_pair(x.size(), y.size());
    const auto a = centred_distances(x);
    const auto b = centred_distances(y);
    DcorParts p{mean_product(a, b), mean_product(a, a), mean_product(b, b)};
    return p.r2();
}

double dcor(std::span<const double> x, std::span<const double> y) {
    return std::sqrt(dcor_squared(x, y));
}

Var dcor(const Var& x, std::span<const double> y, bool squared) {
    const std::size_t n = x.size();
    if (!(x.value().rank() == 1 || (x.value().rank() == 2 && x.shape()[1] == 1)))
        throw ShapeError("dcor: expected a single sample column, got " + shape_str(x.shape()));
    check_pair(n, y.size());

    const std::span<const double> xs = x.value().values();
    auto a = centred_distances(xs);
    auto b = centred_distances(y);
    const DcorParts p{mean_product(a, b), mean_product(a, a), mean_product(b, b)};
    const double r2 = p.r2();
    const double r = std::sqrt(r2);

    std::vector<double> xcopy(xs.begin(), xs.end());
    return make_op(Tensor::scalar(squared ? r2 : r), {x},
                   [=, a = std::move(a), b = std::move(b)](Node& self) {
                       const double denom = p.vxx * p.vyy;
                       if (!(denom > 0)) return;
                       if (!squared && !(r > 0)) return;
                       // dR^2/da_kl = (B_kl / sqrt(vxx vyy) - R^2 A_kl / vxx) / n^2, using that
                       // double centring is self-adjoint.
                       const double nn = static_cast<double>(n * n);
                       const double c_b = 1.0 / (std::sqrt(denom) * nn);
                       const double c_a = r2 / (p.vxx * nn);
                       const double outer = squared ? 1.0 : 0.5 / r;
                       auto& g = self.inputs[0]->grad_buffer();
                       const double up = self.grad[0] * outer;
                       for (std::size_t m = 0; m < n; ++m) {
                           double acc = 0.0;
                           for (std::size_t l = 0; l < n; ++l) {
                               const double diff = xcopy[m] - xcopy[l];
                               if (diff == 0.0) continue;
                               const double gml = c_b * b[m * n + l] - c_a * a[m * n + l];
                               acc += diff > 0 ? gml : -gml;
                           }
                           g[m] += up * 2.0 * acc;
                       }
                   });
}

void LatentSplit::validate(std::size_t dim) const {
    std::set<std::size_t> seen;
    for (auto i : non_causal)
        if (!seen.insert(i).second || i >= dim)
            throw ArgumentError("latent split: invalid or repeated index " + std::to_string(i));
    for (auto i : causal)
        if (!seen.insert(i).second || i >= dim)
            throw ArgumentError("latent split: causal index " + std::to_string(i) +
                                " overlaps or is out of range");
    if (seen.size() != dim)
        throw ArgumentError("latent split: index sets do not cover all " + std::to_string(dim) +
                            " latent dimensions");
    if (non_causal.empty() || causal.empty())
        throw ArgumentError("latent split: both index sets must be nonempty");
}

Var dcor_loss(const Var& z, std::span<const double> y, const LatentSplit& split, double tau,
              bool squared) {
    if (z.value().rank() != 2)
        throw ShapeError("dcor_loss: latent batch must be [n,d], got " + shape_str(z.shape()));
    split.validate(z.shape()[1]);
    if (z.shape()[0] < 2) throw ArgumentError("dcor_loss: batch size must be at least 2");

    auto column_mean = [&](const std::vector<std::size_t>& cols) {
        Var total;
        for (auto c : cols) {
            Var d = dcor(slice(z, 1, c, c + 1), y, squared);
            total = total.valid() ? add(total, d) : d;
        }
        return scale(total, 1.0 / static_cast<double>(cols.size()));
    };
    return sub(column_mean(split.non_causal), scale(column_mean(split.causal), tau));
}

double knn_mi(std::span<const double> x, std::span<const double> y, std::size_t k) {
    const std::size_t n = x.size();
    if (y.size() != n)
        throw ArgumentError("knn_mi: sample lengths differ (" + std::to_string(n) + " vs " +
                            std::to_string(y.size()) + ")");
    if (k < 1 || n <= k)
        throw ArgumentError("knn_mi: need n > k >= 1 (n=" + std::to_string(n) +
                            ", k=" + std::to_string(k) + ")");

    auto standardise = [n](std::span<const double> v) {
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double e : v) ss += (e - m) * (e - m);
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        std::vector<double> out(v.begin(), v.end());
        if (sd > 0)
            for (auto& e : out) e = (e - m) / sd;
        return out;
    };
    const auto xs = standardise(x);
    const auto ys = standardise(y);

    // psi(m) for integer m via harmonic numbers.
    std::vector<double> psi(n + 2);
    constexpr double euler_gamma = 0.57721566490153286061;
    psi[1] = -euler_gamma;
    for (std::size_t m = 2; m < psi.size(); ++m) psi[m] = psi[m - 1] + 1.0 / static_cast<double>(m - 1);

    std::vector<double> dist(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            dist[j] = std::max(std::abs(xs[i] - xs[j]), std::abs(ys[i] - ys[j]));
        dist[i] = std::numeric_limits<double>::infinity();
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        const double eps = dist[k - 1];
        std::size_t nx = 0, ny = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (std::abs(xs[i] - xs[j]) < eps) ++nx;
            if (std::abs(ys[i] - ys[j]) < eps) ++ny;
        }
        acc += psi[nx + 1] + psi[ny + 1];
    }
    const double mi = psi[n] + psi[k] - acc / static_cast<double>(n);
    return std::max(mi, 0.0);
}

}  // namespace lungcrct::dependence
