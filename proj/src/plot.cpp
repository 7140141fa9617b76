#include "lungcrct/plot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lungcrct/errors.hpp"

namespace lungcrct::image {

namespace {

constexpr std::size_t kMargin = 12;

void line(Image& img, double x0, double y0, double x1, double y1, double shade) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        const auto c = static_cast<long>(std::lround(x0 + t * (x1 - x0)));
        const auto r = static_cast<long>(std::lround(y0 + t * (y1 - y0)));
        if (r >= 0 && c >= 0 && static_cast<std::size_t>(r) < img.height && static_cast<std::size_t>(c) < img.width)
            img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = shade;
    }
}

}  // namespace

Image xy_plot(const std::vector<double>& x, const std::vector<double>& y, std::size_t width, std::size_t height,
              bool unit_square) {
    if (x.size() != y.size() || x.empty()) throw ArgumentError("plot: need equally long, nonempty series");
    if (width <= 2 * kMargin + 1 || height <= 2 * kMargin + 1) throw ArgumentError("plot: canvas too small");
    double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
    if (!unit_square) {
        std::vector<double> fy;
        for (double v : y)
            if (std::isfinite(v)) fy.push_back(v);
        if (fy.empty()) throw ArgumentError("plot: no finite values");
        std::tie(x_lo, x_hi) = std::pair(*std::min_element(x.begin(), x.end()), *std::max_element(x.begin(), x.end()));
        std::tie(y_lo, y_hi) = std::pair(*std::min_element(fy.begin(), fy.end()), *std::max_element(fy.begin(), fy.end()));
        if (x_hi == x_lo) x_hi = x_lo + 1;
        if (y_hi == y_lo) y_hi = y_lo + 1;
    }
    Image img(height, width, 1.0);
    const double w = static_cast<double>(width - 2 * kMargin - 1), h = static_cast<double>(height - 2 * kMargin - 1);
    const auto px = [&](double v) { return kMargin + (v - x_lo) / (x_hi - x_lo) * w; };
    const auto py = [&](double v) { return kMargin + (y_hi - v) / (y_hi - y_lo) * h; };

    const double left = kMargin, right = kMargin + w, top = kMargin, bottom = kMargin + h;
    line(img, left, top, right, top, 0.6);
    line(img, left, bottom, right, bottom, 0.6);
    line(img, left, top, left, bottom, 0.6);
    line(img, right, top, right, bottom, 0.6);
    if (unit_square) line(img, left, bottom, right, top, 0.8);
    for (std::size_t i = 1; i < x.size(); ++i)
        if (std::isfinite(y[i - 1]) && std::isfinite(y[i])) line(img, px(x[i - 1]), py(y[i - 1]), px(x[i]), py(y[i]), 0.0);
    if (x.size() == 1) line(img, px(x[0]), py(y[0]), px(x[0]), py(y[0]), 0.0);
    return img;
}

Image line_plot(const std::vector<double>& y, std::size_t width, std::size_t height) {
    std::vector<double> x(y.size());
    std::iota(x.begin(), x.end(), 0.0);
    return xy_plot(x, y, width, height);
}

}  // namespace lungcrct::image
