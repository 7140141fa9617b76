#pragma once

#include <vector>

#include "lungcrct/image.hpp"

namespace lungcrct::image {

/// Dark polyline of y against x on a white canvas with a frame. Ranges are
/// fitted to the data unless `unit_square`, which also draws the diagonal.
Image xy_plot(const std::vector<double>& x, const std::vector<double>& y, std::size_t width = 400,
              std::size_t height = 240, bool unit_square = false);

/// xy_plot against the sample index.
Image line_plot(const std::vector<double>& y, std::size_t width = 400, std::size_t height = 240);

}  // namespace lungcrct::image
