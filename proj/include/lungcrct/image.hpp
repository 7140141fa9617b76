#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace lungcrct::image {

/// Grayscale raster, row-major, values in [0,1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}
    double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
    double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
    friend bool operator==(const Image&, const Image&) = default;
};

/// PGM (P2/P5) or PNG by extension; colour PNGs are converted to gray.
/// Throws FormatError on anything unreadable.
Image read_image(const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// 8-bit binary PGM; values are clamped to [0,1] and rounded.
void write_pgm(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const Image& img);

/// Bilinear resampling with half-pixel centres.
Image resize(const Image& img, std::size_t height, std::size_t width);
/// Central square-ish window keeping round(fraction * side) pixels per axis.
Image center_crop(const Image& img, double fraction);
/// Resize to 256, centre-crop by `crop_fraction`, resize to `extent`.
Image preprocess(const Image& img, std::size_t extent, double crop_fraction = 180.0 / 256.0);

/// Lays equally sized images out in a grid with `pad` pixels of `background`.
Image tile(const std::vector<Image>& images, std::size_t columns, std::size_t pad = 2,
           double background = 1.0);

}  // namespace lungcrct::image
