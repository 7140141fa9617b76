#include "lungcrct/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "lungcrct/errors.hpp"

namespace lungcrct::image {

namespace fs = std::filesystem;

namespace {

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

/// Next header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& is) {
    std::string tok;
    char c;
    while (is.get(c)) {
        if (c == '#') {
            std::string rest;
            std::getline(is, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image read_image(const fs::path& path) {
    const std::string e = lower_ext(path);
    if (e == ".pgm") return read_pgm(path);
    if (e == ".png") return read_png(path);
    throw FormatError("unsupported image type: " + path.string());
}

Image read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    const std::string magic = pgm_token(in);
    if (magic != "P5" && magic != "P2") throw FormatError(path.string() + ": not a PGM file");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(pgm_token(in));
        h = std::stoul(pgm_token(in));
        maxval = std::stoul(pgm_token(in));
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 65535)
        throw FormatError(path.string() + ": malformed PGM header");
    Image img(h, w);
    if (magic == "P2") {
        for (auto& p : img.pixels) {
            std::size_t v;
            if (!(in >> v) || v > maxval) throw FormatError(path.string() + ": truncated PGM data");
            p = static_cast<double>(v) / static_cast<double>(maxval);
        }
        return img;
    }
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(w * h * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw FormatError(path.string() + ": truncated PGM data");
    for (std::size_t i = 0; i < w * h; ++i) {
        const std::size_t v = bytes == 1 ? raw[i] : (std::size_t(raw[2 * i]) << 8) | raw[2 * i + 1];
        img.pixels[i] = std::min(1.0, static_cast<double>(v) / static_cast<double>(maxval));
    }
    return img;
}

Image read_png(const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str()))
        throw FormatError(path.string() + ": " + png.message);
    png.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&png);
        throw FormatError(path.string() + ": " + png.message);
    }
    Image img(png.height, png.width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = buf[i] / 255.0;
    return img;
}

void write_pgm(const fs::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<char> bytes(img.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(to_byte(img.pixels[i]));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("cannot write " + path.string());
}

void write_png(const fs::path& path, const Image& img) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(img.pixels.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.pixels[i]);
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr))
        throw FormatError("cannot write " + path.string() + ": " + png.message);
}

Image resize(const Image& img, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw ArgumentError("resize: zero target extent");
    if (height == img.height && width == img.width) return img;
    Image out(height, width);
    const double sy = static_cast<double>(img.height) / static_cast<double>(height);
    const double sx = static_cast<double>(img.width) / static_cast<double>(width);
    auto coord = [](double pos, std::size_t n, std::size_t& i0, std::size_t& i1, double& t) {
        pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
        i0 = static_cast<std::size_t>(std::floor(pos));
        i1 = std::min(i0 + 1, n - 1);
        t = pos - static_cast<double>(i0);
    };
    for (std::size_t r = 0; r < height; ++r) {
        std::size_t y0, y1;
        double ty;
        coord((static_cast<double>(r) + 0.5) * sy - 0.5, img.height, y0, y1, ty);
        for (std::size_t c = 0; c < width; ++c) {
            std::size_t x0, x1;
            double tx;
            coord((static_cast<double>(c) + 0.5) * sx - 0.5, img.width, x0, x1, tx);
            const double top = img.at(y0, x0) * (1 - tx) + img.at(y0, x1) * tx;
            const double bottom = img.at(y1, x0) * (1 - tx) + img.at(y1, x1) * tx;
            out.at(r, c) = top * (1 - ty) + bottom * ty;
        }
    }
    return out;
}

Image center_crop(const Image& img, double fraction) {
    if (!(fraction > 0 && fraction <= 1)) throw ArgumentError("center_crop: fraction must lie in (0, 1]");
    const auto keep = [&](std::size_t n) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n))));
    };
    const std::size_t h = keep(img.height), w = keep(img.width);
    const std::size_t top = (img.height - h) / 2, left = (img.width - w) / 2;
    Image out(h, w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) out.at(r, c) = img.at(top + r, left + c);
    return out;
}

Image preprocess(const Image& img, std::size_t extent, double crop_fraction) {
    return resize(center_crop(resize(img, 256, 256), crop_fraction), extent, extent);
}

Image tile(const std::vector<Image>& images, std::size_t columns, std::size_t pad, double background) {
    if (images.empty() || columns == 0) throw ArgumentError("tile: nothing to lay out");
    const std::size_t h = images[0].height, w = images[0].width;
    for (const auto& im : images)
        if (im.height != h || im.width != w) throw ShapeError("tile: images differ in size");
    const std::size_t cols = std::min(columns, images.size());
    const std::size_t rows = (images.size() + cols - 1) / cols;
    Image out(rows * h + (rows + 1) * pad, cols * w + (cols + 1) * pad, background);
    for (std::size_t k = 0; k < images.size(); ++k) {
        const std::size_t r0 = pad + (k / cols) * (h + pad), c0 = pad + (k % cols) * (w + pad);
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) out.at(r0 + r, c0 + c) = images[k].at(r, c);
    }
    return out;
}

}  // namespace lungcrct::image
