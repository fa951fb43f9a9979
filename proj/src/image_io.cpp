#include "hairshift/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "hairshift/errors.hpp"

namespace hairshift {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

void write_png(const fs::path& path, const Image& img) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng failure writing " + path.string());
    }
    png_init_io(png, fp.get());

    const std::size_t h = img.height(), w = img.width();
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<std::uint8_t> row(w * 3);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) row[x * 3 + c] = quantize(img.at(y, x, c));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const fs::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("cannot open image: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng failure reading " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    // Normalize every input to 8-bit RGB.
    png_set_strip_16(png);
    png_set_packing(png);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const std::size_t h = png_get_image_height(png, info);
    const std::size_t w = png_get_image_width(png, info);
    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    Tensor data({h, w, 3});
    for (std::size_t y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                data.at3(y, x, c) = row[x * 3 + c] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return Image(std::move(data));
}

std::array<std::uint8_t, 3> label_color(int index) {
    // Bit-reversal hues keep neighboring indices visually distinct.
    const int i = index & 0xff;
    const double hue = ((i * 0x9d) & 0xff) / 256.0 * 6.0;
    const double f = hue - std::floor(hue);
    const int sector = static_cast<int>(hue) % 6;
    const double v = 0.95, s = 0.75;
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    double r = 0, g = 0, b = 0;
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
    return {quantize(r), quantize(g), quantize(b)};
}

void write_label_png(const fs::path& path, const SemanticLabel& labels) {
    labels.validate();
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng failure writing " + path.string());
    }
    png_init_io(png, fp.get());

    const std::size_t h = labels.height(), w = labels.width();
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> palette(static_cast<std::size_t>(labels.num_classes()));
    for (std::size_t i = 0; i < palette.size(); ++i) {
        auto c = label_color(static_cast<int>(i));
        palette[i] = {c[0], c[1], c[2]};
    }
    png_set_PLTE(png, info, palette.data(), static_cast<int>(palette.size()));
    png_write_info(png, info);

    std::vector<std::uint8_t> row(w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) row[x] = static_cast<std::uint8_t>(labels.at(y, x));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ArgumentError("target size must be positive");
    const std::size_t h = img.height(), w = img.width();
    Tensor out({out_h, out_w, 3});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
        const std::size_t y0 = std::min(static_cast<std::size_t>(fy), h - 1);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
            const std::size_t x0 = std::min(static_cast<std::size_t>(fx), w - 1);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
                const double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
                out.at3(y, x, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return Image(std::move(out));
}

}  // namespace hairshift
