#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "hairshift/types.hpp"

namespace hairshift {

// 8-bit RGB PNG round trip. Values quantize to 1/255 steps on write.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

// Indexed-color PNG for label maps; palette entry per class.
void write_label_png(const std::filesystem::path& path, const SemanticLabel& labels);

// Distinct color per class index, stable across runs.
std::array<std::uint8_t, 3> label_color(int index);

// Bilinear resize used when an input image does not match the working
// resolution.
Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w);

}  // namespace hairshift
