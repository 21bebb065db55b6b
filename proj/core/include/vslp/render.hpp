#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "vslp/field.hpp"

namespace vslp {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // H * W * 3

  bool operator==(const RgbImage&) const = default;
};

inline constexpr double kOverlayAlpha = 0.5;

/// Overlay colour of a class. Binary tasks colour the foreground red and
/// leave the background untouched; with three or more classes every class is
/// a tissue type and classes 0, 1, 2 are red, green, blue.
/// Returns false for classes that are not overlaid.
bool class_color(std::size_t label, std::size_t classes,
                 std::array<double, 3>& rgb);

/// Field in [0,1] with 1 or 3 channels to 8 bits per channel.
RgbImage to_rgb(const PixelField& image);

/// Alpha-blends class colours over `image` at kOverlayAlpha.
RgbImage render_overlay(const PixelField& image, const LabelMask& mask,
                        std::size_t classes);

/// Grayscale panel of a single-channel iterate, or the first three channels
/// as RGB otherwise.
RgbImage render_iterate(const PixelField& u);

void write_ppm(std::ostream& out, const RgbImage& img);
void save_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(std::istream& in);

}  // namespace vslp
