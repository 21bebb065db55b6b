#include "vslp/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace vslp {

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255));
}

}  // namespace

bool class_color(std::size_t label, std::size_t classes,
                 std::array<double, 3>& rgb) {
  static constexpr std::array<std::array<double, 3>, 6> kPalette = {{
      {1.0, 0.0, 0.0},
      {0.0, 1.0, 0.0},
      {0.0, 0.0, 1.0},
      {1.0, 1.0, 0.0},
      {0.0, 1.0, 1.0},
      {1.0, 0.0, 1.0},
  }};
  std::size_t slot;
  if (classes <= 2) {
    if (label == 0) return false;
    slot = label - 1;
  } else {
    slot = label;
  }
  rgb = kPalette[slot % kPalette.size()];
  return true;
}

RgbImage to_rgb(const PixelField& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw std::invalid_argument("to_rgb: need 1 or 3 channels");
  }
  RgbImage out{image.height(), image.width(),
                std::vector<std::uint8_t>(image.pixels() * 3)};
  for (std::size_t p = 0; p < image.pixels(); ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = image.channels() == 1 ? 0 : c;
      out.pixels[p * 3 + c] = to_byte(image.data()[p * image.channels() + src]);
    }
  }
  return out;
}

RgbImage render_overlay(const PixelField& image, const LabelMask& mask,
                        std::size_t classes) {
  if (image.height() != mask.height || image.width() != mask.width) {
    throw std::invalid_argument("render_overlay: shape mismatch");
  }
  RgbImage out = to_rgb(image);
  for (std::size_t p = 0; p < image.pixels(); ++p) {
    std::array<double, 3> color{};
    if (!class_color(mask.labels[p], classes, color)) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = image.channels() == 1 ? 0 : c;
      const double base =
          std::clamp(image.data()[p * image.channels() + src], 0.0, 1.0);
      out.pixels[p * 3 + c] =
          to_byte((1.0 - kOverlayAlpha) * base + kOverlayAlpha * color[c]);
    }
  }
  return out;
}

RgbImage render_iterate(const PixelField& u) {
  if (u.channels() == 1 || u.channels() == 3) return to_rgb(u);
  if (u.channels() < 3) {
    throw std::invalid_argument("render_iterate: unsupported channel count");
  }
  return to_rgb(u.slice_channels(0, 3));
}

void write_ppm(std::ostream& out, const RgbImage& img) {
  if (img.pixels.size() != img.height * img.width * 3) {
    throw std::invalid_argument("write_ppm: pixel buffer size");
  }
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("write_ppm: write failed");
}

void save_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_ppm(out, img);
}

RgbImage read_ppm(std::istream& in) {
  std::string magic;
  std::size_t w = 0;
  std::size_t h = 0;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P6" || maxval != 255) {
    throw std::runtime_error("read_ppm: not an 8-bit P6 image");
  }
  in.get();
  RgbImage img{h, w, std::vector<std::uint8_t>(h * w * 3)};
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw std::runtime_error("read_ppm: truncated payload");
  return img;
}

}  // namespace vslp
