#include "vslp/field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace vslp {

PixelField::PixelField(std::size_t height, std::size_t width,
                       std::size_t channels, double fill)
    : height_(height),
      width_(width),
      channels_(channels),
      data_(height * width * channels, fill),
      valid_(height * width, 1) {}

PixelField::PixelField(std::size_t height, std::size_t width,
                       std::size_t channels, std::vector<double> data)
    : height_(height),
      width_(width),
      channels_(channels),
      data_(std::move(data)),
      valid_(height * width, 1) {
  if (data_.size() != height * width * channels) {
    throw std::invalid_argument("PixelField: data length " +
                                std::to_string(data_.size()) +
                                " does not match H*W*K");
  }
}

bool PixelField::all_valid() const {
  return std::all_of(valid_.begin(), valid_.end(),
                     [](std::uint8_t v) { return v != 0; });
}

std::size_t PixelField::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(valid_.begin(), valid_.end(),
                    [](std::uint8_t v) { return v != 0; }));
}

PixelField PixelField::slice_channels(std::size_t first,
                                      std::size_t count) const {
  if (first + count > channels_) {
    throw std::invalid_argument("slice_channels: range exceeds channel count");
  }
  PixelField out(height_, width_, count);
  for (std::size_t p = 0; p < pixels(); ++p) {
    std::copy_n(data_.begin() + p * channels_ + first, count,
                out.data_.begin() + p * count);
  }
  out.valid_ = valid_;
  return out;
}

PixelField concat_channels(std::span<const PixelField* const> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_channels: no inputs");
  }
  const std::size_t h = parts[0]->height();
  const std::size_t w = parts[0]->width();
  std::size_t total = 0;
  for (const PixelField* f : parts) {
    if (f->height() != h || f->width() != w) {
      throw std::invalid_argument("concat_channels: inconsistent H/W");
    }
    total += f->channels();
  }
  PixelField out(h, w, total);
  for (std::size_t p = 0; p < h * w; ++p) {
    double* dst = out.data().data() + p * total;
    bool ok = true;
    for (const PixelField* f : parts) {
      const std::size_t k = f->channels();
      std::copy_n(f->data().data() + p * k, k, dst);
      dst += k;
      ok = ok && f->validity()[p] != 0;
    }
    out.validity()[p] = ok ? 1 : 0;
  }
  return out;
}

LabelMask argmax_labels(const PixelField& field) {
  LabelMask mask(field.height(), field.width());
  const std::size_t k = field.channels();
  for (std::size_t p = 0; p < field.pixels(); ++p) {
    const double* v = field.data().data() + p * k;
    mask.labels[p] =
        static_cast<std::uint8_t>(std::max_element(v, v + k) - v);
  }
  return mask;
}

PixelField one_hot(const LabelMask& mask, std::size_t classes) {
  PixelField out(mask.height, mask.width, classes);
  for (std::size_t p = 0; p < mask.labels.size(); ++p) {
    if (mask.labels[p] >= classes) {
      throw std::invalid_argument("one_hot: label exceeds class count");
    }
    out.data()[p * classes + mask.labels[p]] = 1.0;
  }
  return out;
}

ProportionVector::ProportionVector(std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.empty()) {
    throw std::invalid_argument("ProportionVector: empty");
  }
  double sum = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw std::invalid_argument("ProportionVector: entry outside [0,1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("ProportionVector: entries sum to " +
                                std::to_string(sum));
  }
}

std::size_t ProportionVector::argmax() const {
  return static_cast<std::size_t>(
      std::max_element(values_.begin(), values_.end()) - values_.begin());
}

ProportionVector project_simplex(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n == 0) {
    throw std::invalid_argument("project_simplex: empty input");
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("project_simplex: non-finite input");
    }
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cumulative += sorted[i];
    const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - t > 0.0) theta = t;
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::clamp(values[i] - theta, 0.0, 1.0);
  }
  return ProportionVector(std::move(out));
}

namespace {

std::vector<std::size_t> axis_origins(std::size_t extent, std::size_t patch,
                                      std::size_t stride) {
  std::vector<std::size_t> origins;
  for (std::size_t o = 0; o + patch <= extent; o += stride) {
    origins.push_back(o);
  }
  if (origins.back() + patch < extent) origins.push_back(extent - patch);
  return origins;
}

}  // namespace

PatchGrid build_patch_grid(std::size_t height, std::size_t width,
                           std::size_t patch_height, std::size_t patch_width,
                           std::size_t stride) {
  if (patch_height == 0 || patch_width == 0 || patch_height > height ||
      patch_width > width) {
    throw std::invalid_argument("build_patch_grid: patch does not fit image");
  }
  if (stride == 0) {
    throw std::invalid_argument("build_patch_grid: stride must be >= 1");
  }
  if (stride > std::min(patch_height, patch_width)) {
    throw std::invalid_argument(
        "build_patch_grid: stride larger than patch leaves gaps");
  }
  PatchGrid grid;
  grid.image_height = height;
  grid.image_width = width;
  grid.patch_height = patch_height;
  grid.patch_width = patch_width;
  grid.stride = stride;
  for (std::size_t r : axis_origins(height, patch_height, stride)) {
    for (std::size_t c : axis_origins(width, patch_width, stride)) {
      grid.origins.push_back({r, c});
    }
  }
  return grid;
}

PixelField extract_patch(const PixelField& field, const PatchGrid& grid,
                         std::size_t index) {
  const PatchOrigin o = grid.origins.at(index);
  PixelField patch(grid.patch_height, grid.patch_width, field.channels());
  for (std::size_t r = 0; r < grid.patch_height; ++r) {
    for (std::size_t c = 0; c < grid.patch_width; ++c) {
      const std::size_t sr = o.row + r;
      const std::size_t sc = o.col + c;
      const bool ok = field.valid(sr, sc);
      patch.set_valid(r, c, ok);
      if (!ok) continue;
      auto src = field.pixel(sr, sc);
      std::copy(src.begin(), src.end(), patch.pixel(r, c).begin());
    }
  }
  return patch;
}

namespace {

// For each destination pixel of a rotation by `angle`, the linear index of
// its nearest source pixel, or -1 when it falls outside the grid.
std::vector<std::ptrdiff_t> rotation_map(std::size_t h, std::size_t w,
                                         double angle_degrees) {
  const double rad = angle_degrees * std::numbers::pi / 180.0;
  double cs = std::cos(rad);
  double sn = std::sin(rad);
  // Snap so quarter turns map exactly.
  if (std::abs(cs) < 1e-12) cs = 0.0;
  if (std::abs(sn) < 1e-12) sn = 0.0;
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  std::vector<std::ptrdiff_t> map(h * w, -1);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      // y axis points up.
      const double x = static_cast<double>(c) - cx;
      const double y = cy - static_cast<double>(r);
      const double sx = x * cs + y * sn;
      const double sy = -x * sn + y * cs;
      const double src_c = std::floor(cx + sx + 0.5);
      const double src_r = std::floor(cy - sy + 0.5);
      if (src_r < 0.0 || src_c < 0.0 || src_r >= static_cast<double>(h) ||
          src_c >= static_cast<double>(w)) {
        continue;
      }
      map[r * w + c] = static_cast<std::ptrdiff_t>(src_r) *
                           static_cast<std::ptrdiff_t>(w) +
                       static_cast<std::ptrdiff_t>(src_c);
    }
  }
  return map;
}

}  // namespace

PixelField rotate_warp(const PixelField& field, double angle_degrees,
                       bool inverse) {
  if (!std::isfinite(angle_degrees)) {
    throw std::invalid_argument("rotate_warp: non-finite angle");
  }
  double angle = std::fmod(angle_degrees, 360.0);
  if (angle < 0.0) angle += 360.0;

  const std::size_t h = field.height();
  const std::size_t w = field.width();
  const std::size_t k = field.channels();
  const auto map = rotation_map(h, w, angle);
  PixelField out(h, w, k);

  if (!inverse) {
    for (std::size_t p = 0; p < h * w; ++p) {
      const std::ptrdiff_t s = map[p];
      if (s < 0 || field.validity()[static_cast<std::size_t>(s)] == 0) {
        out.validity()[p] = 0;
        continue;
      }
      std::copy_n(field.data().data() + static_cast<std::size_t>(s) * k, k,
                  out.data().data() + p * k);
    }
    return out;
  }

  std::vector<std::uint32_t> hits(h * w, 0);
  for (std::size_t p = 0; p < h * w; ++p) {
    const std::ptrdiff_t s = map[p];
    if (s < 0 || field.validity()[p] == 0) continue;
    const auto dst = static_cast<std::size_t>(s);
    const double n = static_cast<double>(++hits[dst]);
    // Running mean: colliding equal values stay bit-exact.
    for (std::size_t ch = 0; ch < k; ++ch) {
      double& acc = out.data()[dst * k + ch];
      acc += (field.data()[p * k + ch] - acc) / n;
    }
  }
  for (std::size_t p = 0; p < h * w; ++p) {
    if (hits[p] == 0) out.validity()[p] = 0;
  }
  return out;
}

}  // namespace vslp
