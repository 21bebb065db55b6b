#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vslp {

/// Dense H x W x K grid of doubles, row-major with channels innermost, plus a
/// per-pixel validity mask. Images, segmentations, posteriors and gradients
/// all live in this container.
class PixelField {
 public:
  PixelField() = default;
  PixelField(std::size_t height, std::size_t width, std::size_t channels,
             double fill = 0.0);
  PixelField(std::size_t height, std::size_t width, std::size_t channels,
             std::vector<double> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t pixels() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t row, std::size_t col, std::size_t ch) {
    return data_[(row * width_ + col) * channels_ + ch];
  }
  double at(std::size_t row, std::size_t col, std::size_t ch) const {
    return data_[(row * width_ + col) * channels_ + ch];
  }

  std::span<double> pixel(std::size_t row, std::size_t col) {
    return {data_.data() + (row * width_ + col) * channels_, channels_};
  }
  std::span<const double> pixel(std::size_t row, std::size_t col) const {
    return {data_.data() + (row * width_ + col) * channels_, channels_};
  }

  bool valid(std::size_t row, std::size_t col) const {
    return valid_[row * width_ + col] != 0;
  }
  void set_valid(std::size_t row, std::size_t col, bool v) {
    valid_[row * width_ + col] = v ? 1 : 0;
  }
  bool all_valid() const;
  std::size_t valid_count() const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<std::uint8_t>& validity() { return valid_; }
  const std::vector<std::uint8_t>& validity() const { return valid_; }

  bool same_shape(const PixelField& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }
  bool same_grid(const PixelField& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Copies channel range [first, first + count) into a new field.
  PixelField slice_channels(std::size_t first, std::size_t count) const;

  bool operator==(const PixelField&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
  std::vector<std::uint8_t> valid_;
};

/// Hard per-pixel class labels.
struct LabelMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), labels(h * w, fill) {}
  std::uint8_t at(std::size_t row, std::size_t col) const {
    return labels[row * width + col];
  }
  std::uint8_t& at(std::size_t row, std::size_t col) {
    return labels[row * width + col];
  }
  bool operator==(const LabelMask&) const = default;
};

/// Per-pixel argmax over channels (ties to the lowest index).
LabelMask argmax_labels(const PixelField& field);
/// One-hot field with `classes` channels.
PixelField one_hot(const LabelMask& mask, std::size_t classes);

/// Concatenates fields along the channel axis. All inputs share H and W; the
/// result is valid where every input is valid.
PixelField concat_channels(std::span<const PixelField* const> parts);

/// A point on the probability simplex.
class ProportionVector {
 public:
  ProportionVector() = default;
  /// Throws std::invalid_argument unless values are in [0,1] and sum to 1.
  explicit ProportionVector(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }
  /// Index of the largest entry; ties go to the lowest index.
  std::size_t argmax() const;

  bool operator==(const ProportionVector&) const = default;

 private:
  std::vector<double> values_;
};

/// Euclidean projection onto the probability simplex.
ProportionVector project_simplex(std::span<const double> values);

struct PatchOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const PatchOrigin&) const = default;
};

struct PatchGrid {
  std::size_t image_height = 0;
  std::size_t image_width = 0;
  std::size_t patch_height = 0;
  std::size_t patch_width = 0;
  std::size_t stride = 0;
  std::vector<PatchOrigin> origins;

  std::size_t count() const { return origins.size(); }
};

/// Origins at multiples of `stride` along each axis, plus one clamped origin
/// per axis so the last patch touches the border. Requires 1 <= stride <=
/// min(patch_height, patch_width).
PatchGrid build_patch_grid(std::size_t height, std::size_t width,
                           std::size_t patch_height, std::size_t patch_width,
                           std::size_t stride);

/// Extracts patch `index` of `grid` from `field`; invalid pixels read as 0.
PixelField extract_patch(const PixelField& field, const PatchGrid& grid,
                         std::size_t index);

/// Nearest-neighbour rotation about the image centre ((H-1)/2, (W-1)/2),
/// counter-clockwise by `angle_degrees`.
///
/// The forward warp gathers: each destination pixel reads the source pixel
/// nearest to its back-rotated position, and is invalid when that falls
/// outside the grid or on an invalid source pixel. The inverse warp scatters
/// along the same pixel map, so a forward/inverse round trip is the identity
/// on every pixel that survives it. Destinations hit by several pixels take
/// the mean; pixels hit by none are invalid.
PixelField rotate_warp(const PixelField& field, double angle_degrees,
                       bool inverse);

}  // namespace vslp
