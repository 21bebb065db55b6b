#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vslp/field.hpp"
#include "vslp/network.hpp"

namespace vslp {

/// N_r rotated-and-warped-back predictions per pixel. Each slice is an
/// H x W x N_y field whose validity marks the pixels that rotation covers.
struct PredictionStack {
  std::size_t classes = 0;
  std::vector<double> angles;
  std::vector<PixelField> slices;

  std::size_t rotations() const { return slices.size(); }
  std::size_t height() const { return slices.empty() ? 0 : slices[0].height(); }
  std::size_t width() const { return slices.empty() ? 0 : slices[0].width(); }

  /// Packs into one field with K = N_r * N_y (rotation-major). Entries of
  /// invalid (rotation, pixel) pairs hold kInvalidSample; pixel validity is
  /// true where any rotation is valid.
  PixelField pack() const;
  static PredictionStack unpack(const PixelField& packed, std::size_t classes,
                                std::vector<double> angles);

  static constexpr double kInvalidSample = -1.0;
};

/// Evenly spaced rotation angles 360 * r / N_r in degrees.
std::vector<double> tta_angles(std::size_t rotations);

/// Per-patch weights proportional to the number of tissue (valid) pixels,
/// normalised to sum to 1.
std::vector<double> tissue_weights(const PixelField& image,
                                   const PatchGrid& grid);

/// Two 3x3 conv layers (8, 16 channels), global mean, a 1x1 head and a
/// softmax: maps any patch to a point on the N_y simplex.
nn::Network make_proportion_classifier(std::size_t in_channels,
                                       std::size_t classes);

struct Stage1Item {
  PixelField image;
  ProportionVector label;
  PatchGrid grid;
  std::vector<double> weights;  // tissue weights, sum to 1
};

struct Stage1LossResult {
  double loss = 0.0;
  nn::NetworkParams grads;
};

/// (1/N) sum_i || y_i - sum_j eps_j f(patch_ij) ||^2 with normalised eps.
double stage1_loss(const nn::Network& classifier,
                   const nn::NetworkParams& params,
                   std::span<const Stage1Item> items);
Stage1LossResult stage1_loss_and_grad(const nn::Network& classifier,
                                      const nn::NetworkParams& params,
                                      std::span<const Stage1Item> items);

/// Writes each patch's vector to all its pixels, averaging overlaps. Patches
/// with an empty vector are skipped. A pixel is valid when at least one
/// contributing patch covers it and `support` is valid there.
PixelField broadcast_patches(const PatchGrid& grid,
                             std::span<const std::vector<double>> values,
                             std::size_t channels, const PixelField& support);

/// Rotation test-time augmentation: for each angle rotate the image, predict
/// every patch, broadcast to pixels and warp back.
PredictionStack tta_predict(const nn::Network& classifier,
                            const nn::NetworkParams& params,
                            const PixelField& image, const PatchGrid& grid,
                            std::size_t rotations);

/// Per-pixel modal argmax class across valid slices, one-hot over N_y. Ties
/// (both within a slice and between vote counts) go to the lowest class.
/// Pixels without valid slices are marked invalid.
PixelField vote_mask(const PredictionStack& stack);

}  // namespace vslp
