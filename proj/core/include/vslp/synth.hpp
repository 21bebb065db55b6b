#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vslp/field.hpp"
#include "vslp/stage1.hpp"

namespace vslp {

enum class Perturbation { kNone, kAdditive, kCoarse };

Perturbation parse_perturbation(const std::string& name);
std::string perturbation_name(Perturbation p);

struct SynthConfig {
  std::size_t size = 64;  // H = W, multiple of 8
  std::size_t classes = 2;
  std::size_t min_blobs = 2;
  std::size_t max_blobs = 5;
  double min_radius = 5.0;
  double max_radius = 12.0;
  double texture_std = 0.08;
  double classifier_noise = 0.25;
  Perturbation perturbation = Perturbation::kNone;
  double perturbation_delta = 0.1;  // additive half-width
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthItem {
  PixelField image;  // H x W x 3 in [0,1]
  LabelMask mask;
  ProportionVector exact;  // pixel frequencies of `mask`
  ProportionVector label;  // `exact` after perturbation
  std::uint64_t seed = 0;
};

/// Per-item seeds derive from cfg.seed and the item index, so item i does not
/// depend on n.
std::vector<SynthItem> generate_dataset(const SynthConfig& cfg, std::size_t n);
SynthItem generate_item(const SynthConfig& cfg, std::uint64_t item_seed);

ProportionVector mask_proportions(const LabelMask& mask, std::size_t classes);
ProportionVector perturb_proportions(const ProportionVector& exact,
                                     Perturbation mode, double delta,
                                     std::uint64_t seed);

/// Emulated first-stage TTA: rotate the mask, take exact per-patch class
/// proportions, add Gaussian noise truncated at two standard deviations,
/// project to the simplex, broadcast and warp back.
PredictionStack simulate_tta(const LabelMask& mask, std::size_t classes,
                             const PatchGrid& grid, std::size_t rotations,
                             double noise_std, std::uint64_t seed);

/// 3x3 binary closing (dilation then erosion); pixels outside count as unset.
std::vector<std::uint8_t> close3x3(const std::vector<std::uint8_t>& bits,
                                   std::size_t height, std::size_t width);

}  // namespace vslp
