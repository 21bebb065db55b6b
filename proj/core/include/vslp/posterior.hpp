#pragma once

#include <cstddef>
#include <vector>

#include "vslp/field.hpp"
#include "vslp/stage1.hpp"

namespace vslp {

/// Minimum standard deviation of a Gaussian posterior.
inline constexpr double kMinSigma = 1e-6;

/// Channels refined by the second stage: the foreground channel alone for a
/// binary task, every class otherwise.
std::size_t refined_channels(std::size_t classes);

/// Per-pixel, per-class normalised histogram over [0, 1].
///
/// `weights` has K = N_y' * N_h channels in class-major order: the weight of
/// bin l for refined class k is channel k * N_h + l.
struct HistogramPosterior {
  std::size_t bins = 0;
  std::size_t classes = 0;  // N_y'
  std::vector<double> centers;
  PixelField weights;
  /// Pixels that had no valid sample and received a uniform histogram.
  std::size_t empty_pixels = 0;

  std::size_t height() const { return weights.height(); }
  std::size_t width() const { return weights.width(); }
  double weight(std::size_t row, std::size_t col, std::size_t cls,
                std::size_t bin) const {
    return weights.at(row, col, cls * bins + bin);
  }
};

/// Per-pixel, per-class mean and standard deviation.
struct GaussianPosterior {
  PixelField mean;
  PixelField stddev;

  std::size_t classes() const { return mean.channels(); }
};

/// Equidistant centres (2l + 1) / (2 N_h), l = 0..N_h-1.
std::vector<double> bin_centers(std::size_t bins);

/// Bin index of a sample in [0, 1] for N_h equal bins, last bin right-closed.
std::size_t bin_index(double sample, std::size_t bins);

/// Counts valid rotation samples per bin and normalises per pixel/class.
/// Binary stacks (N_y = 2) keep only the class-1 channel.
HistogramPosterior build_histogram(const PredictionStack& stack,
                                   std::size_t bins);

/// Method-of-moments fit; sigma is clamped below at kMinSigma.
GaussianPosterior fit_gaussian(const HistogramPosterior& hist);

/// Per-pixel histogram mean sum_l z_l b_l.
PixelField histogram_mean(const HistogramPosterior& hist);

}  // namespace vslp
