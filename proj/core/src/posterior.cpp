#include "vslp/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vslp {

std::size_t refined_channels(std::size_t classes) {
  if (classes < 2) {
    throw std::invalid_argument("refined_channels: need at least 2 classes");
  }
  return classes == 2 ? 1 : classes;
}

std::vector<double> bin_centers(std::size_t bins) {
  std::vector<double> centers(bins);
  for (std::size_t l = 0; l < bins; ++l) {
    centers[l] = (2.0 * static_cast<double>(l) + 1.0) /
                 (2.0 * static_cast<double>(bins));
  }
  return centers;
}

std::size_t bin_index(double sample, std::size_t bins) {
  const double scaled = std::clamp(sample, 0.0, 1.0) * static_cast<double>(bins);
  return std::min(static_cast<std::size_t>(scaled), bins - 1);
}

HistogramPosterior build_histogram(const PredictionStack& stack,
                                   std::size_t bins) {
  if (bins < 2) {
    throw std::invalid_argument("build_histogram: need at least 2 bins");
  }
  if (stack.rotations() == 0) {
    throw std::invalid_argument("build_histogram: empty stack");
  }
  const std::size_t classes = stack.classes;
  const std::size_t refined = refined_channels(classes);
  const std::size_t first = classes == 2 ? 1 : 0;
  const std::size_t h = stack.height();
  const std::size_t w = stack.width();

  HistogramPosterior hist;
  hist.bins = bins;
  hist.classes = refined;
  hist.centers = bin_centers(bins);
  hist.weights = PixelField(h, w, refined * bins);
  const double uniform = 1.0 / static_cast<double>(bins);

  for (std::size_t p = 0; p < h * w; ++p) {
    double* z = hist.weights.data().data() + p * refined * bins;
    std::size_t samples = 0;
    for (const PixelField& s : stack.slices) {
      if (s.validity()[p] == 0) continue;
      ++samples;
      const double* v = s.data().data() + p * classes;
      for (std::size_t k = 0; k < refined; ++k) {
        z[k * bins + bin_index(v[first + k], bins)] += 1.0;
      }
    }
    if (samples == 0) {
      std::fill_n(z, refined * bins, uniform);
      ++hist.empty_pixels;
      continue;
    }
    const double inv = 1.0 / static_cast<double>(samples);
    for (std::size_t j = 0; j < refined * bins; ++j) z[j] *= inv;
  }
  return hist;
}

GaussianPosterior fit_gaussian(const HistogramPosterior& hist) {
  const std::size_t h = hist.height();
  const std::size_t w = hist.width();
  const std::size_t n = hist.bins;
  GaussianPosterior g{PixelField(h, w, hist.classes),
                      PixelField(h, w, hist.classes)};
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t k = 0; k < hist.classes; ++k) {
      const double* z = hist.weights.data().data() + (p * hist.classes + k) * n;
      double mass = 0.0;
      double mu = 0.0;
      for (std::size_t l = 0; l < n; ++l) {
        mass += z[l];
        mu += z[l] * hist.centers[l];
      }
      mu /= mass;
      double var = 0.0;
      for (std::size_t l = 0; l < n; ++l) {
        const double d = mu - hist.centers[l];
        var += z[l] * d * d;
      }
      var /= mass;
      g.mean.data()[p * hist.classes + k] = mu;
      g.stddev.data()[p * hist.classes + k] =
          std::max(std::sqrt(var), kMinSigma);
    }
  }
  return g;
}

PixelField histogram_mean(const HistogramPosterior& hist) {
  PixelField mean(hist.height(), hist.width(), hist.classes);
  const std::size_t n = hist.bins;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double* z = hist.weights.data().data() + j * n;
    double mu = 0.0;
    for (std::size_t l = 0; l < n; ++l) mu += z[l] * hist.centers[l];
    mean.data()[j] = mu;
  }
  return mean;
}

}  // namespace vslp
