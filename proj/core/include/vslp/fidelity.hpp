#pragma once

#include "vslp/field.hpp"
#include "vslp/posterior.hpp"

namespace vslp {

struct FidelityReport {
  double total = 0.0;
  PixelField per_pixel;  // H x W x 1
};

/// D(u, z) = 1/2 sum_{h,w,k,l} (u_{hwk} - b_l)^2 z_{l,hwk}: half the squared
/// 2-Wasserstein distance between a delta at u and the histogram, summed over
/// pixels and refined classes.
FidelityReport wasserstein_energy(const PixelField& u,
                                  const HistogramPosterior& hist);

/// dD/du = sum_l z_l (u - b_l), which is u - mean for normalised histograms.
PixelField wasserstein_grad(const PixelField& u,
                            const HistogramPosterior& hist);

struct GaussianFidelity {
  double energy = 0.0;
  PixelField grad_mean;
  PixelField grad_stddev;
};

/// 1/2 sum [(mu - mu0)^2 + (sigma - sigma0)^2]: half the closed-form squared
/// 2-Wasserstein distance between one-dimensional Gaussians.
GaussianFidelity gaussian_energy_grad(const GaussianPosterior& state,
                                      const GaussianPosterior& anchor);

}  // namespace vslp
