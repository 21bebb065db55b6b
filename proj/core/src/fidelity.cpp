#include "vslp/fidelity.hpp"

#include <stdexcept>

namespace vslp {

namespace {

void check_shapes(const PixelField& u, const HistogramPosterior& hist) {
  if (u.height() != hist.height() || u.width() != hist.width() ||
      u.channels() != hist.classes ||
      hist.weights.channels() != hist.classes * hist.bins ||
      hist.centers.size() != hist.bins) {
    throw std::invalid_argument("wasserstein: u and histogram shapes differ");
  }
}

}  // namespace

FidelityReport wasserstein_energy(const PixelField& u,
                                  const HistogramPosterior& hist) {
  check_shapes(u, hist);
  const std::size_t k = hist.classes;
  const std::size_t n = hist.bins;
  FidelityReport report{0.0, PixelField(u.height(), u.width(), 1)};
  for (std::size_t p = 0; p < u.pixels(); ++p) {
    double e = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double x = u.data()[p * k + c];
      const double* z = hist.weights.data().data() + (p * k + c) * n;
      for (std::size_t l = 0; l < n; ++l) {
        const double d = x - hist.centers[l];
        e += d * d * z[l];
      }
    }
    e *= 0.5;
    report.per_pixel.data()[p] = e;
    report.total += e;
  }
  return report;
}

PixelField wasserstein_grad(const PixelField& u,
                            const HistogramPosterior& hist) {
  check_shapes(u, hist);
  const std::size_t n = hist.bins;
  PixelField grad(u.height(), u.width(), u.channels());
  for (std::size_t j = 0; j < u.size(); ++j) {
    const double x = u.data()[j];
    const double* z = hist.weights.data().data() + j * n;
    double g = 0.0;
    for (std::size_t l = 0; l < n; ++l) g += z[l] * (x - hist.centers[l]);
    grad.data()[j] = g;
  }
  return grad;
}

GaussianFidelity gaussian_energy_grad(const GaussianPosterior& state,
                                      const GaussianPosterior& anchor) {
  if (!state.mean.same_shape(anchor.mean) ||
      !state.stddev.same_shape(anchor.stddev) ||
      !state.mean.same_shape(state.stddev)) {
    throw std::invalid_argument("gaussian_energy_grad: shape mismatch");
  }
  GaussianFidelity out;
  out.grad_mean = PixelField(state.mean.height(), state.mean.width(),
                             state.mean.channels());
  out.grad_stddev = out.grad_mean;
  for (std::size_t j = 0; j < state.mean.size(); ++j) {
    const double dm = state.mean.data()[j] - anchor.mean.data()[j];
    const double ds = state.stddev.data()[j] - anchor.stddev.data()[j];
    out.energy += 0.5 * (dm * dm + ds * ds);
    out.grad_mean.data()[j] = dm;
    out.grad_stddev.data()[j] = ds;
  }
  return out;
}

}  // namespace vslp
