#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vslp/fidelity.hpp"

namespace vslp {
namespace {

using oracle::random_histogram;

HistogramPosterior one_pixel(std::vector<double> weights) {
  HistogramPosterior hist;
  hist.bins = weights.size();
  hist.classes = 1;
  hist.centers = bin_centers(hist.bins);
  hist.weights = PixelField(1, 1, hist.bins);
  hist.weights.data() = std::move(weights);
  return hist;
}

PixelField scalar_field(double v) { return PixelField(1, 1, 1, v); }

TEST(WassersteinEnergy, DeltaOnItsBinIsZero) {
  const auto hist = one_pixel({0.0, 0.0, 1.0});
  EXPECT_EQ(wasserstein_energy(scalar_field(5.0 / 6.0), hist).total, 0.0);
}

TEST(WassersteinEnergy, Examples) {
  EXPECT_NEAR(wasserstein_energy(scalar_field(0.5), one_pixel({0.25, 0.5, 0.25})).total,
              0.5 * (0.25 / 9.0 + 0.0 + 0.25 / 9.0), 1e-15);
  EXPECT_NEAR(wasserstein_energy(scalar_field(0.0), one_pixel({0.5, 0.5, 0.0})).total,
              0.5 * (0.5 / 36.0 + 0.5 * 0.25), 1e-15);
  EXPECT_NEAR(wasserstein_energy(scalar_field(0.0), one_pixel({0.5, 0.5, 0.0})).total,
              0.069444, 1e-6);
}

TEST(WassersteinEnergy, ShapeMismatchRejected) {
  std::mt19937_64 rng(41);
  const auto hist = random_histogram(3, 3, 1, 3, rng);
  EXPECT_THROW(wasserstein_energy(PixelField(3, 3, 2), hist),
               std::invalid_argument);
  EXPECT_THROW(wasserstein_grad(PixelField(2, 3, 1), hist),
               std::invalid_argument);
}

TEST(WassersteinEnergy, PerPixelFieldSumsToTotal) {
  std::mt19937_64 rng(42);
  const auto hist = random_histogram(5, 4, 3, 6, rng);
  const PixelField u = oracle::random_field(5, 4, 3, rng);
  const auto report = wasserstein_energy(u, hist);
  double sum = 0.0;
  for (double v : report.per_pixel.data()) sum += v;
  EXPECT_NEAR(sum, report.total, 1e-9);
  EXPECT_EQ(report.per_pixel.channels(), 1u);
  EXPECT_GE(report.total, 0.0);
}

TEST(WassersteinEnergy, HalfOfOptimalTransportOracle) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t bins = 2 + rng() % 9;
    const auto hist = random_histogram(1, 1, 1, bins, rng);
    const double x = u(rng);
    std::vector<std::pair<double, double>> h;
    for (std::size_t l = 0; l < bins; ++l) {
      h.emplace_back(hist.centers[l], hist.weights.data()[l]);
    }
    const double ot = oracle::w2_squared({{x, 1.0}}, h);
    EXPECT_NEAR(wasserstein_energy(scalar_field(x), hist).total, 0.5 * ot, 1e-10);
  }
}

TEST(WassersteinGrad, Examples) {
  const auto hist = one_pixel({0.25, 0.5, 0.25});
  EXPECT_NEAR(wasserstein_grad(scalar_field(0.0), hist).at(0, 0, 0), -0.5, 1e-15);
  EXPECT_NEAR(wasserstein_grad(scalar_field(0.5), hist).at(0, 0, 0), 0.0, 1e-15);
}

TEST(WassersteinGrad, ZeroAtHistogramMean) {
  std::mt19937_64 rng(44);
  const auto hist = random_histogram(4, 4, 2, 5, rng);
  const PixelField g = wasserstein_grad(histogram_mean(hist), hist);
  for (double v : g.data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(WassersteinGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(45);
  for (int t = 0; t < 100; ++t) {
    const auto hist = random_histogram(3, 2, 2, 3 + t % 5, rng);
    PixelField u = oracle::random_field(3, 2, 2, rng, -0.2, 1.2);
    const PixelField g = wasserstein_grad(u, hist);
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double fd = oracle::central_diff(
          [&] { return wasserstein_energy(u, hist).total; }, u.data()[i], 1e-4);
      EXPECT_LT(oracle::rel_err(g.data()[i], fd), 1e-8);
    }
  }
}

GaussianPosterior random_gaussian(std::size_t h, std::size_t w, std::size_t k,
                                  std::mt19937_64& rng) {
  return {oracle::random_field(h, w, k, rng, 0.0, 1.0),
          oracle::random_field(h, w, k, rng, 1e-3, 0.5)};
}

TEST(GaussianFidelity, CoincidentIsZero) {
  std::mt19937_64 rng(46);
  const auto g = random_gaussian(3, 3, 2, rng);
  const auto r = gaussian_energy_grad(g, g);
  EXPECT_EQ(r.energy, 0.0);
  for (double v : r.grad_mean.data()) EXPECT_EQ(v, 0.0);
  for (double v : r.grad_stddev.data()) EXPECT_EQ(v, 0.0);
}

TEST(GaussianFidelity, ShiftedMean) {
  const GaussianPosterior state{scalar_field(0.6), scalar_field(0.2)};
  const GaussianPosterior anchor{scalar_field(0.5), scalar_field(0.2)};
  const auto r = gaussian_energy_grad(state, anchor);
  EXPECT_NEAR(r.energy, 0.005, 1e-15);
  EXPECT_NEAR(r.grad_mean.at(0, 0, 0), 0.1, 1e-15);
  EXPECT_EQ(r.grad_stddev.at(0, 0, 0), 0.0);
}

TEST(GaussianFidelity, ShapeMismatchRejected) {
  std::mt19937_64 rng(47);
  EXPECT_THROW(gaussian_energy_grad(random_gaussian(2, 2, 1, rng),
                                    random_gaussian(2, 2, 2, rng)),
               std::invalid_argument);
}

TEST(GaussianFidelity, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(48);
  for (int t = 0; t < 100; ++t) {
    auto state = random_gaussian(2, 2, 2, rng);
    const auto anchor = random_gaussian(2, 2, 2, rng);
    const auto r = gaussian_energy_grad(state, anchor);
    auto energy = [&] { return gaussian_energy_grad(state, anchor).energy; };
    for (std::size_t i = 0; i < state.mean.size(); ++i) {
      const double fdm = oracle::central_diff(energy, state.mean.data()[i], 1e-2);
      const double fds = oracle::central_diff(energy, state.stddev.data()[i], 1e-2);
      EXPECT_LT(oracle::rel_err(r.grad_mean.data()[i], fdm), 1e-8);
      EXPECT_LT(oracle::rel_err(r.grad_stddev.data()[i], fds), 1e-8);
    }
  }
}

}  // namespace
}  // namespace vslp
