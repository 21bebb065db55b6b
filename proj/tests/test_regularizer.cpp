#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "vslp/regularizer.hpp"

namespace vslp {
namespace {

using oracle::random_field;
using oracle::random_histogram;

RegularizerSpec small_spec(std::size_t classes = 1,
                           PosteriorKind kind = PosteriorKind::kHistogram) {
  RegularizerSpec spec;
  spec.classes = classes;
  spec.posterior = kind;
  spec.widths = {3, 4, 5, 6};
  spec.kernel = 3;
  return spec;
}

GaussianPosterior random_gaussian(std::size_t h, std::size_t w, std::size_t k,
                                  std::mt19937_64& rng) {
  return {random_field(h, w, k, rng, 0.0, 1.0),
          random_field(h, w, k, rng, 1e-3, 0.5)};
}

TEST(AssembleInput, ChannelCounts) {
  std::mt19937_64 rng(51);
  const PixelField img = random_field(8, 8, 3, rng, 0.0, 1.0);
  EXPECT_EQ(assemble_input(img, random_histogram(8, 8, 1, 3, rng),
                           random_field(8, 8, 1, rng))
                .total_channels(),
            7u);
  EXPECT_EQ(assemble_input(img, random_histogram(8, 8, 3, 3, rng),
                           random_field(8, 8, 3, rng))
                .total_channels(),
            15u);
  EXPECT_EQ(assemble_input(img, random_gaussian(8, 8, 3, rng),
                           random_field(8, 8, 3, rng))
                .total_channels(),
            12u);
}

TEST(AssembleInput, CountIsSumOfParts) {
  std::mt19937_64 rng(52);
  for (std::size_t c : {1, 3, 4}) {
    for (std::size_t k : {1, 2, 3}) {
      for (std::size_t bins : {2, 3, 7}) {
        const auto in = assemble_input(random_field(4, 4, c, rng),
                                       random_histogram(4, 4, k, bins, rng),
                                       random_field(4, 4, k, rng));
        EXPECT_EQ(in.total_channels(), c + bins * k + k);
        RegularizerSpec spec;
        spec.image_channels = c;
        spec.classes = k;
        spec.bins = bins;
        EXPECT_EQ(spec.input_channels(), in.total_channels());
      }
      const auto g = assemble_input(random_field(4, 4, c, rng),
                                    random_gaussian(4, 4, k, rng),
                                    random_field(4, 4, k, rng));
      EXPECT_EQ(g.total_channels(), c + 3 * k);
    }
  }
}

TEST(AssembleInput, ChannelOrderIsImagePosteriorPrediction) {
  std::mt19937_64 rng(53);
  const PixelField img = random_field(2, 2, 3, rng);
  const auto hist = random_histogram(2, 2, 1, 3, rng);
  const PixelField pred = random_field(2, 2, 1, rng);
  const auto in = assemble_input(img, hist, pred);
  EXPECT_EQ(in.image_channels, 3u);
  EXPECT_EQ(in.posterior_channels, 3u);
  EXPECT_EQ(in.prediction_channels, 1u);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      const auto px = in.assembled.pixel(r, c);
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(px[k], img.at(r, c, k));
      for (std::size_t l = 0; l < 3; ++l) {
        EXPECT_EQ(px[3 + l], hist.weight(r, c, 0, l));
      }
      EXPECT_EQ(px[6], pred.at(r, c, 0));
    }
  }
  const auto gauss = random_gaussian(2, 2, 1, rng);
  const auto gin = assemble_input(img, gauss, pred);
  EXPECT_EQ(gin.assembled.at(1, 0, 3), gauss.mean.at(1, 0, 0));
  EXPECT_EQ(gin.assembled.at(1, 0, 4), gauss.stddev.at(1, 0, 0));
  EXPECT_EQ(gin.assembled.at(1, 0, 5), pred.at(1, 0, 0));
}

TEST(AssembleInput, InconsistentShapesRejected) {
  std::mt19937_64 rng(54);
  const PixelField img = random_field(4, 4, 3, rng);
  EXPECT_THROW(assemble_input(img, random_histogram(4, 5, 1, 3, rng),
                              random_field(4, 4, 1, rng)),
               std::invalid_argument);
  EXPECT_THROW(assemble_input(img, random_histogram(4, 4, 1, 3, rng),
                              random_field(4, 4, 2, rng)),
               std::invalid_argument);
  EXPECT_THROW(assemble_input(img, random_gaussian(4, 4, 1, rng),
                              random_field(3, 4, 1, rng)),
               std::invalid_argument);
}

TEST(RegularizerNetwork, DefaultLayoutParameterCount) {
  const Regularizer reg{RegularizerSpec{}};
  EXPECT_EQ(reg.spec().input_channels(), 7u);
  EXPECT_EQ(reg.network().parameter_count(), 1369573u);
  EXPECT_EQ(reg.init_params(0).total_count(), 1369573u);
  EXPECT_EQ(reg.spatial_multiple(), 8u);
}

TEST(RegularizerNetwork, MulticlassInputIsFifteenChannels) {
  RegularizerSpec spec;
  spec.classes = 3;
  EXPECT_EQ(spec.input_channels(), 15u);
  EXPECT_EQ(spec.output_channels(), 3u);
  spec.posterior = PosteriorKind::kGaussian;
  EXPECT_EQ(spec.input_channels(), 12u);
  EXPECT_EQ(spec.output_channels(), 6u);
}

TEST(RegularizerSpec, RejectsBadLayouts) {
  RegularizerSpec spec = small_spec();
  spec.widths = {4, 4};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_spec();
  spec.kernel = 4;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_spec();
  spec.widths.clear();
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(RegGrad, ZeroFinalLayerGivesZeroField) {
  std::mt19937_64 rng(55);
  const RegularizerSpec spec = small_spec();
  const Regularizer reg(spec);
  const auto params = reg.init_params(56, true);
  const auto in = assemble_input(random_field(16, 16, 3, rng),
                                 random_histogram(16, 16, 1, 3, rng),
                                 random_field(16, 16, 1, rng));
  const PixelField g = reg_grad(params, spec, in);
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(RegGrad, DeterministicAndShaped) {
  std::mt19937_64 rng(57);
  for (int t = 0; t < 6; ++t) {
    RegularizerSpec spec = small_spec(1 + rng() % 3);
    spec.bins = 2 + rng() % 4;
    spec.widths.resize(1 + rng() % 4);
    spec.kernel = 1 + 2 * (rng() % 3);
    const Regularizer reg(spec);
    const auto params = reg.init_params(t);
    const auto in =
        assemble_input(random_field(16, 16, 3, rng),
                       random_histogram(16, 16, spec.classes, spec.bins, rng),
                       random_field(16, 16, spec.classes, rng));
    const PixelField a = reg_grad(params, spec, in);
    EXPECT_EQ(a.channels(), spec.classes);
    EXPECT_EQ(a.height(), 16u);
    EXPECT_EQ(a, reg_grad(params, spec, in));
  }
}

TEST(RegGrad, IndivisibleDimsRejected) {
  std::mt19937_64 rng(58);
  const RegularizerSpec spec = small_spec();
  const Regularizer reg(spec);
  const auto in = assemble_input(random_field(12, 16, 3, rng),
                                 random_histogram(12, 16, 1, 3, rng),
                                 random_field(12, 16, 1, rng));
  EXPECT_THROW(reg_grad(reg.init_params(0), spec, in), std::invalid_argument);
}

PixelField roll(const PixelField& f, std::size_t dr, std::size_t dc) {
  PixelField out(f.height(), f.width(), f.channels());
  for (std::size_t r = 0; r < f.height(); ++r) {
    for (std::size_t c = 0; c < f.width(); ++c) {
      const auto src = f.pixel(r, c);
      auto dst = out.pixel((r + dr) % f.height(), (c + dc) % f.width());
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return out;
}

TEST(RegGrad, TranslationByEightCommutesWithWrapPadding) {
  std::mt19937_64 rng(59);
  RegularizerSpec spec = small_spec();
  spec.padding = nn::Padding::kCircular;
  const Regularizer reg(spec);
  const auto params = reg.init_params(60);
  const auto in = assemble_input(random_field(24, 16, 3, rng),
                                 random_histogram(24, 16, 1, 3, rng),
                                 random_field(24, 16, 1, rng));
  RegularizerInput shifted = in;
  shifted.assembled = roll(in.assembled, 8, 8);
  const PixelField a = roll(reg_grad(params, spec, in), 8, 8);
  const PixelField b = reg_grad(params, spec, shifted);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_NEAR(a.data()[i], b.data()[i], 1e-12);
  }
}

TEST(RegGrad, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(61);
  for (auto kind : {PosteriorKind::kHistogram, PosteriorKind::kGaussian}) {
    RegularizerSpec spec = small_spec(1, kind);
    const Regularizer reg(spec);
    const auto params = reg.init_params(62);
    const PixelField x = random_field(8, 8, spec.input_channels(), rng);
    const PixelField dy = random_field(8, 8, spec.output_channels(), rng);
    const auto err = oracle::check_network(reg.network(), params, x, dy);
    EXPECT_LT(err.input, 1e-6);
    EXPECT_LT(err.params, 1e-6);
  }
}

TEST(RegGrad, PaddedEvaluateBackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(63);
  RegularizerSpec spec = small_spec();
  spec.widths = {3, 4};
  const Regularizer reg(spec);
  const auto params = reg.init_params(64);
  PixelField x = random_field(5, 7, spec.input_channels(), rng);
  const PixelField dy = random_field(5, 7, 1, rng);
  Regularizer::Record rec;
  const PixelField y = reg.evaluate(params, x, &rec);
  ASSERT_EQ(y.height(), 5u);
  ASSERT_EQ(y.width(), 7u);
  const nn::Gradients g = reg.backward(params, rec, dy);
  const auto num = oracle::numeric_gradient(
      [&] { return oracle::inner(reg.evaluate(params, x), dy); }, x.data(), 1e-6);
  EXPECT_LT(oracle::vector_rel_err(g.input.data(), num), 1e-6);
}

TEST(ReflectPad, AdjointIdentity) {
  std::mt19937_64 rng(65);
  const PixelField x = random_field(5, 6, 2, rng);
  const PixelField px = reflect_pad(x, 8);
  EXPECT_EQ(px.height(), 8u);
  EXPECT_EQ(px.width(), 8u);
  EXPECT_EQ(crop(px, 5, 6), x);
  const PixelField y = random_field(8, 8, 2, rng);
  EXPECT_NEAR(oracle::inner(px, y),
              oracle::inner(x, reflect_pad_adjoint(y, 5, 6)), 1e-12);
  EXPECT_EQ(reflect_pad(random_field(8, 8, 1, rng), 8).height(), 8u);
}

}  // namespace
}  // namespace vslp
