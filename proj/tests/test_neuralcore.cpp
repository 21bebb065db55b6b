#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "vslp/checkpoint.hpp"
#include "vslp/network.hpp"
#include "vslp/optimizer.hpp"

namespace vslp::nn {
namespace {

using oracle::random_field;

constexpr double kLayerTol = 1e-6;

Tensor random_tensor(std::vector<std::size_t> dims, std::mt19937_64& rng) {
  Tensor t(std::move(dims));
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (double& v : t.data) v = d(rng);
  return t;
}

TEST(Forward, IdentityLayerPassesThrough) {
  const Network net({LayerSpec::identity(3)});
  std::mt19937_64 rng(1);
  const PixelField x = random_field(4, 5, 3, rng);
  EXPECT_EQ(net.forward(net.init_params(0), x).data(), x.data());
}

TEST(Forward, OneByOneConvScales) {
  const Network net({LayerSpec::conv(1, 1, 1)});
  NetworkParams p = net.init_params(0);
  p.mutable_at(Network::weight_name(0)).data = {2.0};
  p.mutable_at(Network::bias_name(0)).data = {0.0};
  const PixelField y = net.forward(p, PixelField(4, 4, 1, 1.0));
  for (double v : y.data()) EXPECT_EQ(v, 2.0);
}

TEST(Forward, ThreeByThreeConvOnRampMatchesDirectSum) {
  PixelField ramp(5, 5, 1);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 5; ++c) ramp.at(r, c, 0) = 5.0 * r + c;
  }
  const std::vector<double> w = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  Tensor wt({3, 3, 1, 1});
  wt.data = w;
  Tensor bt({1});
  bt.data = {0.5};
  const PixelField y = conv2d(ramp, wt, &bt, 1, Padding::kZero);
  const PixelField ref = oracle::naive_conv(ramp, w, {0.5}, 3, 1, 1, false);
  EXPECT_EQ(y.data(), ref.data());
  // Centre pixel by hand: sum_ij w_ij * ramp(1+i, 1+j) + 0.5.
  double centre = 0.5;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) centre += w[i * 3 + j] * (5.0 * (1 + i) + 1 + j);
  }
  EXPECT_EQ(y.at(2, 2, 0), centre);
}

TEST(Conv, MatchesNaiveOracle) {
  std::mt19937_64 rng(2);
  for (std::size_t k : {1, 3, 5, 7}) {
    for (std::size_t stride : {1, 2}) {
      for (bool circular : {false, true}) {
        const PixelField x = random_field(8, 6, 3, rng);
        const Tensor w = random_tensor({k, k, 3, 4}, rng);
        const Tensor b = random_tensor({4}, rng);
        const PixelField y = conv2d(x, w, &b, stride,
                                    circular ? Padding::kCircular : Padding::kZero);
        const PixelField ref =
            oracle::naive_conv(x, w.data, b.data, k, 4, stride, circular);
        ASSERT_EQ(y.height(), ref.height());
        for (std::size_t i = 0; i < y.size(); ++i) {
          ASSERT_NEAR(y.data()[i], ref.data()[i], 1e-12)
              << "k=" << k << " stride=" << stride << " circular=" << circular;
        }
      }
    }
  }
}

TEST(Conv, TransposedIsExactAdjoint) {
  std::mt19937_64 rng(3);
  for (std::size_t k : {2, 3, 7}) {
    for (std::size_t stride : {1, 2}) {
      if (k % 2 == 0 && stride == 1) continue;
      for (Padding pad : {Padding::kZero, Padding::kCircular}) {
        const PixelField x = random_field(8, 8, 3, rng);
        const Tensor w = random_tensor({k, k, 3, 5}, rng);
        PixelField y;
        if (k % 2 == 1) {
          y = random_field(8 / stride, 8 / stride, 5, rng);
          const PixelField cx = conv2d(x, w, nullptr, stride, pad);
          const PixelField ty = conv2d_transposed(y, w, nullptr, stride, pad);
          EXPECT_NEAR(oracle::inner(cx, y), oracle::inner(x, ty), 1e-10);
        } else {
          // Even up-kernels only exist as stride-2 transposed convolutions:
          // check <convT(y), x> = <y, conv(x)> with the same weight.
          y = random_field(4, 4, 5, rng);
          const PixelField ty = conv2d_transposed(y, w, nullptr, 2, pad);
          ASSERT_EQ(ty.height(), 8u);
          const PixelField cx = conv2d(x, w, nullptr, 2, pad);
          EXPECT_NEAR(oracle::inner(ty, x), oracle::inner(y, cx), 1e-10);
        }
      }
    }
  }
}

TEST(Backward, ZeroOutputGradGivesZeroGradients) {
  const Network net({LayerSpec::conv(3, 2, 4), LayerSpec::leaky_relu(4),
                     LayerSpec::conv(3, 4, 1)});
  const NetworkParams p = net.init_params(4);
  std::mt19937_64 rng(4);
  const PixelField x = random_field(6, 6, 2, rng);
  const auto [y, tape] = net.forward_with_tape(p, x);
  const Gradients g = net.backward(p, tape, PixelField(6, 6, 1));
  for (double v : g.input.data()) EXPECT_EQ(v, 0.0);
  for (const auto& [name, t] : g.params.tensors()) {
    for (double v : t.data) EXPECT_EQ(v, 0.0) << name;
  }
}

TEST(Backward, OneByOneWeightGradIsInputDotOutputGrad) {
  const Network net({LayerSpec::conv(1, 1, 1)});
  const NetworkParams p = net.init_params(5);
  std::mt19937_64 rng(5);
  const PixelField x = random_field(4, 4, 1, rng);
  const PixelField dy = random_field(4, 4, 1, rng);
  const auto [y, tape] = net.forward_with_tape(p, x);
  const Gradients g = net.backward(p, tape, dy);
  double expected = 0.0, bias = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    expected += x.data()[i] * dy.data()[i];
    bias += dy.data()[i];
  }
  EXPECT_NEAR(g.params.at(Network::weight_name(0)).data[0], expected, 1e-14);
  EXPECT_NEAR(g.params.at(Network::bias_name(0)).data[0], bias, 1e-14);
}

struct LayerCase {
  const char* name;
  std::vector<LayerSpec> layers;
  std::size_t in_channels;
  Padding padding = Padding::kZero;
};

std::vector<LayerCase> layer_cases() {
  return {
      {"conv3", {LayerSpec::conv(3, 2, 3)}, 2},
      {"conv7", {LayerSpec::conv(7, 2, 2)}, 2},
      {"conv3_circular", {LayerSpec::conv(3, 2, 3)}, 2, Padding::kCircular},
      {"downsample", {LayerSpec::downsample(3, 2, 3)}, 2},
      {"transposed", {LayerSpec::transposed_conv(2, 2, 3)}, 2},
      {"leaky_relu", {LayerSpec::leaky_relu(3)}, 3},
      {"identity", {LayerSpec::identity(3)}, 3},
      {"skip_concat",
       {LayerSpec::conv(3, 2, 3), LayerSpec::skip_concat(0, 3, 2)}, 2},
      {"global_mean", {LayerSpec::global_mean(3)}, 3},
      {"softmax", {LayerSpec::global_mean(3), LayerSpec::softmax(3)}, 3},
  };
}

TEST(Backward, EveryLayerKindMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (const LayerCase& lc : layer_cases()) {
    const Network net(lc.layers, lc.padding);
    const NetworkParams p = net.init_params(7);
    const PixelField x = random_field(8, 8, lc.in_channels, rng);
    const PixelField y = net.forward(p, x);
    const PixelField dy = random_field(y.height(), y.width(), y.channels(), rng);
    const auto err = oracle::check_network(net, p, x, dy);
    EXPECT_LT(err.input, kLayerTol) << lc.name;
    EXPECT_LT(err.params, kLayerTol) << lc.name;
  }
}

TEST(Backward, RandomTwoLayerNetMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 5; ++t) {
    const Network net({LayerSpec::conv(3, 3, 4), LayerSpec::leaky_relu(4),
                       LayerSpec::conv(3, 4, 2)});
    const NetworkParams p = net.init_params(100 + t);
    const PixelField x = random_field(6, 7, 3, rng);
    const PixelField dy = random_field(6, 7, 2, rng);
    EXPECT_LT(oracle::check_network(net, p, x, dy).worst(), kLayerTol);
  }
}

TEST(Backward, StaleOrForeignTapeIsRejected) {
  const Network net({LayerSpec::conv(3, 1, 1)});
  const Network other({LayerSpec::conv(3, 1, 1)});
  NetworkParams p = net.init_params(9);
  const PixelField x(4, 4, 1, 1.0);
  const auto [y, tape] = net.forward_with_tape(p, x);
  EXPECT_THROW(other.backward(p, tape, y), std::logic_error);
  p.mutable_at(Network::weight_name(0)).data[0] += 1.0;
  EXPECT_THROW(net.backward(p, tape, y), std::logic_error);
}

TEST(Forward, DeterministicAndValidated) {
  const Network net({LayerSpec::conv(3, 2, 4), LayerSpec::leaky_relu(4),
                     LayerSpec::downsample(3, 4, 4),
                     LayerSpec::transposed_conv(2, 4, 2)});
  const NetworkParams p = net.init_params(10);
  std::mt19937_64 rng(10);
  const PixelField x = random_field(8, 8, 2, rng);
  EXPECT_EQ(net.forward(p, x), net.forward(p, x));
  EXPECT_THROW(net.forward(p, random_field(8, 8, 3, rng)),
               std::invalid_argument);
  EXPECT_THROW(net.forward(p, random_field(7, 8, 2, rng)),
               std::invalid_argument);
  EXPECT_THROW(Network({LayerSpec::conv(4, 1, 1)}), std::invalid_argument);
  EXPECT_THROW(Network({LayerSpec::conv(3, 1, 2), LayerSpec::conv(3, 3, 1)}),
               std::invalid_argument);
}

TEST(AdamW, ZeroGradientIsFixedPoint) {
  const Network net({LayerSpec::conv(3, 2, 2)});
  const NetworkParams p = net.init_params(11);
  AdamW opt({0.1, 0.0});
  EXPECT_EQ(opt.step(p, p.zeros_like()), p);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  NetworkParams p;
  Tensor w({1});
  w.data = {1.0};
  p.add("w", w);
  NetworkParams g = p.zeros_like();
  g.mutable_at("w").data = {1.0};
  AdamW opt({0.1, 0.0});
  const NetworkParams q = opt.step(p, g);
  // m_hat = 1, v_hat = 1: w - lr * 1 / (1 + eps)
  EXPECT_NEAR(q.at("w").data[0], 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(q.at("w").data[0], 0.9, 1e-8);
}

TEST(AdamW, DecoupledWeightDecayShrinks) {
  NetworkParams p;
  Tensor w({1});
  w.data = {2.0};
  p.add("w", w);
  AdamW opt({0.1, 0.5});
  const NetworkParams q = opt.step(p, p.zeros_like());
  EXPECT_NEAR(q.at("w").data[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
}

TEST(AdamW, NonFiniteGradientIsRejectedWithoutStateChange) {
  NetworkParams p;
  Tensor w({2});
  w.data = {1.0, 2.0};
  p.add("w", w);
  NetworkParams g = p.zeros_like();
  g.mutable_at("w").data = {1.0, NAN};
  AdamW opt({0.1, 0.0});
  EXPECT_THROW(opt.step(p, g), NonFiniteError);
  EXPECT_EQ(opt.step_count(), 0u);
  g.mutable_at("w").data = {1.0, 1.0};
  const NetworkParams q = opt.step(p, g);
  EXPECT_EQ(opt.step_count(), 1u);
  EXPECT_NEAR(q.at("w").data[0], 0.9, 1e-8);
}

TEST(Checkpoint, RoundTripIsExact) {
  const Network net({LayerSpec::conv(3, 2, 4), LayerSpec::leaky_relu(4),
                     LayerSpec::conv(1, 4, 1)});
  const NetworkParams p = net.init_params(12);
  std::stringstream ss;
  write_params(ss, p);
  EXPECT_EQ(ss.str().substr(0, 5), "VSLPP");
  const NetworkParams q = read_params(ss);
  EXPECT_EQ(q, p);
  std::stringstream bad("VSLPX");
  EXPECT_THROW(read_params(bad), std::runtime_error);
}

}  // namespace
}  // namespace vslp::nn
