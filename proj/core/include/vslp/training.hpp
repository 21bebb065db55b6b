#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vslp/field.hpp"
#include "vslp/network.hpp"
#include "vslp/posterior.hpp"
#include "vslp/regularizer.hpp"
#include "vslp/solver.hpp"
#include "vslp/stage1.hpp"

namespace vslp {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ||p - y||^2 where p is the mean of u per channel; a single channel is the
/// foreground share of a binary task, p = (1 - mean(u), mean(u)).
double proportion_loss(const PixelField& u, const ProportionVector& y);
/// d proportion_loss / du.
PixelField proportion_loss_grad(const PixelField& u, const ProportionVector& y);

/// One training example for the second stage.
struct Stage2Item {
  PixelField image;
  HistogramPosterior hist;
  GaussianPosterior anchor;  // fit_gaussian(hist)
  PixelField vote;           // one-hot first-stage mask over N_y
  ProportionVector label;
};

Stage2Item make_stage2_item(PixelField image, const PredictionStack& stack,
                            std::size_t bins, ProportionVector label);

struct UnrollOptions {
  SolverVariant variant = SolverVariant::kDiffusion;
  std::size_t steps = 20;
  double tau = 1.0;
  double lambda = 1.0;
  double sigma0 = 0.3;
  std::uint64_t noise_seed = 0;
};

struct UnrolledResult {
  double loss = 0.0;
  PixelField final_u;
  nn::NetworkParams grad_params;
  double grad_tau = 0.0;
  double grad_lambda = 0.0;
};

/// Runs `steps` solver iterations from the item's first-stage estimate,
/// evaluates the proportion loss on the final iterate and, when
/// `with_gradient`, backpropagates it through every step. Noise is drawn once
/// per call from `noise_seed` and held fixed in the backward pass.
UnrolledResult unrolled_loss(const Regularizer& regularizer,
                             const nn::NetworkParams& params,
                             const UnrollOptions& options,
                             const Stage2Item& item, bool with_gradient);

/// How tau and lambda are stepped (both act on their logarithms).
enum class ScalarUpdate {
  kPlain,  // x <- x * exp(-lr * dL/dlog x)
  kAdam,   // bias-corrected moments of dL/dlog x, no weight decay
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 1;
  std::size_t unroll_steps = 20;
  double network_lr = 3e-5;
  double weight_decay = 0.0;
  double scalar_lr = 0.05;
  ScalarUpdate scalar_update = ScalarUpdate::kAdam;
  double initial_tau = 1.0;
  double initial_lambda = 1.0;
  double sigma0 = 0.3;
  bool freeze_tau = false;
  bool freeze_lambda = false;
  bool zero_final_layer = true;
  bool shuffle = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Stage2Model {
  RegularizerSpec spec;
  SolverVariant variant = SolverVariant::kDiffusion;
  nn::NetworkParams params;
  double tau = 1.0;
  double lambda = 1.0;
  double sigma0 = 0.3;
};

struct Stage2Result {
  Stage2Model model;
  std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Unrolled end-to-end training of (theta, tau, lambda). theta uses AdamW;
/// tau and lambda are stepped in log space per cfg.scalar_update.
Stage2Result train_stage2(std::span<const Stage2Item> items,
                          const TrainConfig& cfg, SolverVariant variant,
                          const RegularizerSpec& spec,
                          const EpochCallback& on_epoch = {});

struct Stage1TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 1;
  double learning_rate = 3e-3;
  double weight_decay = 0.0;
  bool shuffle = true;
  std::uint64_t seed = 0;
};

struct Stage1Result {
  nn::NetworkParams params;
  std::vector<double> epoch_loss;
};

/// Fits the proportion classifier by minimising the patch-averaged loss.
Stage1Result train_stage1(const nn::Network& classifier,
                          std::span<const Stage1Item> items,
                          const Stage1TrainConfig& cfg,
                          const EpochCallback& on_epoch = {});

}  // namespace vslp
