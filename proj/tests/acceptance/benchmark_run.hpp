// Seeded synthetic benchmark shared by the end-to-end and robustness checks.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vslp/solver.hpp"
#include "vslp/synth.hpp"
#include "vslp/training.hpp"

namespace vslp::bench {

struct BenchmarkConfig {
  std::size_t train = 100;
  std::size_t test = 20;
  std::size_t size = 64;
  std::size_t classes = 2;
  double classifier_noise = 0.25;
  std::size_t rotations = 24;
  std::size_t bins = 3;
  std::size_t patch = 16;
  std::size_t stride = 8;
  std::size_t train_steps = 20;
  std::size_t infer_steps = 50;
  std::size_t epochs = 30;
  std::size_t stage1_epochs = 60;
  double network_lr = 1e-3;
  std::vector<std::size_t> widths = {8, 16, 32, 64};
  std::size_t kernel = 3;
  std::uint64_t seed = 20240611;
};

/// Everything the second stage needs for one split.
struct Split {
  std::vector<Stage2Item> items;
  std::vector<LabelMask> masks;
};

struct Dataset {
  Split train;
  Split test;
};

/// Stacks come from simulate_tta on the ground truth.
Dataset simulated_dataset(const BenchmarkConfig& cfg);

/// Stacks come from a proportion classifier trained on the (optionally
/// perturbed) training labels, so both stages see the same supervision.
Dataset learned_stage1_dataset(const BenchmarkConfig& cfg,
                               Perturbation perturbation, double delta);

struct VariantOutcome {
  std::vector<double> epoch_loss;
  double tau = 0.0;
  double lambda = 0.0;
  double refined_dice = 0.0;
};

VariantOutcome train_and_evaluate(const BenchmarkConfig& cfg,
                                  const Dataset& data, SolverVariant variant,
                                  bool verbose);

/// Mean test Dice of the vote mask.
double vote_dice(const Split& split);

}  // namespace vslp::bench
