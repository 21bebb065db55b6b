#include "benchmark_run.hpp"

#include <cstdio>

#include "vslp/metrics.hpp"
#include "vslp/parallel.hpp"
#include "vslp/random.hpp"

namespace vslp::bench {
namespace {

SynthConfig synth_config(const BenchmarkConfig& cfg) {
  SynthConfig s;
  s.size = cfg.size;
  s.classes = cfg.classes;
  s.classifier_noise = cfg.classifier_noise;
  s.seed = cfg.seed;
  return s;
}

PatchGrid grid_for(const BenchmarkConfig& cfg) {
  return build_patch_grid(cfg.size, cfg.size, cfg.patch, cfg.patch, cfg.stride);
}

Split& split_of(Dataset& d, const BenchmarkConfig& cfg, std::size_t i) {
  return i < cfg.train ? d.train : d.test;
}

}  // namespace

Dataset simulated_dataset(const BenchmarkConfig& cfg) {
  const auto synth = generate_dataset(synth_config(cfg), cfg.train + cfg.test);
  const PatchGrid grid = grid_for(cfg);
  std::vector<Stage2Item> items(synth.size());
  parallel_for(synth.size(), [&](std::size_t i) {
    const auto stack = simulate_tta(synth[i].mask, cfg.classes, grid,
                                    cfg.rotations, cfg.classifier_noise,
                                    synth[i].seed);
    items[i] = make_stage2_item(synth[i].image, stack, cfg.bins, synth[i].label);
  });
  Dataset d;
  for (std::size_t i = 0; i < synth.size(); ++i) {
    Split& s = split_of(d, cfg, i);
    s.items.push_back(std::move(items[i]));
    s.masks.push_back(synth[i].mask);
  }
  return d;
}

Dataset learned_stage1_dataset(const BenchmarkConfig& cfg,
                               Perturbation perturbation, double delta) {
  SynthConfig sc = synth_config(cfg);
  sc.perturbation = perturbation;
  sc.perturbation_delta = delta;
  const auto synth = generate_dataset(sc, cfg.train + cfg.test);
  const PatchGrid grid = grid_for(cfg);

  const nn::Network classifier = make_proportion_classifier(3, cfg.classes);
  std::vector<Stage1Item> train;
  for (std::size_t i = 0; i < cfg.train; ++i) {
    Stage1Item it;
    it.image = synth[i].image;
    it.grid = grid;
    it.weights = tissue_weights(it.image, grid);
    it.label = synth[i].label;
    train.push_back(std::move(it));
  }
  Stage1TrainConfig s1;
  s1.seed = cfg.seed;
  s1.epochs = cfg.stage1_epochs;
  const auto fitted = train_stage1(classifier, train, s1);

  std::vector<Stage2Item> items(synth.size());
  parallel_for(synth.size(), [&](std::size_t i) {
    const auto stack = tta_predict(classifier, fitted.params, synth[i].image,
                                   grid, cfg.rotations);
    items[i] = make_stage2_item(synth[i].image, stack, cfg.bins, synth[i].label);
  });
  Dataset d;
  for (std::size_t i = 0; i < synth.size(); ++i) {
    Split& s = split_of(d, cfg, i);
    s.items.push_back(std::move(items[i]));
    s.masks.push_back(synth[i].mask);
  }
  return d;
}

double vote_dice(const Split& split) {
  double total = 0.0;
  for (std::size_t i = 0; i < split.items.size(); ++i) {
    total += dice_miou(argmax_labels(split.items[i].vote), split.masks[i], 2).dice;
  }
  return total / static_cast<double>(split.items.size());
}

VariantOutcome train_and_evaluate(const BenchmarkConfig& cfg,
                                  const Dataset& data, SolverVariant variant,
                                  bool verbose) {
  RegularizerSpec spec;
  spec.classes = refined_channels(cfg.classes);
  spec.bins = cfg.bins;
  spec.posterior = variant == SolverVariant::kGmm ? PosteriorKind::kGaussian
                                                  : PosteriorKind::kHistogram;
  spec.widths = cfg.widths;
  spec.kernel = cfg.kernel;

  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.unroll_steps = cfg.train_steps;
  tc.network_lr = cfg.network_lr;
  tc.seed = cfg.seed;
  const auto trained = train_stage2(
      data.train.items, tc, variant, spec, [&](std::size_t epoch, double loss) {
        if (verbose) {
          std::fprintf(stderr, "  %s epoch %zu loss %.6f\n",
                       variant_name(variant).c_str(), epoch, loss);
        }
      });

  VariantOutcome out;
  out.epoch_loss = trained.epoch_loss;
  out.tau = trained.model.tau;
  out.lambda = trained.model.lambda;

  const Regularizer reg(spec);
  const LearnedPrior prior{&reg, &trained.model.params};
  const Split& test = data.test;
  std::vector<double> dice(test.items.size());
  parallel_for(test.items.size(), [&](std::size_t i) {
    const Stage2Item& item = test.items[i];
    SolverConfig sc;
    sc.variant = variant;
    sc.steps = cfg.infer_steps;
    sc.tau = trained.model.tau;
    sc.lambda = trained.model.lambda;
    sc.sigma0 = trained.model.sigma0;
    sc.seed = mix64(cfg.seed ^ mix64(i + 1));
    const auto trace = variant == SolverVariant::kGmm
                           ? run_gmm(sc, item.anchor, item.image, prior)
                           : run_solver(sc, initial_iterate(item.vote, item.hist),
                                        item.hist, item.image, prior);
    dice[i] = dice_miou(threshold_mask(trace.final_u), test.masks[i], 2).dice;
  });
  double total = 0.0;
  for (double d : dice) total += d;
  out.refined_dice = total / static_cast<double>(dice.size());
  return out;
}

}  // namespace vslp::bench
