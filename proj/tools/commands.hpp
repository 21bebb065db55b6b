#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

namespace vslp::tools {

struct SynthOptions {
  std::size_t n = 100;
  std::size_t size = 64;
  std::size_t classes = 2;
  std::size_t min_blobs = 2;
  std::size_t max_blobs = 5;
  double min_radius = 5.0;
  double max_radius = 12.0;
  double texture_std = 0.08;
  double noise = 0.25;
  std::string perturb = "none";
  double delta = 0.1;
  std::size_t rotations = 24;
  std::size_t patch = 16;
  std::size_t stride = 8;
  std::uint64_t seed = 0;
  std::string out;
};

struct Stage1Options {
  std::string manifest;
  std::size_t epochs = 20;
  double lr = 3e-3;
  std::size_t batch = 1;
  std::size_t patch = 16;
  std::size_t stride = 8;
  std::uint64_t seed = 0;
  std::string out;
};

struct TtaOptions {
  std::string manifest;
  std::string model;
  std::size_t rotations = 24;
  std::string out;
};

struct PosteriorOptions {
  std::string manifest;
  std::size_t bins = 3;
  std::string out;
};

struct Stage2Options {
  std::string manifest;
  std::string variant = "diff";
  std::size_t epochs = 30;
  std::size_t steps = 20;
  std::size_t batch = 1;
  double lr = 3e-5;
  double scalar_lr = 0.05;
  std::string scalar_update = "adam";
  double weight_decay = 0.0;
  double tau = 1.0;
  double lambda = 1.0;
  double sigma0 = 0.3;
  std::string widths = "12,24,48,96";
  std::size_t kernel = 7;
  bool freeze_tau = false;
  bool freeze_lambda = false;
  std::uint64_t seed = 0;
  std::string out;
};

struct RefineOptions {
  std::string manifest;
  std::string model;
  std::optional<std::string> variant;
  std::size_t steps = 50;
  std::optional<double> tau;
  std::optional<double> lambda;
  std::optional<double> sigma0;
  std::uint64_t seed = 0;
  std::string snapshots;
  std::string out;
};

struct EvalOptions {
  std::string manifest;
  std::string key = "pred_mask";
  std::string gt_key = "mask";
  std::string pred_dir;
  std::string gt_dir;
  std::size_t classes = 0;
  std::string out;
};

struct RenderOptions {
  std::string image;
  std::string mask;
  std::size_t classes = 2;
  std::string manifest;
  std::string item;
  std::string out;
};

nlohmann::json run_synth(const SynthOptions& o);
nlohmann::json run_stage1_train(const Stage1Options& o);
nlohmann::json run_tta(const TtaOptions& o);
nlohmann::json run_posterior(const PosteriorOptions& o);
nlohmann::json run_train_stage2(const Stage2Options& o);
nlohmann::json run_refine(const RefineOptions& o);
nlohmann::json run_eval(const EvalOptions& o);
nlohmann::json run_render(const RenderOptions& o);

}  // namespace vslp::tools
