// vslp command-line entry point.
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"
#include "dataset_io.hpp"
#include "run_config.hpp"

namespace {

using nlohmann::json;
using namespace vslp::tools;

struct Command {
  CLI::App* app = nullptr;
  std::string* out = nullptr;
  std::vector<std::string> required;
  // Input paths that must exist when given.
  std::vector<std::string> inputs;
  std::function<void()> validate;
  std::function<json()> run;
};

void check_patch(std::size_t patch, std::size_t stride) {
  if (patch == 0 || stride == 0 || stride > patch) {
    throw UsageError("--stride must be in [1, --patch]");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage segmentation from label proportions"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::map<std::string, Command> commands;
  std::string config_path;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config; flags win");
    Command& c = commands[name];
    c.app = sub;
    return sub;
  };

  SynthOptions synth;
  {
    CLI::App* s = add("synth", "generate a synthetic dataset");
    s->add_option("--n", synth.n, "item count");
    s->add_option("--size", synth.size, "image side (multiple of 8)");
    s->add_option("--classes", synth.classes, "class count N_y");
    s->add_option("--min-blobs", synth.min_blobs);
    s->add_option("--max-blobs", synth.max_blobs);
    s->add_option("--min-radius", synth.min_radius);
    s->add_option("--max-radius", synth.max_radius);
    s->add_option("--texture-std", synth.texture_std);
    s->add_option("--noise", synth.noise, "simulated classifier noise std");
    s->add_option("--perturb", synth.perturb, "none | additive | coarse");
    s->add_option("--delta", synth.delta, "additive perturbation half-width");
    s->add_option("--rotations", synth.rotations,
                  "simulated TTA rotations (0 skips stacks)");
    s->add_option("--patch", synth.patch);
    s->add_option("--stride", synth.stride);
    s->add_option("--seed", synth.seed);
    s->add_option("--out", synth.out, "output directory");
    commands["synth"].out = &synth.out;
    commands["synth"].validate = [&] { check_patch(synth.patch, synth.stride); };
    commands["synth"].run = [&] { return run_synth(synth); };
  }

  Stage1Options stage1;
  {
    CLI::App* s = add("stage1-train", "train the patch proportion classifier");
    s->add_option("--manifest", stage1.manifest);
    s->add_option("--epochs", stage1.epochs);
    s->add_option("--lr", stage1.lr);
    s->add_option("--batch", stage1.batch);
    s->add_option("--patch", stage1.patch);
    s->add_option("--stride", stage1.stride);
    s->add_option("--seed", stage1.seed);
    s->add_option("--out", stage1.out);
    auto& c = commands["stage1-train"];
    c.out = &stage1.out;
    c.required = {"manifest"};
    c.inputs = {"manifest"};
    c.validate = [&] { check_patch(stage1.patch, stage1.stride); };
    c.run = [&] { return run_stage1_train(stage1); };
  }

  TtaOptions tta;
  {
    CLI::App* s = add("tta", "rotation test-time augmentation");
    s->add_option("--manifest", tta.manifest);
    s->add_option("--model", tta.model, "stage1-train output directory");
    s->add_option("--rotations", tta.rotations);
    s->add_option("--out", tta.out);
    auto& c = commands["tta"];
    c.out = &tta.out;
    c.required = {"manifest", "model"};
    c.inputs = {"manifest", "model"};
    c.run = [&] { return run_tta(tta); };
  }

  PosteriorOptions post;
  {
    CLI::App* s = add("posterior", "histogram and Gaussian posteriors");
    s->add_option("--manifest", post.manifest);
    s->add_option("--bins", post.bins);
    s->add_option("--out", post.out);
    auto& c = commands["posterior"];
    c.out = &post.out;
    c.required = {"manifest"};
    c.inputs = {"manifest"};
    c.run = [&] { return run_posterior(post); };
  }

  Stage2Options stage2;
  {
    CLI::App* s = add("train-stage2", "unrolled training of the regulariser");
    s->add_option("--manifest", stage2.manifest);
    s->add_option("--variant", stage2.variant, "ula | diff | gmm");
    s->add_option("--epochs", stage2.epochs);
    s->add_option("--steps", stage2.steps, "unrolled solver steps");
    s->add_option("--batch", stage2.batch);
    s->add_option("--lr", stage2.lr, "network learning rate");
    s->add_option("--scalar-lr", stage2.scalar_lr, "tau/lambda learning rate");
    s->add_option("--scalar-update", stage2.scalar_update,
                  "adam | plain (log-space tau/lambda steps)");
    s->add_option("--weight-decay", stage2.weight_decay);
    s->add_option("--tau", stage2.tau, "initial step size");
    s->add_option("--lambda", stage2.lambda, "initial regulariser weight");
    s->add_option("--sigma0", stage2.sigma0);
    s->add_option("--widths", stage2.widths, "comma-separated feature widths");
    s->add_option("--kernel", stage2.kernel);
    s->add_option("--freeze-tau", stage2.freeze_tau);
    s->add_option("--freeze-lambda", stage2.freeze_lambda);
    s->add_option("--seed", stage2.seed);
    s->add_option("--out", stage2.out);
    auto& c = commands["train-stage2"];
    c.out = &stage2.out;
    c.required = {"manifest"};
    c.inputs = {"manifest"};
    c.run = [&] { return run_train_stage2(stage2); };
  }

  RefineOptions refine;
  {
    CLI::App* s = add("refine", "run the second-stage solver");
    s->add_option("--manifest", refine.manifest);
    s->add_option("--model", refine.model, "train-stage2 output directory");
    s->add_option("--variant", refine.variant, "ula | diff | gmm");
    s->add_option("--steps", refine.steps);
    s->add_option("--tau", refine.tau, "override the model's step size");
    s->add_option("--lambda", refine.lambda, "override the model's weight");
    s->add_option("--sigma0", refine.sigma0);
    s->add_option("--seed", refine.seed);
    s->add_option("--snapshots", refine.snapshots,
                  "comma-separated steps whose iterates are saved");
    s->add_option("--out", refine.out);
    auto& c = commands["refine"];
    c.out = &refine.out;
    c.required = {"manifest"};
    c.inputs = {"manifest", "model"};
    c.run = [&] { return run_refine(refine); };
  }

  EvalOptions eval;
  {
    CLI::App* s = add("eval", "segmentation and proportion metrics");
    s->add_option("--manifest", eval.manifest);
    s->add_option("--key", eval.key, "manifest key of the prediction");
    s->add_option("--gt-key", eval.gt_key);
    s->add_option("--pred-dir", eval.pred_dir);
    s->add_option("--gt-dir", eval.gt_dir);
    s->add_option("--classes", eval.classes, "0 infers from the data");
    s->add_option("--out", eval.out);
    auto& c = commands["eval"];
    c.out = &eval.out;
    c.inputs = {"manifest", "pred-dir", "gt-dir"};
    c.run = [&] { return run_eval(eval); };
  }

  RenderOptions render;
  {
    CLI::App* s = add("render", "PPM overlays and trace panels");
    s->add_option("--image", render.image);
    s->add_option("--mask", render.mask);
    s->add_option("--classes", render.classes);
    s->add_option("--manifest", render.manifest, "refine or synth manifest");
    s->add_option("--item", render.item);
    s->add_option("--out", render.out);
    auto& c = commands["render"];
    c.out = &render.out;
    c.inputs = {"image", "mask", "manifest"};
    c.run = [&] { return run_render(render); };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (auto& [name, cmd] : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      if (!config_path.empty()) {
        require_existing(config_path, "config");
        apply_config(*cmd.app, read_json(config_path));
      }
      for (const auto& r : cmd.required) require_option(*cmd.app, r);
      for (const auto& in : cmd.inputs) {
        const CLI::Option* opt = cmd.app->get_option("--" + in);
        if (opt->count() > 0 && !opt->results().back().empty()) {
          require_existing(opt->results().back(), "--" + in);
        }
      }
      if (cmd.out->empty()) throw UsageError(name + ": --out is required");
      if (cmd.validate) cmd.validate();
    } catch (const UsageError& e) {
      std::cerr << "vslp " << name << ": " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "vslp " << name << ": " << e.what() << '\n';
      return 2;
    }
    try {
      std::filesystem::create_directories(*cmd.out);
      write_json(std::filesystem::path(*cmd.out) / "config.json",
                 effective_config(*cmd.app));
      const json summary = cmd.run();
      std::cout << summary.dump() << std::endl;
      return 0;
    } catch (const UsageError& e) {
      std::cerr << "vslp " << name << ": " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "vslp " << name << ": " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}
