#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dataset_io.hpp"
#include "run_config.hpp"
#include "vslp/checkpoint.hpp"
#include "vslp/field_io.hpp"
#include "vslp/metrics.hpp"
#include "vslp/parallel.hpp"
#include "vslp/posterior.hpp"
#include "vslp/random.hpp"
#include "vslp/render.hpp"
#include "vslp/solver.hpp"
#include "vslp/stage1.hpp"
#include "vslp/synth.hpp"
#include "vslp/training.hpp"

namespace vslp::tools {

namespace {

std::vector<std::size_t> parse_list(const std::string& text,
                                    const std::string& what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("bad " + what + " list '" + text + "'");
    }
  }
  return out;
}

void write_loss_csv(const fs::path& file, const std::vector<double>& losses) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "epoch,loss\n" << std::setprecision(17);
  for (std::size_t e = 0; e < losses.size(); ++e) {
    out << e + 1 << ',' << losses[e] << '\n';
  }
}

ProportionVector label_of(const json& entry) {
  return ProportionVector(to_vector(entry.at("label")));
}

json spec_to_json(const RegularizerSpec& s) {
  return {{"image_channels", s.image_channels},
          {"posterior", s.posterior == PosteriorKind::kGaussian ? "gaussian"
                                                                : "histogram"},
          {"bins", s.bins},
          {"classes", s.classes},
          {"widths", s.widths},
          {"kernel", s.kernel},
          {"convs_per_scale", s.convs_per_scale},
          {"up_kernel", s.up_kernel},
          {"skip_connections", s.skip_connections}};
}

RegularizerSpec spec_from_json(const json& j) {
  RegularizerSpec s;
  s.image_channels = j.at("image_channels").get<std::size_t>();
  s.posterior = j.at("posterior").get<std::string>() == "gaussian"
                    ? PosteriorKind::kGaussian
                    : PosteriorKind::kHistogram;
  s.bins = j.at("bins").get<std::size_t>();
  s.classes = j.at("classes").get<std::size_t>();
  s.widths = j.at("widths").get<std::vector<std::size_t>>();
  s.kernel = j.at("kernel").get<std::size_t>();
  s.convs_per_scale = j.at("convs_per_scale").get<std::size_t>();
  s.up_kernel = j.at("up_kernel").get<std::size_t>();
  s.skip_connections = j.at("skip_connections").get<bool>();
  s.validate();
  return s;
}

SolverVariant variant_arg(const std::string& name) {
  try {
    return parse_variant(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

}  // namespace

json run_synth(const SynthOptions& o) {
  SynthConfig cfg;
  cfg.size = o.size;
  cfg.classes = o.classes;
  cfg.min_blobs = o.min_blobs;
  cfg.max_blobs = o.max_blobs;
  cfg.min_radius = o.min_radius;
  cfg.max_radius = o.max_radius;
  cfg.texture_std = o.texture_std;
  cfg.classifier_noise = o.noise;
  cfg.perturbation_delta = o.delta;
  cfg.seed = o.seed;
  try {
    cfg.perturbation = parse_perturbation(o.perturb);
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.n == 0) throw UsageError("synth: --n must be >= 1");
  if (o.rotations > 0 && (o.patch == 0 || o.patch > o.size || o.stride == 0)) {
    throw UsageError("synth: bad patch grid");
  }
  const fs::path out(o.out);
  const auto items = generate_dataset(cfg, o.n);
  std::vector<json> entries(items.size());
  const PatchGrid grid = o.rotations > 0
                             ? build_patch_grid(o.size, o.size, o.patch,
                                                o.patch, o.stride)
                             : PatchGrid{};
  parallel_for(items.size(), [&](std::size_t i) {
    const SynthItem& it = items[i];
    const std::string id = item_id(i);
    json e = {{"id", id},
              {"image", id + "_image.vslpf"},
              {"mask", id + "_mask.vslpf"},
              {"label", it.label.values()},
              {"exact", it.exact.values()},
              {"seed", it.seed}};
    save_field(out / (id + "_image.vslpf"), it.image);
    save_mask(out / (id + "_mask.vslpf"), it.mask);
    if (o.rotations > 0) {
      const PredictionStack stack = simulate_tta(
          it.mask, o.classes, grid, o.rotations, o.noise, mix64(it.seed + 1));
      save_stack(out / (id + "_stack.vslpf"), stack);
      e["stack"] = id + "_stack.vslpf";
    }
    entries[i] = std::move(e);
  });
  write_manifest(out / "manifest.jsonl", entries);
  return {{"command", "synth"},
          {"items", items.size()},
          {"manifest", (out / "manifest.jsonl").string()}};
}

json run_stage1_train(const Stage1Options& o) {
  const Manifest m = read_manifest(o.manifest);
  std::vector<Stage1Item> items;
  std::size_t classes = 0;
  std::size_t channels = 0;
  for (const json& e : m.entries) {
    Stage1Item it;
    it.image = load_field(m.resolve(e, "image"));
    it.label = label_of(e);
    if (o.patch == 0 || o.patch > it.image.height() ||
        o.patch > it.image.width() || o.stride == 0) {
      throw UsageError("stage1-train: bad patch grid");
    }
    it.grid = build_patch_grid(it.image.height(), it.image.width(), o.patch,
                               o.patch, o.stride);
    it.weights = tissue_weights(it.image, it.grid);
    classes = it.label.size();
    channels = it.image.channels();
    items.push_back(std::move(it));
  }
  const nn::Network net = make_proportion_classifier(channels, classes);
  Stage1TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  const Stage1Result r = train_stage1(net, items, cfg);
  const fs::path out(o.out);
  nn::save_params(out / "classifier.vslpp", r.params);
  write_json(out / "classifier.json", {{"in_channels", channels},
                                       {"classes", classes},
                                       {"patch", o.patch},
                                       {"stride", o.stride}});
  write_loss_csv(out / "loss.csv", r.epoch_loss);
  return {{"command", "stage1-train"},
          {"items", items.size()},
          {"epochs", o.epochs},
          {"final_loss", r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()}};
}

json run_tta(const TtaOptions& o) {
  const fs::path model_dir(o.model);
  require_existing(model_dir / "classifier.json", "classifier sidecar");
  if (o.rotations == 0) throw UsageError("tta: --rotations must be >= 1");
  const json side = read_json(model_dir / "classifier.json");
  const nn::Network net =
      make_proportion_classifier(side.at("in_channels").get<std::size_t>(),
                                 side.at("classes").get<std::size_t>());
  const nn::NetworkParams params =
      nn::load_params(model_dir / "classifier.vslpp");
  const Manifest m = read_manifest(o.manifest);
  const fs::path out(o.out);
  std::vector<json> entries(m.entries.size());
  const auto patch = side.at("patch").get<std::size_t>();
  const auto stride = side.at("stride").get<std::size_t>();
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const json& src = m.entries[i];
    const PixelField image = load_field(m.resolve(src, "image"));
    const PatchGrid grid = build_patch_grid(image.height(), image.width(),
                                            patch, patch, stride);
    const PredictionStack stack =
        tta_predict(net, params, image, grid, o.rotations);
    const std::string id = src.value("id", item_id(i));
    save_stack(out / (id + "_stack.vslpf"), stack);
    json e = src;
    for (const char* key : {"image", "mask"}) {
      if (src.contains(key)) {
        e[key] = fs::relative(m.resolve(src, key), out).generic_string();
      }
    }
    e["stack"] = id + "_stack.vslpf";
    entries[i] = std::move(e);
  }
  write_manifest(out / "manifest.jsonl", entries);
  return {{"command", "tta"},
          {"items", entries.size()},
          {"rotations", o.rotations},
          {"manifest", (out / "manifest.jsonl").string()}};
}

json run_posterior(const PosteriorOptions& o) {
  if (o.bins < 2) throw UsageError("posterior: --bins must be >= 2");
  const Manifest m = read_manifest(o.manifest);
  const fs::path out(o.out);
  std::vector<json> entries(m.entries.size());
  std::vector<std::size_t> empty(m.entries.size(), 0);
  parallel_for(m.entries.size(), [&](std::size_t i) {
    const json& src = m.entries[i];
    const PredictionStack stack = load_stack(m.resolve(src, "stack"));
    const HistogramPosterior hist = build_histogram(stack, o.bins);
    const std::string id = src.value("id", item_id(i));
    save_histogram(out / (id + "_hist.vslpf"), hist);
    save_gaussian(out / (id + "_gauss.vslpf"), fit_gaussian(hist));
    save_field(out / (id + "_vote.vslpf"), vote_mask(stack));
    empty[i] = hist.empty_pixels;
    json e = src;
    for (const char* key : {"image", "mask", "stack"}) {
      if (src.contains(key)) {
        e[key] = fs::relative(m.resolve(src, key), out).generic_string();
      }
    }
    e["hist"] = id + "_hist.vslpf";
    e["gauss"] = id + "_gauss.vslpf";
    e["vote"] = id + "_vote.vslpf";
    entries[i] = std::move(e);
  });
  write_manifest(out / "manifest.jsonl", entries);
  std::size_t total_empty = 0;
  for (auto v : empty) total_empty += v;
  return {{"command", "posterior"},
          {"items", entries.size()},
          {"bins", o.bins},
          {"empty_pixels", total_empty},
          {"manifest", (out / "manifest.jsonl").string()}};
}

namespace {

std::vector<Stage2Item> load_stage2_items(const Manifest& m) {
  std::vector<Stage2Item> items(m.entries.size());
  parallel_for(m.entries.size(), [&](std::size_t i) {
    const json& e = m.entries[i];
    Stage2Item it;
    it.image = load_field(m.resolve(e, "image"));
    it.hist = load_histogram(m.resolve(e, "hist"));
    it.anchor = fit_gaussian(it.hist);
    it.vote = load_field(m.resolve(e, "vote"));
    it.label = label_of(e);
    items[i] = std::move(it);
  });
  return items;
}

}  // namespace

json run_train_stage2(const Stage2Options& o) {
  const SolverVariant variant = variant_arg(o.variant);
  const Manifest m = read_manifest(o.manifest);
  const std::vector<Stage2Item> items = load_stage2_items(m);
  RegularizerSpec spec;
  spec.image_channels = items[0].image.channels();
  spec.posterior = variant == SolverVariant::kGmm ? PosteriorKind::kGaussian
                                                  : PosteriorKind::kHistogram;
  spec.bins = items[0].hist.bins;
  spec.classes = items[0].hist.classes;
  spec.widths = parse_list(o.widths, "widths");
  spec.kernel = o.kernel;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.unroll_steps = o.steps;
  cfg.network_lr = o.lr;
  cfg.scalar_lr = o.scalar_lr;
  if (o.scalar_update == "adam") {
    cfg.scalar_update = ScalarUpdate::kAdam;
  } else if (o.scalar_update == "plain") {
    cfg.scalar_update = ScalarUpdate::kPlain;
  } else {
    throw UsageError("--scalar-update must be adam or plain");
  }
  cfg.weight_decay = o.weight_decay;
  cfg.initial_tau = o.tau;
  cfg.initial_lambda = o.lambda;
  cfg.sigma0 = o.sigma0;
  cfg.freeze_tau = o.freeze_tau;
  cfg.freeze_lambda = o.freeze_lambda;
  cfg.seed = o.seed;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Stage2Result r = train_stage2(items, cfg, variant, spec);
  const fs::path out(o.out);
  nn::save_params(out / "regularizer.vslpp", r.model.params);
  write_json(out / "model.json", {{"variant", variant_name(variant)},
                                  {"tau", r.model.tau},
                                  {"lambda", r.model.lambda},
                                  {"sigma0", r.model.sigma0},
                                  {"spec", spec_to_json(spec)}});
  write_loss_csv(out / "loss.csv", r.epoch_loss);
  return {{"command", "train-stage2"},
          {"variant", variant_name(variant)},
          {"items", items.size()},
          {"epochs", o.epochs},
          {"first_loss", r.epoch_loss.front()},
          {"final_loss", r.epoch_loss.back()},
          {"tau", r.model.tau},
          {"lambda", r.model.lambda}};
}

json run_refine(const RefineOptions& o) {
  SolverConfig cfg;
  cfg.steps = o.steps;
  std::optional<Regularizer> reg;
  nn::NetworkParams params;
  std::optional<SolverVariant> model_variant;
  if (!o.model.empty()) {
    const fs::path dir(o.model);
    require_existing(dir / "model.json", "model");
    const json model = read_json(dir / "model.json");
    reg.emplace(spec_from_json(model.at("spec")));
    params = nn::load_params(dir / "regularizer.vslpp");
    model_variant = parse_variant(model.at("variant").get<std::string>());
    cfg.tau = model.at("tau").get<double>();
    cfg.lambda = model.at("lambda").get<double>();
    cfg.sigma0 = model.at("sigma0").get<double>();
  }
  cfg.variant = o.variant ? variant_arg(*o.variant)
                          : model_variant.value_or(SolverVariant::kDiffusion);
  if (model_variant && ((cfg.variant == SolverVariant::kGmm) !=
                        (*model_variant == SolverVariant::kGmm))) {
    throw UsageError("refine: variant " + variant_name(cfg.variant) +
                     " does not match the model's " +
                     variant_name(*model_variant));
  }
  if (o.tau) cfg.tau = *o.tau;
  if (o.lambda) cfg.lambda = *o.lambda;
  if (o.sigma0) cfg.sigma0 = *o.sigma0;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const std::vector<std::size_t> snaps = parse_list(o.snapshots, "snapshot");
  for (std::size_t s : snaps) {
    if (s >= cfg.steps) throw UsageError("refine: snapshot step out of range");
  }
  cfg.record_iterates = !snaps.empty();
  const Manifest m = read_manifest(o.manifest);
  const fs::path out(o.out);
  LearnedPrior prior;
  if (reg) prior = {&*reg, &params};
  std::vector<json> entries(m.entries.size());
  parallel_for(m.entries.size(), [&](std::size_t i) {
    const json& src = m.entries[i];
    const std::string id = src.value("id", item_id(i));
    const PixelField image = load_field(m.resolve(src, "image"));
    const HistogramPosterior hist = load_histogram(m.resolve(src, "hist"));
    const PixelField vote = load_field(m.resolve(src, "vote"));
    SolverConfig c = cfg;
    c.seed = mix64(cfg.seed ^ mix64(i + 1));
    SolverTrace trace;
    if (c.variant == SolverVariant::kGmm) {
      trace = run_gmm(c, fit_gaussian(hist), image, prior);
    } else {
      trace = run_solver(c, initial_iterate(vote, hist), hist, image, prior);
    }
    save_field(out / (id + "_refined.vslpf"), trace.final_u);
    save_mask(out / (id + "_pred.vslpf"), threshold_mask(trace.final_u));
    {
      std::ofstream tr(out / (id + "_trace.jsonl"), std::ios::binary);
      write_trace_jsonl(tr, trace);
    }
    json e = src;
    for (const char* key : {"image", "mask", "stack", "hist", "gauss", "vote"}) {
      if (src.contains(key)) {
        e[key] = fs::relative(m.resolve(src, key), out).generic_string();
      }
    }
    e["refined"] = id + "_refined.vslpf";
    e["pred_mask"] = id + "_pred.vslpf";
    e["trace"] = id + "_trace.jsonl";
    json snap_files = json::array();
    for (std::size_t s : snaps) {
      const std::string name = id + "_step" + std::to_string(s) + ".vslpf";
      save_field(out / name, trace.iterates[s]);
      snap_files.push_back({{"step", s}, {"file", name}});
    }
    if (!snaps.empty()) e["snapshots"] = snap_files;
    entries[i] = std::move(e);
  });
  write_manifest(out / "manifest.jsonl", entries);
  return {{"command", "refine"},
          {"variant", variant_name(cfg.variant)},
          {"steps", cfg.steps},
          {"tau", cfg.tau},
          {"lambda", cfg.lambda},
          {"items", entries.size()},
          {"manifest", (out / "manifest.jsonl").string()}};
}

json run_eval(const EvalOptions& o) {
  struct Pair {
    std::string id;
    fs::path pred;
    fs::path gt;
    std::optional<ProportionVector> label;
  };
  std::vector<Pair> pairs;
  if (!o.manifest.empty()) {
    const Manifest m = read_manifest(o.manifest);
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      const json& e = m.entries[i];
      Pair p{e.value("id", item_id(i)), m.resolve(e, o.key),
             m.resolve(e, o.gt_key), std::nullopt};
      if (e.contains("label")) p.label = label_of(e);
      pairs.push_back(std::move(p));
    }
  } else {
    if (o.pred_dir.empty() || o.gt_dir.empty()) {
      throw UsageError("eval: give --manifest or both --pred-dir and --gt-dir");
    }
    require_existing(o.pred_dir, "prediction directory");
    require_existing(o.gt_dir, "ground-truth directory");
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(o.pred_dir)) {
      if (f.path().extension() == ".vslpf") files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      const fs::path gt = fs::path(o.gt_dir) / f.filename();
      require_existing(gt, "ground truth for " + f.filename().string());
      pairs.push_back({f.stem().string(), f, gt, std::nullopt});
    }
    if (pairs.empty()) throw UsageError("eval: no .vslpf predictions found");
  }

  const std::size_t n = pairs.size();
  std::vector<OverlapScores> overlap(n);
  std::vector<double> hd(n);
  std::vector<LabelMask> preds(n);
  std::vector<std::size_t> max_label(n, 1);
  parallel_for(n, [&](std::size_t i) {
    preds[i] = load_labels(pairs[i].pred);
    const LabelMask gt = load_labels(pairs[i].gt);
    if (preds[i].height != gt.height || preds[i].width != gt.width) {
      throw std::runtime_error("eval: shape mismatch for " + pairs[i].id);
    }
    for (auto l : preds[i].labels) max_label[i] = std::max<std::size_t>(max_label[i], l);
    for (auto l : gt.labels) max_label[i] = std::max<std::size_t>(max_label[i], l);
    overlap[i] = dice_miou(preds[i], gt, o.classes);
    hd[i] = hausdorff95(preds[i], gt);
  });
  std::size_t classes = o.classes;
  if (classes == 0) {
    classes = *std::max_element(max_label.begin(), max_label.end()) + 1;
    for (const Pair& p : pairs) {
      if (p.label) classes = std::max(classes, p.label->size());
    }
  }

  const fs::path out(o.out);
  std::vector<double> dice(n), miou(n);
  {
    std::ofstream csv(out / "per_image.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write per_image.csv");
    csv << "id,dice,miou,hd95\n" << std::setprecision(17);
    for (std::size_t i = 0; i < n; ++i) {
      dice[i] = overlap[i].dice;
      miou[i] = overlap[i].miou;
      csv << pairs[i].id << ',' << dice[i] << ',' << miou[i] << ',' << hd[i]
          << '\n';
    }
  }
  std::size_t hd_inf = 0;
  const MeanStd d = mean_std(dice);
  const MeanStd mi = mean_std(miou);
  const MeanStd h = mean_std(hd, &hd_inf);
  json summary = {{"command", "eval"},
                  {"items", n},
                  {"dice", d.mean},
                  {"dice_std", d.stddev},
                  {"miou", mi.mean},
                  {"miou_std", mi.stddev},
                  {"hd95", h.mean},
                  {"hd95_std", h.stddev},
                  {"hd95_inf", hd_inf}};
  const bool have_labels = std::all_of(pairs.begin(), pairs.end(),
                                       [](const Pair& p) { return p.label; });
  if (have_labels) {
    std::vector<ProportionVector> pred_props, gt_props;
    for (std::size_t i = 0; i < n; ++i) {
      pred_props.push_back(mask_proportions(preds[i], classes));
      gt_props.push_back(*pairs[i].label);
    }
    const ProportionReport r = classification_report(pred_props, gt_props);
    summary["accuracy"] = r.accuracy;
    summary["precision"] = r.precision;
    summary["recall"] = r.recall;
    summary["f1"] = r.f1;
    summary["mae"] = r.mae;
    summary["mse"] = r.mse;
  }
  // JSON has no infinity; an all-infinite hd95 reports null.
  if (!std::isfinite(h.mean)) summary["hd95"] = nullptr;
  if (!std::isfinite(h.stddev)) summary["hd95_std"] = nullptr;
  write_json(out / "summary.json", summary);
  return summary;
}

json run_render(const RenderOptions& o) {
  const fs::path out(o.out);
  json written = json::array();
  if (!o.manifest.empty()) {
    const Manifest m = read_manifest(o.manifest);
    const json* entry = nullptr;
    for (const json& e : m.entries) {
      if (o.item.empty() || e.value("id", "") == o.item) {
        entry = &e;
        break;
      }
    }
    if (entry == nullptr) throw UsageError("render: item '" + o.item + "' not in manifest");
    const std::string id = entry->value("id", "item");
    const PixelField image = load_field(m.resolve(*entry, "image"));
    const std::string mask_key = entry->contains("pred_mask") ? "pred_mask"
                                                              : "mask";
    const LabelMask mask = load_labels(m.resolve(*entry, mask_key));
    save_ppm(out / (id + "_overlay.ppm"), render_overlay(image, mask, o.classes));
    written.push_back(id + "_overlay.ppm");
    if (entry->contains("snapshots")) {
      for (const json& s : entry->at("snapshots")) {
        const PixelField u = load_field(m.dir / s.at("file").get<std::string>());
        const std::string name = id + "_step" +
                                 std::to_string(s.at("step").get<std::size_t>()) +
                                 ".ppm";
        save_ppm(out / name, render_iterate(u));
        written.push_back(name);
      }
    }
    if (entry->contains("trace")) {
      fs::copy_file(m.resolve(*entry, "trace"), out / (id + "_trace.jsonl"),
                    fs::copy_options::overwrite_existing);
      written.push_back(id + "_trace.jsonl");
    }
  } else {
    if (o.image.empty()) throw UsageError("render: give --manifest or --image");
    require_existing(o.image, "image");
    const PixelField image = load_field(o.image);
    LabelMask mask(image.height(), image.width(), 0);
    if (!o.mask.empty()) {
      require_existing(o.mask, "mask");
      mask = load_labels(o.mask);
    }
    save_ppm(out / "overlay.ppm", render_overlay(image, mask, o.classes));
    written.push_back("overlay.ppm");
  }
  return {{"command", "render"}, {"files", written}};
}

}  // namespace vslp::tools
