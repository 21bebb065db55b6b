#include "vslp/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vslp/fidelity.hpp"
#include "vslp/optimizer.hpp"
#include "vslp/parallel.hpp"
#include "vslp/random.hpp"

namespace vslp {

namespace {

std::vector<double> predicted_proportions(const PixelField& u,
                                          std::size_t classes) {
  const double inv = 1.0 / static_cast<double>(u.pixels());
  std::vector<double> mean(u.channels(), 0.0);
  for (std::size_t p = 0; p < u.pixels(); ++p) {
    for (std::size_t c = 0; c < u.channels(); ++c) {
      mean[c] += u.data()[p * u.channels() + c];
    }
  }
  for (double& m : mean) m *= inv;
  if (u.channels() == 1) {
    if (classes != 2) {
      throw std::invalid_argument(
          "proportion_loss: single channel needs a binary label");
    }
    return {1.0 - mean[0], mean[0]};
  }
  if (classes != u.channels()) {
    throw std::invalid_argument("proportion_loss: label size != channels");
  }
  return mean;
}

}  // namespace

double proportion_loss(const PixelField& u, const ProportionVector& y) {
  const auto p = predicted_proportions(u, y.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = p[k] - y[k];
    loss += d * d;
  }
  return loss;
}

PixelField proportion_loss_grad(const PixelField& u,
                                const ProportionVector& y) {
  const auto p = predicted_proportions(u, y.size());
  const double inv = 1.0 / static_cast<double>(u.pixels());
  std::vector<double> dmean(u.channels());
  if (u.channels() == 1) {
    // p = (1 - m, m)
    dmean[0] = (-2.0 * (p[0] - y[0]) + 2.0 * (p[1] - y[1])) * inv;
  } else {
    for (std::size_t k = 0; k < p.size(); ++k) {
      dmean[k] = 2.0 * (p[k] - y[k]) * inv;
    }
  }
  PixelField g(u.height(), u.width(), u.channels());
  for (std::size_t p_ = 0; p_ < u.pixels(); ++p_) {
    for (std::size_t c = 0; c < u.channels(); ++c) {
      g.data()[p_ * u.channels() + c] = dmean[c];
    }
  }
  return g;
}

Stage2Item make_stage2_item(PixelField image, const PredictionStack& stack,
                            std::size_t bins, ProportionVector label) {
  Stage2Item item;
  item.image = std::move(image);
  item.hist = build_histogram(stack, bins);
  item.anchor = fit_gaussian(item.hist);
  item.vote = vote_mask(stack);
  item.label = std::move(label);
  return item;
}

namespace {

struct LangevinStep {
  PixelField drift_fid;  // grad D at u_s
  PixelField drift_reg;  // grad R at u_s (unscaled)
  PixelField noise;      // standard normals (ULA only, for d/dtau)
  std::vector<std::uint8_t> inside;  // 1 where the clamp was inactive
  Regularizer::Record record;
};

void add_into(nn::NetworkParams& acc, const nn::NetworkParams& g) {
  auto& dst = acc.mutable_tensors();
  for (const auto& [name, t] : g.tensors()) {
    auto& d = dst.at(name).data;
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += t.data[j];
  }
}

UnrolledResult unrolled_langevin(const Regularizer& reg,
                                 const nn::NetworkParams& params,
                                 const UnrollOptions& opt,
                                 const Stage2Item& item, bool with_gradient) {
  const std::size_t steps = opt.steps;
  const double a = opt.tau / static_cast<double>(steps);
  const bool ula = opt.variant == SolverVariant::kUla;
  const bool use_reg = opt.lambda != 0.0 || with_gradient;
  const CounterRng rng(opt.noise_seed);
  const std::size_t k = item.hist.classes;
  const std::size_t in_offset =
      reg.spec().image_channels + reg.spec().posterior_channels();

  SolverConfig noise_cfg;
  noise_cfg.variant = opt.variant;
  noise_cfg.steps = steps;
  noise_cfg.tau = opt.tau;
  noise_cfg.sigma0 = opt.sigma0;

  // Sum of histogram mass per entry: d(grad D)/du.
  std::vector<double> mass(item.hist.weights.size() / item.hist.bins, 0.0);
  for (std::size_t j = 0; j < mass.size(); ++j) {
    for (std::size_t l = 0; l < item.hist.bins; ++l) {
      mass[j] += item.hist.weights.data()[j * item.hist.bins + l];
    }
  }

  PixelField u = initial_iterate(item.vote, item.hist);
  std::vector<LangevinStep> tape;
  if (with_gradient) tape.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    LangevinStep st;
    st.drift_fid = wasserstein_grad(u, item.hist);
    if (use_reg) {
      const RegularizerInput in = assemble_input(item.image, item.hist, u);
      st.drift_reg = reg.evaluate(params, in.assembled,
                                  with_gradient ? &st.record : nullptr);
    }
    const double amp = noise_amplitude(noise_cfg, s);
    if (with_gradient && ula) st.noise = PixelField(u.height(), u.width(), k);
    st.inside.resize(with_gradient ? u.size() : 0);
    for (std::size_t j = 0; j < u.size(); ++j) {
      double drift = st.drift_fid.data()[j];
      if (use_reg) drift += opt.lambda * st.drift_reg.data()[j];
      double v = u.data()[j] - a * drift;
      if (amp != 0.0) {
        const double n = solver_noise(rng, s, j);
        v += amp * n;
        if (!st.noise.empty()) st.noise.data()[j] = n;
      }
      if (!std::isfinite(v)) {
        throw TrainingError("non-finite iterate at unrolled step " +
                            std::to_string(s));
      }
      if (with_gradient) st.inside[j] = (v > 0.0 && v < 1.0) ? 1 : 0;
      u.data()[j] = std::clamp(v, 0.0, 1.0);
    }
    if (with_gradient) tape.push_back(std::move(st));
  }

  UnrolledResult result;
  result.loss = proportion_loss(u, item.label);
  if (!with_gradient) {
    result.final_u = std::move(u);
    return result;
  }
  result.grad_params = params.zeros_like();
  PixelField grad = proportion_loss_grad(u, item.label);
  result.final_u = std::move(u);
  double grad_a = 0.0;
  double grad_tau_noise = 0.0;
  const double noise_dtau =
      ula ? 1.0 / std::sqrt(2.0 * opt.tau * static_cast<double>(steps)) : 0.0;

  for (std::size_t s = steps; s-- > 0;) {
    LangevinStep& st = tape[s];
    PixelField gv = grad;
    for (std::size_t j = 0; j < gv.size(); ++j) {
      if (st.inside[j] == 0) gv.data()[j] = 0.0;
    }
    PixelField reg_out_grad(gv.height(), gv.width(), k);
    for (std::size_t j = 0; j < gv.size(); ++j) {
      const double g = gv.data()[j];
      const double dr = st.drift_reg.data()[j];
      grad_a -= g * (st.drift_fid.data()[j] + opt.lambda * dr);
      result.grad_lambda -= a * g * dr;
      if (ula) grad_tau_noise += g * st.noise.data()[j] * noise_dtau;
      reg_out_grad.data()[j] = -a * opt.lambda * g;
      grad.data()[j] = g * (1.0 - a * mass[j]);
    }
    if (opt.lambda != 0.0) {
      nn::Gradients rg = reg.backward(params, st.record, reg_out_grad);
      add_into(result.grad_params, rg.params);
      const std::size_t ch = rg.input.channels();
      for (std::size_t p = 0; p < grad.pixels(); ++p) {
        for (std::size_t c = 0; c < k; ++c) {
          grad.data()[p * k + c] += rg.input.data()[p * ch + in_offset + c];
        }
      }
    }
    st = LangevinStep();
  }
  result.grad_tau = grad_a / static_cast<double>(steps) + grad_tau_noise;
  return result;
}

struct GaussianStep {
  PixelField drift_reg;  // [d/dmu | d/dsigma], unscaled
  std::vector<std::uint8_t> inside;
  Regularizer::Record record;
};

UnrolledResult unrolled_gmm(const Regularizer& reg,
                            const nn::NetworkParams& params,
                            const UnrollOptions& opt, const Stage2Item& item,
                            bool with_gradient) {
  const std::size_t steps = opt.steps;
  const double a = opt.tau / static_cast<double>(steps);
  const bool use_reg = opt.lambda != 0.0 || with_gradient;
  const GaussianPosterior& anchor = item.anchor;
  const std::size_t k = anchor.classes();
  const std::size_t in_offset =
      reg.spec().image_channels + reg.spec().posterior_channels();

  GaussianPosterior state = anchor;
  std::vector<GaussianStep> tape;
  std::vector<PixelField> mean_before;
  if (with_gradient) {
    tape.reserve(steps);
    mean_before.reserve(steps);
  }
  for (std::size_t s = 0; s < steps; ++s) {
    GaussianStep st;
    if (use_reg) {
      const RegularizerInput in = assemble_input(item.image, anchor,
                                                 state.mean);
      st.drift_reg = reg.evaluate(params, in.assembled,
                                  with_gradient ? &st.record : nullptr);
    }
    if (with_gradient) {
      st.inside.resize(state.mean.size());
      mean_before.push_back(state.mean);
    }
    for (std::size_t p = 0; p < state.mean.pixels(); ++p) {
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t j = p * k + c;
        double dm = state.mean.data()[j] - anchor.mean.data()[j];
        double ds = state.stddev.data()[j] - anchor.stddev.data()[j];
        if (use_reg) {
          dm += opt.lambda * st.drift_reg.data()[p * 2 * k + c];
          ds += opt.lambda * st.drift_reg.data()[p * 2 * k + k + c];
        }
        const double m = state.mean.data()[j] - a * dm;
        const double sd = state.stddev.data()[j] - a * ds;
        if (!std::isfinite(m) || !std::isfinite(sd)) {
          throw TrainingError("non-finite iterate at unrolled step " +
                              std::to_string(s));
        }
        if (with_gradient) st.inside[j] = (m > 0.0 && m < 1.0) ? 1 : 0;
        state.mean.data()[j] = std::clamp(m, 0.0, 1.0);
        state.stddev.data()[j] = std::max(sd, kMinSigma);
      }
    }
    if (with_gradient) tape.push_back(std::move(st));
  }

  UnrolledResult result;
  result.loss = proportion_loss(state.mean, item.label);
  if (!with_gradient) {
    result.final_u = std::move(state.mean);
    return result;
  }
  result.grad_params = params.zeros_like();
  PixelField grad = proportion_loss_grad(state.mean, item.label);
  result.final_u = std::move(state.mean);
  double grad_a = 0.0;
  // sigma never feeds back into mu, so only the mean path carries gradient.
  for (std::size_t s = steps; s-- > 0;) {
    GaussianStep& st = tape[s];
    const PixelField& mu = mean_before[s];
    PixelField reg_out_grad(mu.height(), mu.width(), 2 * k);
    for (std::size_t p = 0; p < mu.pixels(); ++p) {
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t j = p * k + c;
        const double g = st.inside[j] != 0 ? grad.data()[j] : 0.0;
        const double dr = st.drift_reg.data()[p * 2 * k + c];
        grad_a -= g * ((mu.data()[j] - anchor.mean.data()[j]) +
                       opt.lambda * dr);
        result.grad_lambda -= a * g * dr;
        reg_out_grad.data()[p * 2 * k + c] = -a * opt.lambda * g;
        grad.data()[j] = g * (1.0 - a);
      }
    }
    if (opt.lambda != 0.0) {
      nn::Gradients rg = reg.backward(params, st.record, reg_out_grad);
      add_into(result.grad_params, rg.params);
      const std::size_t ch = rg.input.channels();
      for (std::size_t p = 0; p < grad.pixels(); ++p) {
        for (std::size_t c = 0; c < k; ++c) {
          grad.data()[p * k + c] += rg.input.data()[p * ch + in_offset + c];
        }
      }
    }
    st = GaussianStep();
  }
  result.grad_tau = grad_a / static_cast<double>(steps);
  return result;
}

}  // namespace

UnrolledResult unrolled_loss(const Regularizer& regularizer,
                             const nn::NetworkParams& params,
                             const UnrollOptions& options,
                             const Stage2Item& item, bool with_gradient) {
  if (options.steps < 1) {
    throw std::invalid_argument("unrolled_loss: steps < 1");
  }
  if (!(options.tau > 0.0) || !(options.lambda >= 0.0)) {
    throw std::invalid_argument("unrolled_loss: tau > 0 and lambda >= 0");
  }
  const RegularizerSpec& spec = regularizer.spec();
  const bool gaussian = options.variant == SolverVariant::kGmm;
  if ((spec.posterior == PosteriorKind::kGaussian) != gaussian) {
    throw std::invalid_argument(
        "unrolled_loss: regulariser posterior kind does not match variant");
  }
  if (spec.classes != item.hist.classes ||
      spec.image_channels != item.image.channels()) {
    throw std::invalid_argument("unrolled_loss: item does not match spec");
  }
  return gaussian
             ? unrolled_gmm(regularizer, params, options, item, with_gradient)
             : unrolled_langevin(regularizer, params, options, item,
                                 with_gradient);
}

void TrainConfig::validate() const {
  if (unroll_steps < 1) throw std::invalid_argument("TrainConfig: S < 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch < 1");
  if (!(network_lr > 0.0) || !(scalar_lr > 0.0)) {
    throw std::invalid_argument("TrainConfig: learning rates must be > 0");
  }
  if (!(initial_tau > 0.0) || !(initial_lambda >= 0.0) || !(sigma0 >= 0.0)) {
    throw std::invalid_argument("TrainConfig: bad initial scalars");
  }
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle,
                                     std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    std::mt19937_64 rng(mix64(seed ^ mix64(epoch + 0x51ed)));
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

class LogScalarStep {
 public:
  explicit LogScalarStep(const TrainConfig& cfg)
      : mode_(cfg.scalar_update), lr_(cfg.scalar_lr) {}

  double apply(double value, double grad_log) {
    if (mode_ == ScalarUpdate::kPlain) return value * std::exp(-lr_ * grad_log);
    const nn::AdamWConfig d;
    ++t_;
    m_ = d.beta1 * m_ + (1.0 - d.beta1) * grad_log;
    v_ = d.beta2 * v_ + (1.0 - d.beta2) * grad_log * grad_log;
    const double mh = m_ / (1.0 - std::pow(d.beta1, static_cast<double>(t_)));
    const double vh = v_ / (1.0 - std::pow(d.beta2, static_cast<double>(t_)));
    return value * std::exp(-lr_ * mh / (std::sqrt(vh) + d.epsilon));
  }

 private:
  ScalarUpdate mode_;
  double lr_;
  double m_ = 0.0;
  double v_ = 0.0;
  std::size_t t_ = 0;
};

}  // namespace

Stage2Result train_stage2(std::span<const Stage2Item> items,
                          const TrainConfig& cfg, SolverVariant variant,
                          const RegularizerSpec& spec,
                          const EpochCallback& on_epoch) {
  cfg.validate();
  if (items.empty()) throw std::invalid_argument("train_stage2: no items");
  const Regularizer reg(spec);
  Stage2Result result;
  result.model.spec = spec;
  result.model.variant = variant;
  result.model.sigma0 = cfg.sigma0;
  nn::NetworkParams params = reg.init_params(cfg.seed, cfg.zero_final_layer);
  double tau = cfg.initial_tau;
  double lambda = cfg.initial_lambda;
  nn::AdamW adam({cfg.network_lr, cfg.weight_decay});
  LogScalarStep tau_step(cfg);
  LogScalarStep lambda_step(cfg);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(items.size(), cfg.shuffle, cfg.seed, epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      std::vector<UnrolledResult> batch(count);
      UnrollOptions opt;
      opt.variant = variant;
      opt.steps = cfg.unroll_steps;
      opt.tau = tau;
      opt.lambda = lambda;
      opt.sigma0 = cfg.sigma0;
      parallel_for(count, [&](std::size_t b) {
        UnrollOptions o = opt;
        const std::size_t idx = order[start + b];
        o.noise_seed = mix64(cfg.seed ^ mix64(epoch * 1000003ULL + idx));
        batch[b] = unrolled_loss(reg, params, o, items[idx], true);
      });
      nn::NetworkParams grads = params.zeros_like();
      double g_tau = 0.0;
      double g_lambda = 0.0;
      const double scale = 1.0 / static_cast<double>(count);
      for (std::size_t b = 0; b < count; ++b) {
        if (!std::isfinite(batch[b].loss)) {
          throw TrainingError("non-finite loss in epoch " +
                              std::to_string(epoch + 1) + " at item " +
                              std::to_string(order[start + b]));
        }
        epoch_loss += batch[b].loss;
        auto& dst = grads.mutable_tensors();
        for (const auto& [name, t] : batch[b].grad_params.tensors()) {
          auto& d = dst.at(name).data;
          for (std::size_t j = 0; j < d.size(); ++j) d[j] += scale * t.data[j];
        }
        g_tau += scale * batch[b].grad_tau;
        g_lambda += scale * batch[b].grad_lambda;
      }
      if (!std::isfinite(g_tau) || !std::isfinite(g_lambda)) {
        throw TrainingError("non-finite scalar gradient in epoch " +
                            std::to_string(epoch + 1));
      }
      try {
        params = adam.step(params, grads);
      } catch (const nn::NonFiniteError& e) {
        throw TrainingError(std::string(e.what()) + " in epoch " +
                            std::to_string(epoch + 1));
      }
      // d/dlog(x) = x d/dx
      if (!cfg.freeze_tau) tau = tau_step.apply(tau, tau * g_tau);
      if (!cfg.freeze_lambda) {
        lambda = lambda_step.apply(lambda, lambda * g_lambda);
      }
    }
    epoch_loss /= static_cast<double>(items.size());
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, epoch_loss);
  }
  result.model.params = std::move(params);
  result.model.tau = tau;
  result.model.lambda = lambda;
  return result;
}

Stage1Result train_stage1(const nn::Network& classifier,
                          std::span<const Stage1Item> items,
                          const Stage1TrainConfig& cfg,
                          const EpochCallback& on_epoch) {
  if (items.empty()) throw std::invalid_argument("train_stage1: no items");
  if (cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("train_stage1: bad config");
  }
  Stage1Result result;
  nn::NetworkParams params = classifier.init_params(cfg.seed);
  nn::AdamW adam({cfg.learning_rate, cfg.weight_decay});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(items.size(), cfg.shuffle, cfg.seed, epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      std::vector<Stage1Item> batch;
      batch.reserve(count);
      for (std::size_t b = 0; b < count; ++b) {
        batch.push_back(items[order[start + b]]);
      }
      Stage1LossResult r = stage1_loss_and_grad(classifier, params, batch);
      if (!std::isfinite(r.loss)) {
        throw TrainingError("non-finite stage-1 loss in epoch " +
                            std::to_string(epoch + 1));
      }
      epoch_loss += r.loss * static_cast<double>(count);
      try {
        params = adam.step(params, r.grads);
      } catch (const nn::NonFiniteError& e) {
        throw TrainingError(std::string(e.what()) + " in epoch " +
                            std::to_string(epoch + 1));
      }
    }
    epoch_loss /= static_cast<double>(items.size());
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, epoch_loss);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace vslp
