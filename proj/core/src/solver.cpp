#include "vslp/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "vslp/fidelity.hpp"

namespace vslp {

SolverVariant parse_variant(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "ula") return SolverVariant::kUla;
  if (lower == "diff" || lower == "diffusion") return SolverVariant::kDiffusion;
  if (lower == "gmm") return SolverVariant::kGmm;
  throw std::invalid_argument("unknown solver variant '" + name + "'");
}

std::string variant_name(SolverVariant variant) {
  switch (variant) {
    case SolverVariant::kUla:
      return "ula";
    case SolverVariant::kDiffusion:
      return "diff";
    case SolverVariant::kGmm:
      return "gmm";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("SolverConfig: steps < 1");
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("SolverConfig: tau must be >= 0");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("SolverConfig: lambda must be >= 0");
  }
  if (!(sigma0 >= 0.0) || !std::isfinite(sigma0)) {
    throw std::invalid_argument("SolverConfig: sigma0 must be >= 0");
  }
}

double noise_amplitude(const SolverConfig& cfg, std::size_t step) {
  const double s = static_cast<double>(step);
  const double total = static_cast<double>(cfg.steps);
  switch (cfg.variant) {
    case SolverVariant::kUla:
      return cfg.zero_noise ? 0.0 : std::sqrt(2.0 * cfg.tau / total);
    case SolverVariant::kDiffusion:
      return (1.0 - s / total) * cfg.sigma0;
    case SolverVariant::kGmm:
      return 0.0;
  }
  return 0.0;
}

double solver_noise(const CounterRng& rng, std::size_t step,
                    std::size_t index) {
  return rng.substream(step).normal(index);
}

PixelField initial_iterate(const PixelField& vote_mask,
                           const HistogramPosterior& hist) {
  if (!vote_mask.same_grid(hist.weights)) {
    throw std::invalid_argument("initial_iterate: grid mismatch");
  }
  const std::size_t k = hist.classes;
  const std::size_t first = vote_mask.channels() == 2 && k == 1 ? 1 : 0;
  if (vote_mask.channels() != k + first) {
    throw std::invalid_argument("initial_iterate: channel mismatch");
  }
  const PixelField mean = histogram_mean(hist);
  PixelField u(vote_mask.height(), vote_mask.width(), k);
  for (std::size_t p = 0; p < u.pixels(); ++p) {
    for (std::size_t c = 0; c < k; ++c) {
      u.data()[p * k + c] =
          vote_mask.validity()[p] != 0
              ? vote_mask.data()[p * vote_mask.channels() + first + c]
              : mean.data()[p * k + c];
    }
  }
  return u;
}

namespace {

double norm(const PixelField& f) {
  double s = 0.0;
  for (double v : f.data()) s += v * v;
  return std::sqrt(s);
}

bool has_prior(const LearnedPrior& prior) {
  return prior.regularizer != nullptr && prior.params != nullptr;
}

SolverTrace run_langevin(const SolverConfig& cfg, const PixelField& u0,
                         const HistogramPosterior& hist,
                         const PixelField& image, const LearnedPrior& prior) {
  cfg.validate();
  if (u0.channels() != hist.classes || !u0.same_grid(hist.weights)) {
    throw std::invalid_argument("solver: u0 does not match the histogram");
  }
  const double step_size = cfg.tau / static_cast<double>(cfg.steps);
  const CounterRng rng(cfg.seed);
  PixelField u = u0;
  u.validity().assign(u.pixels(), 1);
  SolverTrace trace;
  trace.steps.reserve(cfg.steps);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const PixelField g_fid = wasserstein_grad(u, hist);
    PixelField g_reg;
    if (has_prior(prior) && cfg.lambda != 0.0) {
      const RegularizerInput in = assemble_input(image, hist, u);
      g_reg = prior.regularizer->evaluate(*prior.params, in.assembled);
    }
    const double amp = noise_amplitude(cfg, s);
    StepRecord rec;
    rec.step = s;
    rec.noise_amplitude = amp;
    rec.fidelity_grad_norm = norm(g_fid);
    rec.reg_grad_norm = g_reg.empty() ? 0.0 : cfg.lambda * norm(g_reg);
    for (std::size_t j = 0; j < u.size(); ++j) {
      double drift = g_fid.data()[j];
      if (!g_reg.empty()) drift += cfg.lambda * g_reg.data()[j];
      double v = u.data()[j] - step_size * drift;
      if (amp != 0.0) v += amp * solver_noise(rng, s, j);
      if (!std::isfinite(v)) throw SolverError("non-finite iterate", s);
      u.data()[j] = std::clamp(v, 0.0, 1.0);
    }
    rec.fidelity_energy = wasserstein_energy(u, hist).total;
    trace.steps.push_back(rec);
    if (cfg.record_iterates) trace.iterates.push_back(u);
  }
  trace.final_u = std::move(u);
  return trace;
}

}  // namespace

SolverTrace run_ula(const SolverConfig& cfg, const PixelField& u0,
                    const HistogramPosterior& hist, const PixelField& image,
                    const LearnedPrior& prior) {
  SolverConfig c = cfg;
  c.variant = SolverVariant::kUla;
  return run_langevin(c, u0, hist, image, prior);
}

SolverTrace run_diffusion(const SolverConfig& cfg, const PixelField& u0,
                          const HistogramPosterior& hist,
                          const PixelField& image, const LearnedPrior& prior) {
  SolverConfig c = cfg;
  c.variant = SolverVariant::kDiffusion;
  return run_langevin(c, u0, hist, image, prior);
}

SolverTrace run_gmm(const SolverConfig& cfg, const GaussianPosterior& anchor,
                    const PixelField& image, const LearnedPrior& prior) {
  cfg.validate();
  const std::size_t k = anchor.classes();
  const double step_size = cfg.tau / static_cast<double>(cfg.steps);
  GaussianPosterior state = anchor;
  SolverTrace trace;
  trace.steps.reserve(cfg.steps);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const GaussianFidelity fid = gaussian_energy_grad(state, anchor);
    PixelField g_reg;
    if (has_prior(prior) && cfg.lambda != 0.0) {
      const RegularizerInput in = assemble_input(image, anchor, state.mean);
      g_reg = prior.regularizer->evaluate(*prior.params, in.assembled);
    }
    StepRecord rec;
    rec.step = s;
    rec.fidelity_grad_norm = std::sqrt(norm(fid.grad_mean) *
                                           norm(fid.grad_mean) +
                                       norm(fid.grad_stddev) *
                                           norm(fid.grad_stddev));
    rec.reg_grad_norm = g_reg.empty() ? 0.0 : cfg.lambda * norm(g_reg);
    for (std::size_t p = 0; p < state.mean.pixels(); ++p) {
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t j = p * k + c;
        double dm = fid.grad_mean.data()[j];
        double ds = fid.grad_stddev.data()[j];
        if (!g_reg.empty()) {
          dm += cfg.lambda * g_reg.data()[p * 2 * k + c];
          ds += cfg.lambda * g_reg.data()[p * 2 * k + k + c];
        }
        const double m = state.mean.data()[j] - step_size * dm;
        const double sd = state.stddev.data()[j] - step_size * ds;
        if (!std::isfinite(m) || !std::isfinite(sd)) {
          throw SolverError("non-finite iterate", s);
        }
        state.mean.data()[j] = std::clamp(m, 0.0, 1.0);
        state.stddev.data()[j] = std::max(sd, kMinSigma);
      }
    }
    rec.fidelity_energy = gaussian_energy_grad(state, anchor).energy;
    trace.steps.push_back(rec);
    if (cfg.record_iterates) trace.iterates.push_back(state.mean);
  }
  trace.final_u = std::move(state.mean);
  trace.final_stddev = std::move(state.stddev);
  return trace;
}

SolverTrace run_solver(const SolverConfig& cfg, const PixelField& u0,
                       const HistogramPosterior& hist, const PixelField& image,
                       const LearnedPrior& prior) {
  switch (cfg.variant) {
    case SolverVariant::kUla:
      return run_ula(cfg, u0, hist, image, prior);
    case SolverVariant::kDiffusion:
      return run_diffusion(cfg, u0, hist, image, prior);
    case SolverVariant::kGmm:
      return run_gmm(cfg, fit_gaussian(hist), image, prior);
  }
  throw std::invalid_argument("run_solver: unknown variant");
}

LabelMask threshold_mask(const PixelField& u) {
  if (u.channels() == 1) {
    LabelMask mask(u.height(), u.width());
    for (std::size_t p = 0; p < u.pixels(); ++p) {
      mask.labels[p] = u.data()[p] >= 0.5 ? 1 : 0;
    }
    return mask;
  }
  return argmax_labels(u);
}

void write_trace_jsonl(std::ostream& out, const SolverTrace& trace) {
  const auto old = out.precision(17);
  for (const StepRecord& r : trace.steps) {
    out << "{\"step\":" << r.step
        << ",\"fidelity_energy\":" << r.fidelity_energy
        << ",\"fidelity_grad_norm\":" << r.fidelity_grad_norm
        << ",\"reg_grad_norm\":" << r.reg_grad_norm
        << ",\"noise_amplitude\":" << r.noise_amplitude << "}\n";
  }
  out.precision(old);
}

}  // namespace vslp
