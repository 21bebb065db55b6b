#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "vslp/field.hpp"
#include "vslp/network.hpp"
#include "vslp/posterior.hpp"
#include "vslp/random.hpp"
#include "vslp/regularizer.hpp"

namespace vslp {

enum class SolverVariant { kUla, kDiffusion, kGmm };

SolverVariant parse_variant(const std::string& name);
std::string variant_name(SolverVariant variant);

struct SolverConfig {
  SolverVariant variant = SolverVariant::kDiffusion;
  std::size_t steps = 50;
  double tau = 1.0;
  double lambda = 1.0;
  double sigma0 = 0.3;
  std::uint64_t seed = 0;
  /// ULA only: drop the sqrt(2 tau / S) noise term.
  bool zero_noise = false;
  bool record_iterates = false;

  /// Throws std::invalid_argument unless S >= 1, tau >= 0, lambda >= 0,
  /// sigma0 >= 0. tau = 0 leaves the iterate where it started.
  void validate() const;
};

/// A trained regulariser and its parameters. Solvers treat a null prior as a
/// zero gradient field.
struct LearnedPrior {
  const Regularizer* regularizer = nullptr;
  const nn::NetworkParams* params = nullptr;
};

struct StepRecord {
  std::size_t step = 0;
  double fidelity_energy = 0.0;    // after the update
  double fidelity_grad_norm = 0.0;  // ||grad D|| at the pre-update iterate
  double reg_grad_norm = 0.0;       // ||lambda grad R|| at the same point
  double noise_amplitude = 0.0;
};

struct SolverTrace {
  std::vector<StepRecord> steps;
  std::vector<PixelField> iterates;  // when record_iterates
  PixelField final_u;
  PixelField final_stddev;  // Gaussian variant only
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Injected noise amplitude at 0-indexed step s.
double noise_amplitude(const SolverConfig& cfg, std::size_t step);

/// Standard normal draw for (step, entry) of a chain.
double solver_noise(const CounterRng& rng, std::size_t step,
                    std::size_t index);

/// Starting iterate from a one-hot vote mask: the foreground channel for
/// binary tasks, all channels otherwise. Pixels without a vote take the
/// histogram mean.
PixelField initial_iterate(const PixelField& vote_mask,
                           const HistogramPosterior& hist);

/// Unadjusted Langevin iterations
///   u <- clamp01(u - tau/S (grad D + lambda grad R) + sqrt(2 tau/S) n).
SolverTrace run_ula(const SolverConfig& cfg, const PixelField& u0,
                    const HistogramPosterior& hist, const PixelField& image,
                    const LearnedPrior& prior);

/// Same drift as run_ula with noise amplitude (1 - s/S) sigma0.
SolverTrace run_diffusion(const SolverConfig& cfg, const PixelField& u0,
                          const HistogramPosterior& hist,
                          const PixelField& image, const LearnedPrior& prior);

/// Deterministic joint refinement of (mu, sigma) from the anchor. The
/// regulariser sees [image | anchor mu | anchor sigma | current mu] and
/// emits [d/dmu | d/dsigma]. mu is clamped to [0,1], sigma to >= 1e-6.
SolverTrace run_gmm(const SolverConfig& cfg, const GaussianPosterior& anchor,
                    const PixelField& image, const LearnedPrior& prior);

/// Dispatches on cfg.variant; u0 is ignored for the Gaussian variant.
SolverTrace run_solver(const SolverConfig& cfg, const PixelField& u0,
                       const HistogramPosterior& hist, const PixelField& image,
                       const LearnedPrior& prior);

/// Binary (1 channel): class 1 iff u >= 0.5. Otherwise argmax, ties low.
LabelMask threshold_mask(const PixelField& u);

/// One JSON object per step: step, fidelity_energy, fidelity_grad_norm,
/// reg_grad_norm, noise_amplitude.
void write_trace_jsonl(std::ostream& out, const SolverTrace& trace);

}  // namespace vslp
