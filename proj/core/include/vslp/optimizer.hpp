#pragma once

#include <cstdint>
#include <stdexcept>

#include "vslp/network.hpp"

namespace vslp::nn {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamWConfig {
  double learning_rate = 3e-5;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimiser with decoupled weight decay and bias-corrected
/// moments.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// Returns the updated parameters. A non-finite gradient rejects the step
  /// with NonFiniteError and leaves the optimiser state untouched.
  NetworkParams step(const NetworkParams& params, const NetworkParams& grads);

  const AdamWConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::uint64_t step_count() const { return step_; }
  const NetworkParams& first_moment() const { return m_; }
  const NetworkParams& second_moment() const { return v_; }

 private:
  AdamWConfig config_;
  NetworkParams m_;
  NetworkParams v_;
  std::uint64_t step_ = 0;
};

}  // namespace vslp::nn
