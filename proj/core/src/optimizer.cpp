#include "vslp/optimizer.hpp"

#include <cmath>

namespace vslp::nn {

NetworkParams AdamW::step(const NetworkParams& params,
                          const NetworkParams& grads) {
  if (!params.same_layout(grads)) {
    throw std::invalid_argument("AdamW::step: gradient layout mismatch");
  }
  if (!grads.all_finite()) {
    throw NonFiniteError("AdamW::step: non-finite gradient");
  }
  if (m_.tensor_count() == 0) {
    m_ = params.zeros_like();
    v_ = params.zeros_like();
  } else if (!m_.same_layout(params)) {
    throw std::invalid_argument("AdamW::step: parameter layout changed");
  }

  const std::uint64_t t = step_ + 1;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double lr = config_.learning_rate;
  const double wd = config_.weight_decay;

  NetworkParams out = params;
  auto& out_t = out.mutable_tensors();
  auto& m_t = m_.mutable_tensors();
  auto& v_t = v_.mutable_tensors();
  for (auto& [name, tensor] : out_t) {
    const auto& g = grads.at(name).data;
    auto& m = m_t.at(name).data;
    auto& v = v_t.at(name).data;
    auto& w = tensor.data;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= lr * (m_hat / (std::sqrt(v_hat) + config_.epsilon) + wd * w[j]);
    }
  }
  step_ = t;
  return out;
}

}  // namespace vslp::nn
