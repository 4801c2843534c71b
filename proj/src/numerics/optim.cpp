#include "extax/numerics/optim.hpp"

#include <cmath>

#include "extax/errors.hpp"

namespace extax {

AdamW::AdamW(const ParameterSet& params, AdamWConfig config) : config_(config) {
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.value.shape(), 0.0);
    v_.emplace_back(e.value.shape(), 0.0);
  }
}

void AdamW::step(ParameterSet& params, std::span<const Tensor> grads) {
  auto entries = params.entries();
  if (grads.size() != entries.size() || m_.size() != entries.size()) {
    throw ShapeError("optimizer step got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(entries.size()) + " parameters");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor& w = entries[p].value;
    const Tensor& g = grads[p];
    if (!g.same_shape(w)) throw ShapeError("gradient shape mismatch for " + entries[p].name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= config_.lr * config_.weight_decay * w[i];
      m_[p][i] = config_.beta1 * m_[p][i] + (1.0 - config_.beta1) * g[i];
      v_[p][i] = config_.beta2 * v_[p][i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m_[p][i] / bc1;
      const double v_hat = v_[p][i] / bc2;
      w[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace extax
