#include "lamcast/autodiff/adamw.hpp"

#include <cmath>

#include "lamcast/errors.hpp"

namespace lamcast::ad {

void AdamW::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("adamw: " + std::to_string(params.size()) + " params but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  if (m_.size() != params.size()) throw DimensionError("adamw: parameter count changed");

  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (p.shape() != g.shape() || p.shape() != m_[i].shape()) {
      throw DimensionError("adamw: shape mismatch for parameter " + std::to_string(i));
    }
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= config_.lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                            config_.weight_decay * p[j]);
    }
  }
}

}  // namespace lamcast::ad
