#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lamcast/autodiff/tensor.hpp"

namespace lamcast::ad {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled-weight-decay Adam.
///
/// param <- param - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * param)
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// Updates `params` in place. Moments are created on the first call and
  /// must keep the same shapes afterwards.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

  std::uint64_t steps() const { return t_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamWConfig config_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace lamcast::ad
