#pragma once

// Central finite-difference oracle used to check reverse-mode gradients.
// It only evaluates the forward function, so it stays independent of the
// backward closures it is checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "lamcast/autodiff/tape.hpp"

namespace lamcast::testing {

using ad::Tape;
using ad::Tensor;
using ad::Var;

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

inline double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

inline std::vector<Tensor> numeric_gradients(const ScalarFn& f, std::vector<Tensor> inputs,
                                             double h = 1e-5) {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor g(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      inputs[k][i] = x0 + h;
      const double fp = evaluate(f, inputs);
      inputs[k][i] = x0 - h;
      const double fm = evaluate(f, inputs);
      inputs[k][i] = x0;
      g[i] = (fp - fm) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<Tensor> analytic_gradients(const ScalarFn& f,
                                              const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.parameter(t));
  Var loss = f(tape, vars);
  tape.backward(loss);
  std::vector<Tensor> out;
  for (Var v : vars) out.push_back(tape.grad(v));
  return out;
}

/// ||a - b|| / max(||a||, ||b||), with a tiny floor for all-zero gradients.
inline double relative_error(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      diff += (a[k][i] - b[k][i]) * (a[k][i] - b[k][i]);
      na += a[k][i] * a[k][i];
      nb += b[k][i] * b[k][i];
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

inline double gradient_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                             double h = 1e-5) {
  return relative_error(analytic_gradients(f, inputs), numeric_gradients(f, inputs, h));
}

inline Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = d(rng);
  return t;
}

}  // namespace lamcast::testing
