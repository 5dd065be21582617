#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "lamcast/autodiff/tape.hpp"

namespace lamcast::ad {

/// One-hidden-layer MLP: linear -> swish -> linear [-> layer_norm].
struct MlpParams {
  Tensor w1;  // in x hidden
  Tensor b1;  // hidden
  Tensor w2;  // hidden x out
  Tensor b2;  // out
  Tensor ln_gain;
  Tensor ln_bias;
  bool layer_norm = true;

  std::size_t in_width() const { return w1.rank() ? w1.shape()[0] : 0; }
  std::size_t hidden_width() const { return w1.rank() ? w1.shape()[1] : 0; }
  std::size_t out_width() const { return w2.rank() ? w2.shape()[1] : 0; }

  /// Glorot-uniform weights, zero biases, unit gain. `final_scale`
  /// multiplies the second weight matrix.
  static MlpParams init(std::size_t in, std::size_t hidden, std::size_t out,
                        bool layer_norm, std::mt19937_64& rng, double final_scale = 1.0);

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// MlpParams registered on a tape.
struct MlpVars {
  Var w1, b1, w2, b2, ln_gain, ln_bias;
  bool layer_norm = true;
  std::size_t in_width = 0;
};

/// Registers the weights of `p` as parameter leaves (or constants when
/// `trainable` is false).
MlpVars bind(Tape& tape, const MlpParams& p, bool trainable = true);

Var mlp_apply(const MlpVars& p, Var x);

/// A block of the (virtually concatenated) MLP input. When `rows` is set,
/// the block is `x` gathered by that index; the first layer is applied to
/// `x` before gathering, which is cheaper when x has fewer rows than the
/// output.
struct MlpInput {
  Var x;
  std::optional<std::span<const std::uint32_t>> rows;
};

/// Equivalent to mlp_apply(p, concat(gathered inputs)).
Var mlp_apply(const MlpVars& p, std::span<const MlpInput> inputs);

}  // namespace lamcast::ad
