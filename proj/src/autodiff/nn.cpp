#include "lamcast/autodiff/nn.hpp"

#include <cmath>
#include <string>

#include "lamcast/errors.hpp"

namespace lamcast::ad {

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng,
              double scale) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({fan_in, fan_out});
  for (double& v : w.values()) v = scale * dist(rng);
  return w;
}

}  // namespace

MlpParams MlpParams::init(std::size_t in, std::size_t hidden, std::size_t out,
                          bool layer_norm, std::mt19937_64& rng, double final_scale) {
  MlpParams p;
  p.w1 = glorot(in, hidden, rng, 1.0);
  p.b1 = Tensor({hidden});
  p.w2 = glorot(hidden, out, rng, final_scale);
  p.b2 = Tensor({out});
  p.layer_norm = layer_norm;
  if (layer_norm) {
    p.ln_gain = Tensor({out}, 1.0);
    p.ln_bias = Tensor({out});
  }
  return p;
}

MlpVars bind(Tape& tape, const MlpParams& p, bool trainable) {
  auto leaf = [&](const Tensor& t) {
    return trainable ? tape.parameter(t) : tape.constant(t);
  };
  MlpVars v;
  v.w1 = leaf(p.w1);
  v.b1 = leaf(p.b1);
  v.w2 = leaf(p.w2);
  v.b2 = leaf(p.b2);
  v.layer_norm = p.layer_norm;
  v.in_width = p.in_width();
  if (p.layer_norm) {
    v.ln_gain = leaf(p.ln_gain);
    v.ln_bias = leaf(p.ln_bias);
  }
  return v;
}

namespace {

Var finish(const MlpVars& p, Var pre_activation) {
  Var h = swish(add_row(pre_activation, p.b1));
  Var out = add_row(matmul(h, p.w2), p.b2);
  if (p.layer_norm) out = layer_norm(out, p.ln_gain, p.ln_bias);
  return out;
}

}  // namespace

Var mlp_apply(const MlpVars& p, Var x) {
  if (x.value().cols() != p.in_width) {
    throw DimensionError("mlp_apply: input width " + std::to_string(x.value().cols()) +
                         " but MLP expects " + std::to_string(p.in_width));
  }
  return finish(p, matmul(x, p.w1));
}

Var mlp_apply(const MlpVars& p, std::span<const MlpInput> inputs) {
  if (inputs.empty()) throw DimensionError("mlp_apply: no inputs");
  std::size_t width = 0;
  for (const auto& in : inputs) width += in.x.value().cols();
  if (width != p.in_width) {
    throw DimensionError("mlp_apply: concatenated input width " + std::to_string(width) +
                         " but MLP expects " + std::to_string(p.in_width));
  }
  std::optional<Var> acc;
  std::optional<std::size_t> out_rows;
  std::size_t offset = 0;
  for (const auto& in : inputs) {
    const std::size_t w = in.x.value().cols();
    Var block = matmul(in.x, slice_rows(p.w1, offset, offset + w));
    offset += w;
    if (in.rows) block = gather_rows(block, *in.rows);
    const std::size_t r = block.value().rows();
    if (out_rows && *out_rows != r) {
      throw DimensionError("mlp_apply: input blocks disagree on row count");
    }
    out_rows = r;
    acc = acc ? add(*acc, block) : block;
  }
  return finish(p, *acc);
}

}  // namespace lamcast::ad
