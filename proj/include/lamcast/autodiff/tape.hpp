#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "lamcast/autodiff/tensor.hpp"

namespace lamcast::ad {

enum class OpKind : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  AddRow,
  Concat,
  SliceRows,
  Swish,
  LayerNorm,
  ScatterSum,
  GatherRows,
  Sum,
  Square,
  ReplaceRows,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode autodiff tape.
///
/// Nodes are appended in creation order, so the node list is already a
/// topological order and backward() is a single reverse sweep. Leaves
/// created with `parameter()` receive gradients; constants do not, and
/// any op whose inputs are all constants is recorded without a backward
/// closure.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& upstream)>;

  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  /// Appends an op result. `backward` is dropped when no input needs a
  /// gradient. Throws NumericError if `value` has non-finite entries.
  Var record(OpKind kind, std::vector<std::uint32_t> inputs, Tensor value,
             Backward backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  /// Gradient of the last backward() root with respect to `v`; zeros if
  /// nothing flowed into it.
  Tensor grad(Var v) const;

  /// Zero-initialised gradient accumulator of node `id`.
  Tensor& grad_buffer(std::uint32_t id);

  /// Reverse sweep from a scalar root. Clears previous gradients.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::uint32_t id) const { return nodes_[id]; }

 private:
  // A deque keeps references returned by value() valid as nodes are added.
  std::deque<Node> nodes_;
};

// Differentiable ops. All inputs must live on the same tape.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// Adds a length-n vector to every row of an m x n tensor.
Var add_row(Var a, Var row);
/// Concatenation along the last axis.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
/// Rows [begin, end) of a rank-2 tensor.
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// x * sigmoid(x).
Var swish(Var x);
inline constexpr double kLayerNormEps = 1e-5;
/// Normalises every row over the last axis, then applies gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
/// out[r] = sum of messages[e] with targets[e] == r, in ascending e order.
Var scatter_sum(Var messages, std::span<const std::uint32_t> targets,
                std::size_t n_nodes);
/// out[e] = x[index[e]].
Var gather_rows(Var x, std::span<const std::uint32_t> index);
/// Scalar sum of all entries.
Var sum(Var x);
Var square(Var x);
/// Rows with mask[r] != 0 are taken from `truth`, others from `pred`.
/// `truth` is treated as a constant: no gradient flows into it, and the
/// replaced rows pass no gradient back to `pred`.
Var replace_rows(Var pred, const Tensor& truth, std::span<const std::uint8_t> mask);

}  // namespace lamcast::ad
