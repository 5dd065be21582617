#include "lamcast/autodiff/tape.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "lamcast/errors.hpp"

namespace lamcast::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::AddRow: return "add_row";
    case OpKind::Concat: return "concat";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::Swish: return "swish";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::ScatterSum: return "scatter_sum";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::Sum: return "sum";
    case OpKind::Square: return "square";
    case OpKind::ReplaceRows: return "replace_rows";
  }
  return "?";
}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  return record(OpKind::Leaf, {}, std::move(value), nullptr);
}

Var Tape::parameter(Tensor value) {
  Var v = record(OpKind::Leaf, {}, std::move(value), nullptr);
  nodes_[v.id].requires_grad = true;
  return v;
}

Var Tape::record(OpKind kind, std::vector<std::uint32_t> inputs, Tensor value,
                 Backward backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name(kind) +
                       " (node " + std::to_string(nodes_.size()) + ")");
  }
  Node node;
  node.kind = kind;
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::uint32_t i) {
    return nodes_[i].requires_grad;
  });
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Tensor& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw ContractError("backward root belongs to another tape");
  if (nodes_[root.id].value.size() != 1) {
    throw ContractError("backward root must be scalar, got shape " +
                        to_string(nodes_[root.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(root.id)[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError("operands recorded on different tapes");
  }
  return *a.tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         to_string(a.shape()));
  }
}

// c (m x n) = alpha * op(a) * op(b) + beta * c, row-major.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double beta, double* c) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (beta == 0.0) std::fill(c, c + m * n, 0.0);
    return;
  }
  const auto lda = static_cast<int>(ta ? m : k);
  const auto ldb = static_cast<int>(tb ? k : n);
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a, lda, b,
              ldb, beta, c, static_cast<int>(n));
}

void axpy_into(Tensor& dst, const Tensor& src, double alpha = 1.0) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += alpha * s[i];
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  if (bv.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree " + to_string(av.shape()) +
                         " x " + to_string(bv.shape()));
  }
  Tensor out({m, n});
  gemm(false, false, m, n, k, av.data(), bv.data(), 0.0, out.data());
  const auto ia = a.id, ib = b.id;
  return t.record(OpKind::MatMul, {ia, ib}, std::move(out),
                  [ia, ib, m, n, k](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia)) {
                      gemm(false, true, m, k, n, g.data(), tp.node(ib).value.data(), 1.0,
                           tp.grad_buffer(ia).data());
                    }
                    if (tp.requires_grad(ib)) {
                      gemm(true, false, k, n, m, tp.node(ia).value.data(), g.data(), 1.0,
                           tp.grad_buffer(ib).data());
                    }
                  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "add");
  Tensor out = av;
  axpy_into(out, bv);
  const auto ia = a.id, ib = b.id;
  return t.record(OpKind::Add, {ia, ib}, std::move(out), [ia, ib](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(ia)) axpy_into(tp.grad_buffer(ia), g);
    if (tp.requires_grad(ib)) axpy_into(tp.grad_buffer(ib), g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  axpy_into(out, bv, -1.0);
  const auto ia = a.id, ib = b.id;
  return t.record(OpKind::Sub, {ia, ib}, std::move(out), [ia, ib](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(ia)) axpy_into(tp.grad_buffer(ia), g);
    if (tp.requires_grad(ib)) axpy_into(tp.grad_buffer(ib), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id, ib = b.id;
  return t.record(OpKind::Mul, {ia, ib}, std::move(out), [ia, ib](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.node(ia).value;
    const Tensor& y = tp.node(ib).value;
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (double& v : out.values()) v *= c;
  const auto ia = a.id;
  return t.record(OpKind::Scale, {ia}, std::move(out), [ia, c](Tape& tp, const Tensor& g) {
    axpy_into(tp.grad_buffer(ia), g, c);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  const Tensor& av = t.value(a);
  const Tensor& rv = t.value(row);
  const std::size_t n = av.cols();
  if (rv.size() != n) {
    throw DimensionError("add_row: row of size " + std::to_string(rv.size()) +
                         " for tensor " + to_string(av.shape()));
  }
  Tensor out = av;
  const std::size_t m = out.rows();
  for (std::size_t r = 0; r < m; ++r) {
    double* o = out.data() + r * n;
    for (std::size_t c = 0; c < n; ++c) o[c] += rv[c];
  }
  const auto ia = a.id, ir = row.id;
  return t.record(OpKind::AddRow, {ia, ir}, std::move(out),
                  [ia, ir, m, n](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia)) axpy_into(tp.grad_buffer(ia), g);
                    if (tp.requires_grad(ir)) {
                      Tensor& gr = tp.grad_buffer(ir);
                      for (std::size_t r = 0; r < m; ++r) {
                        const double* gi = g.data() + r * n;
                        for (std::size_t c = 0; c < n; ++c) gr[c] += gi[c];
                      }
                    }
                  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  Tape& t = *parts[0].tape;
  const Tensor& first = t.value(parts[0]);
  Shape lead(first.shape().begin(), first.shape().end() - (first.rank() ? 1 : 0));
  std::vector<std::size_t> widths;
  std::vector<std::uint32_t> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    const Tensor& v = t.value(p);
    Shape pl(v.shape().begin(), v.shape().end() - (v.rank() ? 1 : 0));
    if (pl != lead || v.rank() == 0) {
      throw DimensionError("concat: incompatible shapes " + to_string(first.shape()) +
                           " and " + to_string(v.shape()));
    }
    widths.push_back(v.cols());
    ids.push_back(p.id);
    total += v.cols();
  }
  Shape shape = lead;
  shape.push_back(total);
  Tensor out(shape);
  const std::size_t m = out.rows();
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = t.value(parts[p]);
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(v.data() + r * widths[p], widths[p], out.data() + r * total + offset);
    }
    offset += widths[p];
  }
  return t.record(OpKind::Concat, ids, std::move(out),
                  [ids, widths, m, total](Tape& tp, const Tensor& g) {
                    std::size_t off = 0;
                    for (std::size_t p = 0; p < ids.size(); ++p) {
                      if (tp.requires_grad(ids[p])) {
                        Tensor& gp = tp.grad_buffer(ids[p]);
                        for (std::size_t r = 0; r < m; ++r) {
                          const double* src = g.data() + r * total + off;
                          double* dst = gp.data() + r * widths[p];
                          for (std::size_t c = 0; c < widths[p]; ++c) dst[c] += src[c];
                        }
                      }
                      off += widths[p];
                    }
                  });
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require_rank2(av, "slice_rows");
  if (begin > end || end > av.shape()[0]) {
    throw IndexError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + to_string(av.shape()));
  }
  const std::size_t n = av.shape()[1];
  Tensor out({end - begin, n});
  std::copy_n(av.data() + begin * n, (end - begin) * n, out.data());
  const auto ia = a.id;
  return t.record(OpKind::SliceRows, {ia}, std::move(out),
                  [ia, begin, end, n](Tape& tp, const Tensor& g) {
                    double* ga = tp.grad_buffer(ia).data() + begin * n;
                    for (std::size_t i = 0; i < (end - begin) * n; ++i) ga[i] += g[i];
                  });
}

Var swish(Var x) {
  Tape& t = *x.tape;
  Tensor out = t.value(x);
  for (double& v : out.values()) v = v * sigmoid(v);
  const auto ix = x.id;
  return t.record(OpKind::Swish, {ix}, std::move(out), [ix](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.node(ix).value;
    Tensor& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid(xv[i]);
      gx[i] += g[i] * (s + xv[i] * s * (1.0 - s));
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = same_tape(x, gain);
  same_tape(x, bias);
  const Tensor& xv = t.value(x);
  const std::size_t d = xv.rank() ? xv.cols() : 0;
  if (d == 0) throw DimensionError("layer_norm: zero-width input");
  if (t.value(gain).size() != d || t.value(bias).size() != d) {
    throw DimensionError("layer_norm: gain/bias width does not match " +
                         to_string(xv.shape()));
  }
  const std::size_t m = xv.rows();
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  Tensor xhat(xv.shape());
  std::vector<double> rstd(m);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* xi = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += xi[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xi[c] - mean) * (xi[c] - mean);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = rs;
    double* hi = xhat.data() + r * d;
    double* oi = out.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) {
      hi[c] = (xi[c] - mean) * rs;
      oi[c] = hi[c] * gv[c] + bv[c];
    }
  }
  const auto ix = x.id, ig = gain.id, ib = bias.id;
  return t.record(
      OpKind::LayerNorm, {ix, ig, ib}, std::move(out),
      [ix, ig, ib, m, d, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& tp,
                                                                        const Tensor& g) {
        const Tensor& gv = tp.node(ig).value;
        if (tp.requires_grad(ig)) {
          Tensor& gg = tp.grad_buffer(ig);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < d; ++c) gg[c] += g[r * d + c] * xhat[r * d + c];
        }
        if (tp.requires_grad(ib)) {
          Tensor& gb = tp.grad_buffer(ib);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
        }
        if (tp.requires_grad(ix)) {
          Tensor& gx = tp.grad_buffer(ix);
          std::vector<double> dxhat(d);
          for (std::size_t r = 0; r < m; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              dxhat[c] = g[r * d + c] * gv[c];
              mean_d += dxhat[c];
              mean_dx += dxhat[c] * xhat[r * d + c];
            }
            mean_d /= static_cast<double>(d);
            mean_dx /= static_cast<double>(d);
            for (std::size_t c = 0; c < d; ++c) {
              gx[r * d + c] += rstd[r] * (dxhat[c] - mean_d - xhat[r * d + c] * mean_dx);
            }
          }
        }
      });
}

Var scatter_sum(Var messages, std::span<const std::uint32_t> targets,
                std::size_t n_nodes) {
  Tape& t = *messages.tape;
  const Tensor& mv = t.value(messages);
  require_rank2(mv, "scatter_sum");
  const std::size_t e_count = mv.shape()[0], d = mv.shape()[1];
  if (targets.size() != e_count) {
    throw DimensionError("scatter_sum: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(e_count) + " messages");
  }
  Tensor out({n_nodes, d});
  for (std::size_t e = 0; e < e_count; ++e) {
    const std::uint32_t r = targets[e];
    if (r >= n_nodes) {
      throw IndexError("scatter_sum: target " + std::to_string(r) + " >= " +
                       std::to_string(n_nodes));
    }
    const double* src = mv.data() + e * d;
    double* dst = out.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  const auto im = messages.id;
  return t.record(OpKind::ScatterSum, {im}, std::move(out),
                  [im, targets = std::vector<std::uint32_t>(targets.begin(), targets.end()),
                   e_count, d](Tape& tp, const Tensor& g) {
                    Tensor& gm = tp.grad_buffer(im);
                    for (std::size_t e = 0; e < e_count; ++e) {
                      const double* src = g.data() + targets[e] * d;
                      double* dst = gm.data() + e * d;
                      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                    }
                  });
}

Var gather_rows(Var x, std::span<const std::uint32_t> index) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  require_rank2(xv, "gather_rows");
  const std::size_t n = xv.shape()[0], d = xv.shape()[1];
  Tensor out({index.size(), d});
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= n) {
      throw IndexError("gather_rows: index " + std::to_string(index[e]) + " >= " +
                       std::to_string(n));
    }
    std::copy_n(xv.data() + index[e] * d, d, out.data() + e * d);
  }
  const auto ix = x.id;
  return t.record(OpKind::GatherRows, {ix}, std::move(out),
                  [ix, index = std::vector<std::uint32_t>(index.begin(), index.end()), d](
                      Tape& tp, const Tensor& g) {
                    Tensor& gx = tp.grad_buffer(ix);
                    for (std::size_t e = 0; e < index.size(); ++e) {
                      const double* src = g.data() + e * d;
                      double* dst = gx.data() + index[e] * d;
                      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                    }
                  });
}

Var sum(Var x) {
  Tape& t = *x.tape;
  double s = 0.0;
  for (double v : t.value(x).values()) s += v;
  const auto ix = x.id;
  return t.record(OpKind::Sum, {ix}, Tensor::scalar(s), [ix](Tape& tp, const Tensor& g) {
    const double gs = g[0];
    for (double& v : tp.grad_buffer(ix).values()) v += gs;
  });
}

Var square(Var x) {
  Tape& t = *x.tape;
  Tensor out = t.value(x);
  for (double& v : out.values()) v *= v;
  const auto ix = x.id;
  return t.record(OpKind::Square, {ix}, std::move(out), [ix](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.node(ix).value;
    Tensor& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
  });
}

Var replace_rows(Var pred, const Tensor& truth, std::span<const std::uint8_t> mask) {
  Tape& t = *pred.tape;
  const Tensor& pv = t.value(pred);
  require_same_shape(pv, truth, "replace_rows");
  const std::size_t m = pv.rows(), d = pv.cols();
  if (mask.size() != m) {
    throw DimensionError("replace_rows: mask of length " + std::to_string(mask.size()) +
                         " for " + std::to_string(m) + " rows");
  }
  Tensor out = pv;
  for (std::size_t r = 0; r < m; ++r) {
    if (mask[r]) std::copy_n(truth.data() + r * d, d, out.data() + r * d);
  }
  const auto ip = pred.id;
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return t.record(OpKind::ReplaceRows, {ip}, std::move(out),
                  [ip, keep = std::move(keep), d](Tape& tp, const Tensor& g) {
                    Tensor& gp = tp.grad_buffer(ip);
                    for (std::size_t r = 0; r < keep.size(); ++r) {
                      if (keep[r]) continue;
                      for (std::size_t c = 0; c < d; ++c) gp[r * d + c] += g[r * d + c];
                    }
                  });
}

}  // namespace lamcast::ad
