#pragma once

// Loop-based forward pass written straight from the update equations, with
// no tape, no fused MLP blocks and no BLAS. Used as an oracle for the model.

#include <cmath>
#include <string>
#include <vector>

#include "lamcast/model/model.hpp"

namespace lamcast::testing {

using Rows = std::vector<std::vector<double>>;

inline Rows to_rows(const ad::Tensor& t) {
  Rows r(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) r[i][j] = t.at(i, j);
  return r;
}

inline ad::Tensor from_rows(const Rows& r) {
  ad::Tensor t({r.size(), r.empty() ? 0 : r[0].size()});
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j) t.at(i, j) = r[i][j];
  return t;
}

inline std::vector<double> ref_mlp_row(const ad::MlpParams& p, const std::vector<double>& x) {
  const std::size_t in = p.w1.shape()[0], hid = p.w1.shape()[1], out = p.w2.shape()[1];
  std::vector<double> h(hid), y(out);
  for (std::size_t j = 0; j < hid; ++j) {
    double a = p.b1[j];
    for (std::size_t i = 0; i < in; ++i) a += x[i] * p.w1.at(i, j);
    h[j] = a / (1.0 + std::exp(-a));
  }
  for (std::size_t j = 0; j < out; ++j) {
    double a = p.b2[j];
    for (std::size_t i = 0; i < hid; ++i) a += h[i] * p.w2.at(i, j);
    y[j] = a;
  }
  if (p.layer_norm) {
    double mean = 0.0, var = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(out);
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(out);
    const double inv = 1.0 / std::sqrt(var + ad::kLayerNormEps);
    for (std::size_t j = 0; j < out; ++j) y[j] = (y[j] - mean) * inv * p.ln_gain[j] + p.ln_bias[j];
  }
  return y;
}

inline Rows ref_mlp(const ad::MlpParams& p, const Rows& x) {
  Rows out;
  for (const auto& row : x) out.push_back(ref_mlp_row(p, row));
  return out;
}

inline std::vector<double> cat(std::initializer_list<std::vector<double>> parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

struct RefInteraction {
  Rows edges;
  Rows receivers;
};

inline RefInteraction ref_interaction(const graph::EdgeSet& es, const Rows& senders,
                                      const Rows& receivers, const Rows& edges,
                                      const ad::MlpParams& mlp_e, const ad::MlpParams& mlp_v) {
  const std::size_t width = receivers.empty() ? 0 : receivers[0].size();
  Rows e_prime(es.size());
  for (std::size_t k = 0; k < es.size(); ++k) {
    e_prime[k] = ref_mlp_row(mlp_e, cat({edges[k], senders[es.src[k]], receivers[es.dst[k]]}));
  }
  Rows agg(receivers.size(), std::vector<double>(width, 0.0));
  for (std::size_t k = 0; k < es.size(); ++k)
    for (std::size_t j = 0; j < width; ++j) agg[es.dst[k]][j] += e_prime[k][j];
  RefInteraction r{edges, receivers};
  for (std::size_t k = 0; k < es.size(); ++k)
    for (std::size_t j = 0; j < width; ++j) r.edges[k][j] += e_prime[k][j];
  for (std::size_t n = 0; n < receivers.size(); ++n) {
    auto upd = ref_mlp_row(mlp_v, cat({receivers[n], agg[n]}));
    for (std::size_t j = 0; j < width; ++j) r.receivers[n][j] += upd[j];
  }
  return r;
}

inline ad::Tensor ref_predict(const model::ModelParams& p, const graph::LamGraph& g,
                              const model::StaticInputs& s, const ad::Tensor& prev,
                              const ad::Tensor& prev2, const ad::Tensor& forcing) {
  auto M = [&](const std::string& n) -> const ad::MlpParams& { return p.at(n); };
  auto L = g.levels.size();
  auto num = [](std::size_t l) { return std::to_string(l); };

  Rows grid_in;
  const Rows xp = to_rows(prev), xp2 = to_rows(prev2), fc = to_rows(forcing), st = to_rows(s.grid);
  for (std::size_t i = 0; i < xp.size(); ++i) grid_in.push_back(cat({xp[i], xp2[i], fc[i], st[i]}));
  Rows grid = ref_mlp(M("embed.grid"), grid_in);

  std::vector<Rows> mesh, intra, up, down;
  for (std::size_t l = 0; l < L; ++l) {
    mesh.push_back(ref_mlp(M("embed.mesh" + num(l + 1)), to_rows(s.mesh[l])));
    intra.push_back(ref_mlp(M("embed.intra" + num(l + 1)), to_rows(g.intra[l].features)));
  }
  for (std::size_t l = 0; l + 1 < L && g.variant == graph::Variant::Hierarchical; ++l) {
    up.push_back(ref_mlp(M("embed.up" + num(l + 1)), to_rows(g.up[l].features)));
    down.push_back(ref_mlp(M("embed.down" + num(l + 1)), to_rows(g.down[l].features)));
  }
  Rows g2m = ref_mlp(M("embed.g2m"), to_rows(g.g2m.features));
  Rows m2g = ref_mlp(M("embed.m2g"), to_rows(g.m2g.features));

  // Encoder: edge messages use the grid latents from before the self-update.
  auto enc = ref_interaction(g.g2m, grid, mesh[0], g2m, M("g2m.edge"), M("g2m.node"));
  mesh[0] = enc.receivers;
  {
    Rows self = ref_mlp(M("g2m.grid"), grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
      for (std::size_t j = 0; j < grid[i].size(); ++j) grid[i][j] += self[i][j];
  }

  const std::size_t K = p.config.processor_layers();
  if (g.variant != graph::Variant::Hierarchical) {
    for (std::size_t k = 1; k <= K; ++k) {
      auto r = ref_interaction(g.intra[0], mesh[0], mesh[0], intra[0],
                               M("proc" + num(k) + ".edge"), M("proc" + num(k) + ".node"));
      intra[0] = r.edges;
      mesh[0] = r.receivers;
    }
  } else {
    // Up through the hierarchy: level l receives from l - 1 (1-based).
    for (std::size_t l = 2; l <= L; ++l) {
      auto r = ref_interaction(g.up[l - 2], mesh[l - 2], mesh[l - 1], up[l - 2],
                               M("encode.up" + num(l) + ".edge"), M("encode.up" + num(l) + ".node"));
      up[l - 2] = r.edges;
      mesh[l - 1] = r.receivers;
    }
    for (std::size_t k = 1; k <= K; ++k) {
      const std::string pk = "proc" + num(k);
      for (std::size_t l = L; l >= 1; --l) {
        auto a = ref_interaction(g.intra[l - 1], mesh[l - 1], mesh[l - 1], intra[l - 1],
                                 M(pk + ".down.intra" + num(l) + ".edge"),
                                 M(pk + ".down.intra" + num(l) + ".node"));
        intra[l - 1] = a.edges;
        mesh[l - 1] = a.receivers;
        if (l > 1) {
          auto b = ref_interaction(g.down[l - 2], mesh[l - 1], mesh[l - 2], down[l - 2],
                                   M(pk + ".down.inter" + num(l) + ".edge"),
                                   M(pk + ".down.inter" + num(l) + ".node"));
          down[l - 2] = b.edges;
          mesh[l - 2] = b.receivers;
        }
      }
      for (std::size_t l = 1; l <= L; ++l) {
        auto a = ref_interaction(g.intra[l - 1], mesh[l - 1], mesh[l - 1], intra[l - 1],
                                 M(pk + ".up.intra" + num(l) + ".edge"),
                                 M(pk + ".up.intra" + num(l) + ".node"));
        intra[l - 1] = a.edges;
        mesh[l - 1] = a.receivers;
        if (l < L) {
          auto b = ref_interaction(g.up[l - 1], mesh[l - 1], mesh[l], up[l - 1],
                                   M(pk + ".up.inter" + num(l) + ".edge"),
                                   M(pk + ".up.inter" + num(l) + ".node"));
          up[l - 1] = b.edges;
          mesh[l] = b.receivers;
        }
      }
    }
    for (std::size_t l = L - 1; l >= 1; --l) {
      mesh[l - 1] = ref_interaction(g.down[l - 1], mesh[l], mesh[l - 1], down[l - 1],
                                    M("decode.down" + num(l) + ".edge"),
                                    M("decode.down" + num(l) + ".node"))
                        .receivers;
    }
  }
  grid = ref_interaction(g.m2g, mesh[0], grid, m2g, M("m2g.edge"), M("m2g.node")).receivers;

  Rows delta = ref_mlp(M("pred"), grid);
  Rows out = xp;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) out[i][j] += delta[i][j];
  return from_rows(out);
}

}  // namespace lamcast::testing
