#include <array>
#include <optional>
#include <string>

#include "lamcast/errors.hpp"
#include "lamcast/model/model.hpp"

namespace lamcast::model {

namespace {

using ad::MlpInput;

std::string lv(std::size_t l) { return std::to_string(l); }

Var embed(const BoundModel& m, const std::string& name, const Tensor& features) {
  return ad::mlp_apply(m[name], m.tape->constant(features));
}

void require_hierarchical(const LamGraph& g, bool want, const char* op) {
  const bool is = g.variant == Variant::Hierarchical;
  if (is != want) {
    throw ContractError(std::string(op) + " does not apply to a " + graph::to_string(g.variant) +
                        " graph");
  }
}

}  // namespace

StaticInputs make_static_inputs(const LamGraph& g, std::span<const double> topography) {
  StaticInputs s;
  s.grid = graph::grid_static_features(g.grid, topography);
  for (const auto& level : g.levels) s.mesh.push_back(graph::mesh_static_features(g.grid, level));
  return s;
}

Interaction interaction_step(const graph::EdgeSet& edges, Var senders, Var receivers,
                             Var edge_latents, const MlpVars& mlp_e, const MlpVars& mlp_v) {
  const std::size_t n_recv = receivers.value().rows();
  const std::size_t width = receivers.value().cols();
  if (edge_latents.value().rows() != edges.size()) {
    throw DimensionError("interaction_step: " + std::to_string(edge_latents.value().rows()) +
                         " edge latents for " + std::to_string(edges.size()) + " edges");
  }
  if (edges.size() == 0) {
    Var zeros = receivers.tape->constant(Tensor({n_recv, width}));
    const std::array<MlpInput, 2> vin{{{receivers, std::nullopt}, {zeros, std::nullopt}}};
    return {edge_latents, ad::add(receivers, ad::mlp_apply(mlp_v, vin))};
  }
  const std::array<MlpInput, 3> ein{{{edge_latents, std::nullopt},
                                     {senders, std::span<const std::uint32_t>(edges.src)},
                                     {receivers, std::span<const std::uint32_t>(edges.dst)}}};
  Var e_prime = ad::mlp_apply(mlp_e, ein);
  Var aggregated = ad::scatter_sum(e_prime, edges.dst, n_recv);
  const std::array<MlpInput, 2> vin{{{receivers, std::nullopt}, {aggregated, std::nullopt}}};
  return {ad::add(edge_latents, e_prime), ad::add(receivers, ad::mlp_apply(mlp_v, vin))};
}

LatentState embed_static(const BoundModel& m, const LamGraph& g, const StaticInputs& s) {
  check_compatible(m.config, g);
  if (s.mesh.size() != g.levels.size()) {
    throw DimensionError("static inputs have " + std::to_string(s.mesh.size()) +
                         " mesh levels, graph has " + std::to_string(g.levels.size()));
  }
  LatentState st;
  for (std::size_t l = 0; l < g.levels.size(); ++l) {
    st.mesh.push_back(embed(m, "embed.mesh" + lv(l + 1), s.mesh[l]));
    st.intra.push_back(embed(m, "embed.intra" + lv(l + 1), g.intra[l].features));
  }
  for (std::size_t l = 0; l < g.up.size(); ++l) {
    st.up.push_back(embed(m, "embed.up" + lv(l + 1), g.up[l].features));
    st.down.push_back(embed(m, "embed.down" + lv(l + 1), g.down[l].features));
  }
  st.g2m = embed(m, "embed.g2m", g.g2m.features);
  st.m2g = embed(m, "embed.m2g", g.m2g.features);
  return st;
}

Var embed_grid(const BoundModel& m, const StaticInputs& s, Var prev, Var prev2, Var forcing) {
  const std::size_t n = s.grid.rows();
  const std::size_t S = m.config.state_vars, F = m.config.forcing_features;
  auto check = [&](Var v, std::size_t cols, const char* what) {
    if (v.value().rank() != 2 || v.value().rows() != n || v.value().cols() != cols) {
      throw DimensionError(std::string("embed_grid: ") + what + " has shape " +
                           ad::to_string(v.value().shape()) + ", expected [" + std::to_string(n) +
                           ", " + std::to_string(cols) + "]");
    }
  };
  check(prev, S, "X^{t-1}");
  check(prev2, S, "X^{t-2}");
  check(forcing, 3 * F, "forcing");
  Var stat = m.tape->constant(s.grid);
  const std::array<MlpInput, 4> in{{{prev, std::nullopt},
                                    {prev2, std::nullopt},
                                    {forcing, std::nullopt},
                                    {stat, std::nullopt}}};
  return ad::mlp_apply(m["embed.grid"], in);
}

LatentState encode_inputs(const BoundModel& m, const LamGraph& g, const StaticInputs& s, Var prev,
                          Var prev2, Var forcing) {
  LatentState st = embed_static(m, g, s);
  st.grid = embed_grid(m, s, prev, prev2, forcing);
  return st;
}

namespace {

// Grid -> level-1 step shared by both encoders, including the grid
// self-update.
LatentState grid_to_mesh(LatentState st, const LamGraph& g, const BoundModel& m) {
  auto r = interaction_step(g.g2m, st.grid, st.mesh[0], st.g2m, m["g2m.edge"], m["g2m.node"]);
  st.g2m = r.edges;
  st.mesh[0] = r.receivers;
  st.grid = ad::add(st.grid, ad::mlp_apply(m["g2m.grid"], st.grid));
  return st;
}

Var mesh_to_grid(const LamGraph& g, const BoundModel& m, Var level1, Var grid, Var edges) {
  return interaction_step(g.m2g, level1, grid, edges, m["m2g.edge"], m["m2g.node"]).receivers;
}

}  // namespace

LatentState gc_encode(LatentState st, const LamGraph& g, const BoundModel& m) {
  require_hierarchical(g, false, "gc_encode");
  return grid_to_mesh(std::move(st), g, m);
}

LatentState gc_process(LatentState st, const LamGraph& g, const BoundModel& m,
                       std::size_t layers) {
  require_hierarchical(g, false, "gc_process");
  for (std::size_t k = 1; k <= layers; ++k) {
    auto r = interaction_step(g.intra[0], st.mesh[0], st.mesh[0], st.intra[0],
                              m["proc" + lv(k) + ".edge"], m["proc" + lv(k) + ".node"]);
    st.intra[0] = r.edges;
    st.mesh[0] = r.receivers;
  }
  return st;
}

Var gc_decode(const LatentState& st, const LamGraph& g, const BoundModel& m) {
  require_hierarchical(g, false, "gc_decode");
  return mesh_to_grid(g, m, st.mesh[0], st.grid, st.m2g);
}

LatentState hi_encode(LatentState st, const LamGraph& g, const BoundModel& m) {
  require_hierarchical(g, true, "hi_encode");
  st = grid_to_mesh(std::move(st), g, m);
  for (std::size_t l = 2; l <= g.levels.size(); ++l) {
    const std::string p = "encode.up" + lv(l);
    auto r = interaction_step(g.up[l - 2], st.mesh[l - 2], st.mesh[l - 1], st.up[l - 2],
                              m[p + ".edge"], m[p + ".node"]);
    st.up[l - 2] = r.edges;
    st.mesh[l - 1] = r.receivers;
  }
  return st;
}

LatentState hi_process_layer(LatentState st, const LamGraph& g, const BoundModel& m,
                             std::size_t k) {
  require_hierarchical(g, true, "hi_process_layer");
  const std::size_t L = g.levels.size();
  const std::string p = "proc" + lv(k);

  auto intra = [&](std::size_t l, const std::string& dir) {
    auto r = interaction_step(g.intra[l - 1], st.mesh[l - 1], st.mesh[l - 1], st.intra[l - 1],
                              m[p + dir + ".intra" + lv(l) + ".edge"],
                              m[p + dir + ".intra" + lv(l) + ".node"]);
    st.intra[l - 1] = r.edges;
    st.mesh[l - 1] = r.receivers;
  };

  for (std::size_t l = L; l >= 1; --l) {
    intra(l, ".down");
    if (l == 1) break;
    // down[l - 2] holds edges from level l to level l - 1.
    auto r = interaction_step(g.down[l - 2], st.mesh[l - 1], st.mesh[l - 2], st.down[l - 2],
                              m[p + ".down.inter" + lv(l) + ".edge"],
                              m[p + ".down.inter" + lv(l) + ".node"]);
    st.down[l - 2] = r.edges;
    st.mesh[l - 2] = r.receivers;
  }
  for (std::size_t l = 1; l <= L; ++l) {
    intra(l, ".up");
    if (l == L) break;
    auto r = interaction_step(g.up[l - 1], st.mesh[l - 1], st.mesh[l], st.up[l - 1],
                              m[p + ".up.inter" + lv(l) + ".edge"],
                              m[p + ".up.inter" + lv(l) + ".node"]);
    st.up[l - 1] = r.edges;
    st.mesh[l] = r.receivers;
  }
  return st;
}

Var hi_decode(const LatentState& st, const LamGraph& g, const BoundModel& m) {
  require_hierarchical(g, true, "hi_decode");
  std::vector<Var> mesh = st.mesh;
  for (std::size_t l = g.levels.size() - 1; l >= 1; --l) {
    const std::string p = "decode.down" + lv(l);
    mesh[l - 1] = interaction_step(g.down[l - 1], mesh[l], mesh[l - 1], st.down[l - 1],
                                   m[p + ".edge"], m[p + ".node"])
                      .receivers;
  }
  return mesh_to_grid(g, m, mesh[0], st.grid, st.m2g);
}

Var predict_from_latents(const BoundModel& m, const LamGraph& g, LatentState st, Var prev) {
  const std::size_t K = m.config.processor_layers();
  Var grid;
  if (g.variant == Variant::Hierarchical) {
    st = hi_encode(std::move(st), g, m);
    for (std::size_t k = 1; k <= K; ++k) st = hi_process_layer(std::move(st), g, m, k);
    grid = hi_decode(st, g, m);
  } else {
    st = gc_encode(std::move(st), g, m);
    st = gc_process(std::move(st), g, m, K);
    grid = gc_decode(st, g, m);
  }
  return ad::add(prev, ad::mlp_apply(m["pred"], grid));
}

Var predict_step(const BoundModel& m, const LamGraph& g, const StaticInputs& s, Var prev,
                 Var prev2, Var forcing) {
  return predict_from_latents(m, g, encode_inputs(m, g, s, prev, prev2, forcing), prev);
}

Var apply_boundary_forcing(Var pred, const Tensor& truth, std::span<const std::uint8_t> boundary) {
  return ad::replace_rows(pred, truth, boundary);
}

std::vector<Var> rollout(const BoundModel& m, const LamGraph& g, const StaticInputs& s,
                         const Tensor& x_prev2, const Tensor& x_prev,
                         std::span<const Tensor> forcing, std::span<const Tensor> boundary_truth,
                         std::size_t steps) {
  if (forcing.size() < steps || boundary_truth.size() < steps) {
    throw ContractError("rollout of " + std::to_string(steps) + " steps has forcing for " +
                        std::to_string(forcing.size()) + " and boundary truth for " +
                        std::to_string(boundary_truth.size()));
  }
  Tape& tape = *m.tape;
  std::vector<Var> out;
  const LatentState base = embed_static(m, g, s);
  Var p2 = tape.constant(x_prev2);
  Var p1 = tape.constant(x_prev);
  for (std::size_t t = 0; t < steps; ++t) {
    LatentState st = base;
    try {
      st.grid = embed_grid(m, s, p1, p2, tape.constant(forcing[t]));
      Var pred = predict_from_latents(m, g, std::move(st), p1);
      pred = apply_boundary_forcing(pred, boundary_truth[t], g.boundary);
      out.push_back(pred);
      p2 = p1;
      p1 = pred;
    } catch (const NumericError& e) {
      throw NumericError("rollout step " + std::to_string(t + 1) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Tensor> forecast(const ModelParams& p, const LamGraph& g, const StaticInputs& s,
                             const Tensor& x_prev2, const Tensor& x_prev,
                             std::span<const Tensor> forcing,
                             std::span<const Tensor> boundary_truth, std::size_t steps) {
  if (forcing.size() < steps || boundary_truth.size() < steps) {
    throw ContractError("forecast of " + std::to_string(steps) + " steps lacks forcing or truth");
  }
  std::vector<Tensor> out;
  Tensor p2 = x_prev2, p1 = x_prev;
  for (std::size_t t = 0; t < steps; ++t) {
    Tape tape;
    BoundModel m = bind_model(tape, p, false);
    Tensor next;
    try {
      next = rollout(m, g, s, p2, p1, forcing.subspan(t, 1), boundary_truth.subspan(t, 1), 1)[0]
                 .value();
    } catch (const NumericError& e) {
      throw NumericError("forecast step " + std::to_string(t + 1) + ": " + e.what());
    }
    p2 = std::move(p1);
    p1 = next;
    out.push_back(std::move(next));
  }
  return out;
}

}  // namespace lamcast::model
