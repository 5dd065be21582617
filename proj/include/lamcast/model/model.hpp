#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lamcast/autodiff/container.hpp"
#include "lamcast/autodiff/nn.hpp"
#include "lamcast/graph/graph.hpp"

namespace lamcast::model {

using ad::MlpParams;
using ad::MlpVars;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using graph::LamGraph;
using graph::Variant;

inline constexpr std::size_t kGridStaticWidth = 4;
inline constexpr std::size_t kMeshStaticWidth = 2;
inline constexpr std::size_t kEdgeFeatureWidth = 3;

struct ModelConfig {
  Variant variant = Variant::Multiscale;
  std::size_t latent = 64;
  /// Processor layers; 0 picks the default (4 for multiscale/single, 2 for
  /// hierarchical).
  std::size_t layers = 0;
  /// Mesh levels the model is built for (graph.levels.size()).
  std::size_t levels = 1;
  std::size_t state_vars = 3;
  std::size_t forcing_features = 6;

  std::size_t processor_layers() const;
  /// 2S + 3F + static grid features.
  std::size_t grid_input_width() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Config matching a graph, with the remaining fields taken from `base`.
ModelConfig config_for(const LamGraph& g, ModelConfig base);

/// All MLPs of a model, keyed by name. Iteration order (sorted names) is
/// the canonical parameter order.
struct ModelParams {
  ModelConfig config;
  std::map<std::string, MlpParams> mlps;

  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  const MlpParams& at(const std::string& name) const;
  /// Every parameter tensor in canonical order.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Names of every MLP the config requires, in construction order.
std::vector<std::string> mlp_names(const ModelConfig& config);

/// Zeroes the last linear layer of every MLP, or only of the prediction
/// head when `head_only` is set.
void zero_final_layers(ModelParams& p, bool head_only = false);

struct BoundModel {
  ModelConfig config;
  Tape* tape = nullptr;
  std::map<std::string, MlpVars> mlps;
  /// Tape ids of the parameter leaves in canonical order.
  std::vector<Var> leaves;

  const MlpVars& operator[](const std::string& name) const;
};

BoundModel bind_model(Tape& tape, const ModelParams& p, bool trainable = true);

/// Static inputs of the forward pass, computed once per graph.
struct StaticInputs {
  Tensor grid;               // N x 4
  std::vector<Tensor> mesh;  // per level, n_l x 2
};

StaticInputs make_static_inputs(const LamGraph& g, std::span<const double> topography);

struct LatentState {
  Var grid;
  std::vector<Var> mesh;  // per level
  Var g2m, m2g;
  std::vector<Var> intra;  // per level
  std::vector<Var> up;     // up[l]: level l -> l + 1 (0-based)
  std::vector<Var> down;   // down[l]: level l + 1 -> l
};

struct Interaction {
  Var edges;
  Var receivers;
};

/// One interaction-network step over `edges`:
///   e' = mlp_e([e, h_s, h_r]);  e <- e + e';  h_r <- h_r + mlp_v([h_r, sum e'])
/// Receivers without incoming edges aggregate the zero vector.
Interaction interaction_step(const graph::EdgeSet& edges, Var senders, Var receivers, Var edge_latents,
                             const MlpVars& mlp_e, const MlpVars& mlp_v);

/// Mesh-node and edge embeddings; they depend only on parameters and the
/// graph, so a rollout computes them once.
LatentState embed_static(const BoundModel& m, const LamGraph& g, const StaticInputs& s);

/// Grid-node embedding of [X^{t-1}, X^{t-2}, forcing, static].
Var embed_grid(const BoundModel& m, const StaticInputs& s, Var prev, Var prev2, Var forcing);

LatentState encode_inputs(const BoundModel& m, const LamGraph& g, const StaticInputs& s, Var prev,
                          Var prev2, Var forcing);

LatentState gc_encode(LatentState st, const LamGraph& g, const BoundModel& m);
LatentState gc_process(LatentState st, const LamGraph& g, const BoundModel& m, std::size_t layers);
Var gc_decode(const LatentState& st, const LamGraph& g, const BoundModel& m);

LatentState hi_encode(LatentState st, const LamGraph& g, const BoundModel& m);
/// Layer `k` is 1-based.
LatentState hi_process_layer(LatentState st, const LamGraph& g, const BoundModel& m, std::size_t k);
Var hi_decode(const LatentState& st, const LamGraph& g, const BoundModel& m);

/// X^{t-1} + pred(decoded grid latents), from an already embedded state.
Var predict_from_latents(const BoundModel& m, const LamGraph& g, LatentState st, Var prev);

/// One model step: X_hat^t (N x S, normalised units). `forcing` is the
/// N x 3F block for the three forcing times.
Var predict_step(const BoundModel& m, const LamGraph& g, const StaticInputs& s, Var prev, Var prev2,
                 Var forcing);

/// Rows in the boundary set take `truth`, as constants.
Var apply_boundary_forcing(Var pred, const Tensor& truth, std::span<const std::uint8_t> boundary);

/// Autoregressive rollout from (X^{t0-1}, X^{t0}). `forcing[t]` and
/// `boundary_truth[t]` belong to target step t0 + 1 + t. Each output is
/// boundary forced before it is fed back.
std::vector<Var> rollout(const BoundModel& m, const LamGraph& g, const StaticInputs& s,
                         const Tensor& x_prev2, const Tensor& x_prev,
                         std::span<const Tensor> forcing, std::span<const Tensor> boundary_truth,
                         std::size_t steps);

/// Gradient-free rollout using a fresh tape per step, for evaluation.
std::vector<Tensor> forecast(const ModelParams& p, const LamGraph& g, const StaticInputs& s,
                             const Tensor& x_prev2, const Tensor& x_prev,
                             std::span<const Tensor> forcing,
                             std::span<const Tensor> boundary_truth, std::size_t steps);

/// Checks that the graph matches the config (variant, levels, sizes).
void check_compatible(const ModelConfig& c, const LamGraph& g);

void write_params(ad::Container& c, const ModelParams& p);
ModelParams read_params(const ad::Container& c);

}  // namespace lamcast::model
