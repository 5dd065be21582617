#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "lamcast/data/data.hpp"
#include "lamcast/model/model.hpp"

namespace lamcast::train {

using ad::Tensor;
using ad::Var;
using data::Dataset;
using data::NormStats;
using model::ModelParams;

inline constexpr std::size_t kPhase1Epochs = 50;
inline constexpr std::size_t kPhase2Epochs = 20;
inline constexpr std::size_t kPhase2Rollout = 4;

struct TrainConfig {
  std::size_t batch = 8;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t epochs = kPhase1Epochs;
  std::size_t rollout = 1;
  std::uint64_t seed = 0;
  data::EpochSampler::Mode sampling = data::EpochSampler::Mode::RandomOffset;
  /// Global gradient-norm clip; 0 disables it.
  double clip_norm = 0.0;
  /// Checkpoint every this many epochs (and at the end) when a path is set.
  std::size_t checkpoint_every = 10;
  std::filesystem::path checkpoint;
  /// Appends "epoch,loss" rows when set.
  std::filesystem::path loss_csv;
  std::size_t phase = 1;

  /// Throws ConfigError on invalid settings.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::size_t samples = 0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> curve;
};

/// Mean over steps and non-boundary nodes of the lambda * omega weighted
/// sum over variables of squared errors. Throws ContractError when every
/// node is a boundary node.
Var weighted_mse_loss(std::span<const Var> predictions, std::span<const Tensor> targets,
                      std::span<const double> lambda, std::span<const double> omega,
                      std::span<const std::uint8_t> boundary);

/// Same quantity without a tape.
double weighted_mse(std::span<const Tensor> predictions, std::span<const Tensor> targets,
                    std::span<const double> lambda, std::span<const double> omega,
                    std::span<const std::uint8_t> boundary);

/// Loss of one sample and its parameter gradients (canonical order).
struct SampleGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

SampleGradient sample_gradient(const ModelParams& p, const graph::LamGraph& g,
                               const model::StaticInputs& s, const data::ForecastSample& sample,
                               const NormStats& stats, std::size_t rollout);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `init` with AdamW on rollouts of config.rollout steps. A
/// non-finite loss or update aborts with NumericError after writing the
/// last good parameters to the checkpoint path.
TrainResult train_phase(ModelParams init, const graph::LamGraph& g, const Dataset& d,
                        const TrainConfig& config, const EpochCallback& on_epoch = {});

/// train_phase with the rollout length set to kPhase2Rollout.
TrainResult finetune_rollout(ModelParams init, const graph::LamGraph& g, const Dataset& d,
                             TrainConfig config, const EpochCallback& on_epoch = {});

struct Checkpoint {
  ModelParams params;
  NormStats stats;
  std::size_t phase = 1;
  std::size_t epoch = 0;
};

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Per-trajectory static inputs for a dataset.
std::vector<model::StaticInputs> dataset_static_inputs(const graph::LamGraph& g, const Dataset& d);

}  // namespace lamcast::train
