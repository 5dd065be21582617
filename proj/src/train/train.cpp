#include "lamcast/train/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <spdlog/spdlog.h>

#include "lamcast/autodiff/adamw.hpp"
#include "lamcast/errors.hpp"

namespace lamcast::train {

namespace {

std::vector<std::uint32_t> interior_nodes(std::span<const std::uint8_t> boundary) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < boundary.size(); ++i)
    if (!boundary[i]) out.push_back(i);
  if (out.empty()) throw ContractError("loss: every grid node is in the boundary set");
  return out;
}

void check_weights(std::size_t S, std::span<const double> lambda, std::span<const double> omega) {
  if (lambda.size() != S || omega.size() != S)
    throw DimensionError("loss: weight vectors do not match the variable count");
}

double global_norm(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

bool all_finite(const ModelParams& p) {
  for (const Tensor* t : p.tensors())
    if (!t->all_finite()) return false;
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("train: batch size must be at least 1");
  if (rollout == 0) throw ConfigError("train: rollout length must be at least 1");
  if (!(lr >= 0.0)) throw ConfigError("train: learning rate must be non-negative");
  if (!(clip_norm >= 0.0)) throw ConfigError("train: clip norm must be non-negative");
}

Var weighted_mse_loss(std::span<const Var> predictions, std::span<const Tensor> targets,
                      std::span<const double> lambda, std::span<const double> omega,
                      std::span<const std::uint8_t> boundary) {
  if (predictions.empty() || predictions.size() != targets.size())
    throw ContractError("loss: prediction and target sequences differ in length");
  const auto interior = interior_nodes(boundary);
  ad::Tape& tape = *predictions.front().tape;
  const std::size_t S = targets.front().cols();
  check_weights(S, lambda, omega);
  Tensor w({S, 1});
  for (std::size_t s = 0; s < S; ++s) w[s] = lambda[s] * omega[s];
  const Var weights = tape.constant(std::move(w));

  std::optional<Var> total;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    if (predictions[t].shape() != targets[t].shape() || targets[t].rows() != boundary.size())
      throw DimensionError("loss: prediction, target and boundary shapes disagree");
    const Var err = ad::gather_rows(ad::sub(predictions[t], tape.constant(targets[t])), interior);
    const Var term = ad::sum(ad::matmul(ad::square(err), weights));
    total = total ? ad::add(*total, term) : term;
  }
  const double denom = static_cast<double>(predictions.size()) * static_cast<double>(interior.size());
  return ad::scale(*total, 1.0 / denom);
}

double weighted_mse(std::span<const Tensor> predictions, std::span<const Tensor> targets,
                    std::span<const double> lambda, std::span<const double> omega,
                    std::span<const std::uint8_t> boundary) {
  if (predictions.empty() || predictions.size() != targets.size())
    throw ContractError("loss: prediction and target sequences differ in length");
  const auto interior = interior_nodes(boundary);
  const std::size_t S = targets.front().cols();
  check_weights(S, lambda, omega);
  double total = 0.0;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    if (predictions[t].shape() != targets[t].shape() || targets[t].rows() != boundary.size())
      throw DimensionError("loss: prediction, target and boundary shapes disagree");
    for (std::uint32_t n : interior)
      for (std::size_t s = 0; s < S; ++s) {
        const double e = predictions[t].at(n, s) - targets[t].at(n, s);
        total += lambda[s] * omega[s] * e * e;
      }
  }
  return total / (static_cast<double>(predictions.size()) * static_cast<double>(interior.size()));
}

SampleGradient sample_gradient(const ModelParams& p, const graph::LamGraph& g,
                               const model::StaticInputs& s, const data::ForecastSample& sample,
                               const NormStats& stats, std::size_t rollout) {
  ad::Tape tape;
  const auto m = model::bind_model(tape, p, true);
  const auto preds =
      model::rollout(m, g, s, sample.prev2, sample.prev, sample.forcing, sample.boundary, rollout);
  const Var loss = weighted_mse_loss(preds, std::span(sample.targets).first(rollout), stats.lambda,
                                     stats.omega, g.boundary);
  tape.backward(loss);
  SampleGradient out;
  out.loss = loss.value().item();
  out.grads.reserve(m.leaves.size());
  for (Var v : m.leaves) out.grads.push_back(tape.grad(v));
  return out;
}

std::vector<model::StaticInputs> dataset_static_inputs(const graph::LamGraph& g, const Dataset& d) {
  std::vector<model::StaticInputs> out;
  out.reserve(d.trajectories.size());
  for (const auto& tr : d.trajectories) {
    if (!(tr.grid == g.grid)) throw ContractError("train: dataset grid differs from the graph grid");
    out.push_back(model::make_static_inputs(g, tr.topography));
  }
  return out;
}

TrainResult train_phase(ModelParams init, const graph::LamGraph& g, const Dataset& d,
                        const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model::check_compatible(init.config, g);
  if (init.config.state_vars != d.stats.vars())
    throw ContractError("train: model and dataset disagree on the variable count");
  if (init.config.forcing_features != data::kForcingFeatures)
    throw ContractError("train: model forcing width differs from the dataset");
  const auto statics = dataset_static_inputs(g, d);
  const data::EpochSampler sampler(d, config.rollout, config.sampling, config.seed);
  if (sampler.epoch_size() == 0) throw ContractError("train: no training samples");

  ad::AdamW opt({.lr = config.lr, .weight_decay = config.weight_decay});
  TrainResult result{std::move(init), {}};
  ModelParams& p = result.params;
  ModelParams last_good = p;
  std::size_t last_epoch = 0;

  auto write_checkpoint = [&](const ModelParams& params, std::size_t epoch) {
    if (config.checkpoint.empty()) return;
    save_checkpoint({params, d.stats, config.phase, epoch}, config.checkpoint);
  };
  auto abort = [&](const std::string& why) {
    write_checkpoint(last_good, last_epoch);
    throw NumericError("training aborted: " + why + "; last good parameters kept");
  };

  std::ofstream csv;
  if (!config.loss_csv.empty()) {
    const bool fresh = !std::filesystem::exists(config.loss_csv);
    csv.open(config.loss_csv, std::ios::app);
    if (!csv) throw ConfigError("train: cannot open " + config.loss_csv.string());
    if (fresh) csv << "epoch,loss\n";
  }

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto refs = sampler.epoch(epoch - 1);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < refs.size(); b += config.batch) {
      const std::size_t end = std::min(refs.size(), b + config.batch);
      std::vector<Tensor> grads;
      for (std::size_t k = b; k < end; ++k) {
        const auto sample = data::materialize(d, refs[k], config.rollout);
        SampleGradient sg;
        try {
          sg = sample_gradient(p, g, statics[refs[k].trajectory], sample, d.stats, config.rollout);
        } catch (const NumericError& e) {
          abort(e.what());
        }
        if (!std::isfinite(sg.loss)) abort("non-finite loss");
        loss_sum += sg.loss;
        if (grads.empty()) {
          grads = std::move(sg.grads);
        } else {
          for (std::size_t i = 0; i < grads.size(); ++i) {
            auto dst = grads[i].values();
            auto src = sg.grads[i].values();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
          }
        }
      }
      double factor = 1.0 / static_cast<double>(end - b);
      if (config.clip_norm > 0.0) {
        const double norm = global_norm(grads) * factor;
        if (norm > config.clip_norm) factor *= config.clip_norm / norm;
      }
      for (auto& gr : grads)
        for (double& v : gr.values()) v *= factor;
      const auto tensors = p.tensors();
      opt.step(tensors, grads);
      if (!all_finite(p)) {
        p = last_good;
        abort("non-finite parameters after an update");
      }
      last_good = p;
    }
    last_epoch = epoch;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const EpochRecord rec{epoch, loss_sum / static_cast<double>(refs.size()), refs.size(), secs};
    result.curve.push_back(rec);
    if (csv) csv << rec.epoch << ',' << rec.loss << '\n' << std::flush;
    spdlog::info("phase {} epoch {}/{}: loss {:.6g} over {} samples ({:.1f} s)", config.phase, epoch,
                 config.epochs, rec.loss, rec.samples, rec.seconds);
    if (on_epoch) on_epoch(rec);
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && epoch != config.epochs)
      write_checkpoint(p, epoch);
  }
  write_checkpoint(p, config.epochs);
  return result;
}

TrainResult finetune_rollout(ModelParams init, const graph::LamGraph& g, const Dataset& d,
                             TrainConfig config, const EpochCallback& on_epoch) {
  config.rollout = kPhase2Rollout;
  config.phase = 2;
  return train_phase(std::move(init), g, d, config, on_epoch);
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  ad::Container box("checkpoint");
  box.set_meta("phase", std::to_string(c.phase));
  box.set_meta("epoch", std::to_string(c.epoch));
  model::write_params(box, c.params);
  data::write_stats(box, c.stats);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  box.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto box = ad::Container::load(path);
  box.require_kind("checkpoint");
  Checkpoint c;
  c.params = model::read_params(box);
  c.stats = data::read_stats(box);
  if (c.stats.vars() != c.params.config.state_vars)
    throw ContractError("checkpoint: stats and model disagree on the variable count");
  try {
    c.phase = std::stoull(box.require_meta("phase"));
    c.epoch = std::stoull(box.require_meta("epoch"));
  } catch (const std::logic_error&) {
    throw CorruptFileError("checkpoint: bad phase or epoch metadata");
  }
  return c;
}

}  // namespace lamcast::train
