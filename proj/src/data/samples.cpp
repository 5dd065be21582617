#include <algorithm>
#include <cmath>
#include <random>

#include <spdlog/spdlog.h>

#include "lamcast/data/data.hpp"
#include "lamcast/errors.hpp"

namespace lamcast::data {

Tensor NormStats::normalize(const Tensor& raw) const {
  if (raw.cols() != vars()) throw ContractError("normalize: variable count differs from stats");
  Tensor out(raw.shape());
  for (std::size_t n = 0; n < raw.rows(); ++n)
    for (std::size_t s = 0; s < vars(); ++s) out.at(n, s) = (raw.at(n, s) - mean[s]) / std[s];
  return out;
}

Tensor NormStats::denormalize(const Tensor& normed) const {
  if (normed.cols() != vars()) throw ContractError("denormalize: variable count differs from stats");
  Tensor out(normed.shape());
  for (std::size_t n = 0; n < normed.rows(); ++n)
    for (std::size_t s = 0; s < vars(); ++s) out.at(n, s) = normed.at(n, s) * std[s] + mean[s];
  return out;
}

NormStats compute_norm_stats(std::span<const Trajectory> trajectories, std::size_t stride,
                             double eps) {
  if (trajectories.empty()) throw ContractError("compute_norm_stats: no trajectories");
  if (stride == 0) throw ContractError("compute_norm_stats: stride must be positive");
  const std::size_t S = trajectories.front().state_vars;
  for (const auto& tr : trajectories)
    if (tr.state_vars != S) throw ContractError("compute_norm_stats: trajectories differ in S");

  NormStats st;
  st.mean.assign(S, 0.0);
  st.std.assign(S, 0.0);
  st.diff_var.assign(S, 0.0);
  st.lambda.assign(S, 0.0);
  st.omega.assign(S, 1.0);

  double count = 0.0;
  for (const auto& tr : trajectories)
    for (const auto& x : tr.states) {
      for (std::size_t n = 0; n < x.rows(); ++n)
        for (std::size_t s = 0; s < S; ++s) st.mean[s] += x.at(n, s);
      count += static_cast<double>(x.rows());
    }
  if (count == 0.0) throw ContractError("compute_norm_stats: trajectories hold no states");
  for (double& m : st.mean) m /= count;

  std::vector<double> var(S, 0.0);
  for (const auto& tr : trajectories)
    for (const auto& x : tr.states)
      for (std::size_t n = 0; n < x.rows(); ++n)
        for (std::size_t s = 0; s < S; ++s) {
          const double d = x.at(n, s) - st.mean[s];
          var[s] += d * d;
        }
  for (std::size_t s = 0; s < S; ++s) st.std[s] = std::max(std::sqrt(var[s] / count), eps);

  // Differences between states `stride` raw steps apart, in normalised units.
  std::vector<double> dmean(S, 0.0), dvar(S, 0.0);
  double dcount = 0.0;
  auto for_each_diff = [&](auto&& fn) {
    for (const auto& tr : trajectories)
      for (std::size_t t = 0; t + stride < tr.states.size(); ++t) {
        const Tensor& a = tr.states[t];
        const Tensor& b = tr.states[t + stride];
        for (std::size_t n = 0; n < a.rows(); ++n)
          for (std::size_t s = 0; s < S; ++s) fn(s, (b.at(n, s) - a.at(n, s)) / st.std[s]);
      }
  };
  for_each_diff([&](std::size_t s, double d) {
    dmean[s] += d;
    if (s == 0) dcount += 1.0;
  });
  if (dcount > 0.0) {
    for (double& m : dmean) m /= dcount;
    for_each_diff([&](std::size_t s, double d) { dvar[s] += (d - dmean[s]) * (d - dmean[s]); });
    for (std::size_t s = 0; s < S; ++s) st.diff_var[s] = dvar[s] / dcount;
  }
  for (std::size_t s = 0; s < S; ++s) st.lambda[s] = 1.0 / std::max(st.diff_var[s], eps);
  return st;
}

std::size_t series_length(std::size_t T, std::size_t phase, std::size_t stride) {
  if (stride == 0) throw ContractError("series_length: stride must be positive");
  return phase < T ? (T - phase + stride - 1) / stride : 0;
}

namespace {

std::size_t window_count(std::size_t T, std::size_t phase, std::size_t rollout, std::size_t stride) {
  const std::size_t len = series_length(T, phase, stride);
  return len >= 2 + rollout ? len - 2 - rollout + 1 : 0;
}

}  // namespace

std::vector<SampleRef> window_samples(const Trajectory& tr, std::size_t trajectory_index,
                                      std::size_t rollout, std::size_t stride) {
  if (rollout == 0) throw ContractError("window_samples: rollout must be at least 1");
  std::vector<SampleRef> out;
  for (std::size_t phase = 0; phase < stride; ++phase) {
    const std::size_t w = window_count(tr.length(), phase, rollout, stride);
    for (std::size_t s = 0; s < w; ++s) out.push_back({trajectory_index, phase, s});
  }
  if (out.empty()) {
    spdlog::warn("trajectory {} ({} steps) is too short for a {}-step rollout; skipped",
                 trajectory_index, tr.length(), rollout);
  }
  return out;
}

ForecastSample materialize(const Dataset& d, const SampleRef& ref, std::size_t rollout,
                           std::size_t stride) {
  if (ref.trajectory >= d.trajectories.size())
    throw IndexError("materialize: trajectory index out of range");
  const Trajectory& tr = d.trajectories[ref.trajectory];
  if (tr.state_vars != d.stats.vars())
    throw ContractError("materialize: stats and trajectory disagree on the variable count");
  if (ref.phase >= stride || ref.start >= window_count(tr.length(), ref.phase, rollout, stride))
    throw IndexError("materialize: window outside the trajectory");

  auto raw = [&](std::size_t series_index) { return ref.phase + series_index * stride; };
  ForecastSample s;
  s.prev2 = d.stats.normalize(tr.states[raw(ref.start)]);
  s.prev = d.stats.normalize(tr.states[raw(ref.start + 1)]);
  const std::size_t N = tr.grid.num_nodes();
  for (std::size_t k = 0; k < rollout; ++k) {
    const std::size_t tau = ref.start + 2 + k;
    s.targets.push_back(d.stats.normalize(tr.states[raw(tau)]));
    s.boundary.push_back(s.targets.back());
    Tensor f({N, 3 * kForcingFeatures});
    for (std::size_t b = 0; b < 3; ++b) {
      const Tensor part = trajectory_forcing(tr, raw(tau - 2 + b));
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < kForcingFeatures; ++c)
          f.at(n, b * kForcingFeatures + c) = part.at(n, c);
    }
    s.forcing.push_back(std::move(f));
  }
  return s;
}

EpochSampler::EpochSampler(const Dataset& d, std::size_t rollout, Mode mode, std::uint64_t seed,
                           std::size_t stride)
    : rollout_(rollout), mode_(mode), seed_(seed) {
  if (rollout == 0) throw ContractError("EpochSampler: rollout must be at least 1");
  for (std::size_t t = 0; t < d.trajectories.size(); ++t) {
    std::size_t total = 0;
    for (std::size_t phase = 0; phase < stride; ++phase) {
      const std::size_t w = window_count(d.trajectories[t].length(), phase, rollout, stride);
      if (w > 0) series_.push_back({t, phase, w});
      total += w;
    }
    if (total == 0) {
      spdlog::warn("trajectory {} ({} steps) is too short for a {}-step rollout; skipped", t,
                   d.trajectories[t].length(), rollout);
    }
  }
}

std::size_t EpochSampler::epoch_size() const {
  if (mode_ == Mode::RandomOffset) return series_.size();
  std::size_t n = 0;
  for (const auto& s : series_) n += s.windows;
  return n;
}

std::vector<SampleRef> EpochSampler::epoch(std::size_t index) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(rollout_)};
  std::mt19937_64 rng(seq);
  std::vector<SampleRef> out;
  for (const auto& s : series_) {
    if (mode_ == Mode::RandomOffset) {
      std::uniform_int_distribution<std::size_t> pick(0, s.windows - 1);
      out.push_back({s.trajectory, s.phase, pick(rng)});
    } else {
      for (std::size_t k = 0; k < s.windows; ++k) out.push_back({s.trajectory, s.phase, k});
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace lamcast::data
