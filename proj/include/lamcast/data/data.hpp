#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lamcast/autodiff/container.hpp"
#include "lamcast/autodiff/tensor.hpp"
#include "lamcast/graph/graph.hpp"

namespace lamcast::data {

using ad::Tensor;
using graph::GridSpec;

/// Raw time step of a trajectory, in hours. The model step is kStride raw
/// steps.
inline constexpr double kRawStepHours = 1.0;
inline constexpr std::size_t kStride = 3;
inline constexpr double kDayHours = 24.0;
inline constexpr double kYearDays = 365.0;
inline constexpr std::size_t kForcingFeatures = 6;
inline constexpr double kVarianceFloor = 1e-6;

/// Synthetic advection-diffusion generator settings. Lengths are in grid
/// cells and speeds in cells per raw step.
struct PhysicsConfig {
  std::size_t state_vars = 3;
  /// Topography and water share this seed, so every trajectory of a
  /// dataset covers the same terrain.
  std::uint64_t terrain_seed = 2024;
  /// Periodic halo around the limited area; features advect in through it.
  std::size_t pad = 16;
  std::size_t substeps = 4;
  std::size_t spinup_steps = 24;
  /// Uniform drift.
  double drift_u = 0.8;
  double drift_v = 0.3;
  /// Travelling streamfunction modes sharing one angular frequency.
  std::size_t modes = 4;
  /// Root-sum-square face speed of the eddies.
  double eddy_speed = 0.6;
  double eddy_frequency = 0.25;  // radians per raw step
  double diffusion = 0.05;
  double source_amplitude = 0.08;
  double damping = 0.02;
  /// Amplitude of the initial tracer field.
  double initial_amplitude = 1.0;
};

struct Trajectory {
  GridSpec grid;
  std::size_t state_vars = 0;
  /// Raw-unit states, each N x S.
  std::vector<Tensor> states;
  std::vector<double> topography;
  std::vector<double> water;
  double start_hour = 0.0;  // time of day of states[0]
  double start_day = 0.0;   // day of year of states[0]

  std::size_t length() const { return states.size(); }
  double hour_of_day(std::size_t t) const;
  double day_of_year(std::size_t t) const;
};

/// One explicit step of flux-form upwind advection plus diffusion on a
/// periodic nx x ny field. u_face[j * nx + i] is the velocity through the
/// face between cells i and i+1; v_face likewise between rows j and j+1.
void advect_diffuse_step(std::vector<double>& q, std::size_t nx, std::size_t ny,
                         std::span<const double> u_face, std::span<const double> v_face,
                         double diffusion, double dt);

/// Throws ConfigError (with a suggested substep count) when the explicit
/// integrator would be unstable.
void check_cfl(double max_u, double max_v, double diffusion, double dt);

/// Deterministic per seed. Requires T >= 8.
Trajectory generate_trajectory(const GridSpec& grid, std::uint64_t seed, std::size_t T,
                               const PhysicsConfig& physics = {});

/// N x 6 forcing: top-of-atmosphere radiation proxy, day sin/cos, year
/// sin/cos (each mapped to [0, 1]) and water fraction.
Tensor forcing_features(double hour_of_day, double day_of_year, const GridSpec& grid,
                        std::span<const double> water);

/// Forcing of raw step t of a trajectory, water taken from states[0].
Tensor trajectory_forcing(const Trajectory& tr, std::size_t t);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  /// Variance of stride-step differences in normalised units.
  std::vector<double> diff_var;
  std::vector<double> lambda;
  std::vector<double> omega;

  std::size_t vars() const { return mean.size(); }
  Tensor normalize(const Tensor& raw) const;
  Tensor denormalize(const Tensor& normed) const;
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

NormStats compute_norm_stats(std::span<const Trajectory> trajectories, std::size_t stride = kStride,
                             double eps = kVarianceFloor);

/// A window of one phase-offset series: series `phase` holds raw steps
/// phase, phase + stride, ...; the window starts at series index `start`
/// (X^{t0-1}) and needs 2 + rollout states.
struct SampleRef {
  std::size_t trajectory = 0;
  std::size_t phase = 0;
  std::size_t start = 0;
  friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

/// Length of series `phase` for a trajectory of T raw steps.
std::size_t series_length(std::size_t T, std::size_t phase, std::size_t stride = kStride);

/// Every valid window of every phase, in (phase, start) order. A
/// trajectory too short for any window yields none and logs a warning.
std::vector<SampleRef> window_samples(const Trajectory& tr, std::size_t trajectory_index,
                                      std::size_t rollout, std::size_t stride = kStride);

/// Normalised model inputs and targets for one window.
struct ForecastSample {
  Tensor prev2;  // X^{t0-1}
  Tensor prev;   // X^{t0}
  std::vector<Tensor> targets;
  /// N x 3F per target: forcing at target - 2, target - 1, target (model
  /// steps).
  std::vector<Tensor> forcing;
  std::vector<Tensor> boundary;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  NormStats stats;
};

ForecastSample materialize(const Dataset& d, const SampleRef& ref, std::size_t rollout,
                           std::size_t stride = kStride);

/// Per-epoch sample lists. Offset mode draws one random start per
/// (trajectory, phase) series each epoch; window mode uses every valid
/// window. Both shuffle with the epoch seed.
class EpochSampler {
 public:
  enum class Mode { RandomOffset, AllWindows };

  EpochSampler(const Dataset& d, std::size_t rollout, Mode mode, std::uint64_t seed,
               std::size_t stride = kStride);

  std::vector<SampleRef> epoch(std::size_t index) const;
  /// Number of samples one epoch yields.
  std::size_t epoch_size() const;

 private:
  struct Series {
    std::size_t trajectory, phase, windows;
  };
  std::vector<Series> series_;
  std::size_t rollout_;
  Mode mode_;
  std::uint64_t seed_;
};

void save_trajectory(const Trajectory& tr, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);
void write_stats(ad::Container& c, const NormStats& s);
NormStats read_stats(const ad::Container& c);
void save_stats(const NormStats& s, const std::filesystem::path& path);
NormStats load_stats(const std::filesystem::path& path);

/// Directory layout: traj_<k>.lct files plus stats.lct.
void save_dataset(const Dataset& d, const std::filesystem::path& dir);
/// Throws ContractError when stats and trajectories disagree on S or the
/// trajectories disagree on the grid.
Dataset load_dataset(const std::filesystem::path& dir);

/// Generates `count` trajectories with seeds seed, seed + 1, ...
std::vector<Trajectory> generate_trajectories(const GridSpec& grid, std::size_t count,
                                              std::size_t T, std::uint64_t seed,
                                              const PhysicsConfig& physics = {});

}  // namespace lamcast::data
