#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lamcast/data/data.hpp"
#include "lamcast/errors.hpp"

namespace lamcast::data {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Latitude and longitude span of the synthetic area, in degrees.
constexpr double kLatSouth = 52.0;
constexpr double kLatSpan = 18.0;
constexpr double kLonSpan = 30.0;

double deg(double d) { return d * std::numbers::pi / 180.0; }

/// Cosine of the solar zenith angle clipped at 0, from fractional area
/// coordinates (which may fall outside [0, 1] in the halo).
double toa_proxy(double xf, double yf, double hour, double day) {
  const double lat = deg(kLatSouth + kLatSpan * yf);
  const double solar_hour = hour + kLonSpan * xf / 15.0;
  const double decl = deg(23.44) * std::sin(kTwoPi * (day - 81.0) / kYearDays);
  const double hour_angle = kTwoPi * (solar_hour - 12.0) / kDayHours;
  const double c = std::sin(lat) * std::sin(decl) +
                   std::cos(lat) * std::cos(decl) * std::cos(hour_angle);
  return std::clamp(c, 0.0, 1.0);
}

double unit_sin(double phase) { return 0.5 * (std::sin(phase) + 1.0); }
double unit_cos(double phase) { return 0.5 * (std::cos(phase) + 1.0); }

/// Smooth periodic random field on nx x ny built from low Fourier modes.
std::vector<double> smooth_field(std::size_t nx, std::size_t ny, std::size_t max_k,
                                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::normal_distribution<double> amp(0.0, 1.0);
  struct Mode {
    int kx, ky;
    double a, p;
  };
  std::vector<Mode> modes;
  for (std::size_t kx = 0; kx <= max_k; ++kx) {
    for (std::size_t ky = 0; ky <= max_k; ++ky) {
      if (kx + ky == 0) continue;
      const double scale = 1.0 / static_cast<double>(kx * kx + ky * ky);
      modes.push_back({static_cast<int>(kx), static_cast<int>(ky), amp(rng) * scale, phase(rng)});
      modes.push_back({static_cast<int>(kx), -static_cast<int>(ky), amp(rng) * scale, phase(rng)});
    }
  }
  std::vector<double> f(nx * ny, 0.0);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      double v = 0.0;
      for (const auto& m : modes) {
        v += m.a * std::sin(kTwoPi * (m.kx * static_cast<double>(i) / static_cast<double>(nx) +
                                      m.ky * static_cast<double>(j) / static_cast<double>(ny)) +
                            m.p);
      }
      f[j * nx + i] = v;
    }
  }
  return f;
}

void rescale_unit(std::vector<double>& f) {
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  const double a = *lo, span = *hi - *lo;
  for (double& v : f) v = span > 0.0 ? (v - a) / span : 0.0;
}

/// Streamfunction mode; the velocity it induces through a unit face has
/// amplitude speed_x (for u) and speed_y (for v).
struct Eddy {
  double kx, ky, amp, phase;
};

class Flow {
 public:
  Flow(std::size_t nx, std::size_t ny, const PhysicsConfig& p, std::mt19937_64& rng)
      : nx_(nx), ny_(ny), drift_u_(p.drift_u), drift_v_(p.drift_v), omega_(p.eddy_frequency) {
    std::uniform_int_distribution<int> wave(1, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    const double per_mode =
        p.modes > 0 ? p.eddy_speed / std::sqrt(static_cast<double>(p.modes)) : 0.0;
    for (std::size_t m = 0; m < p.modes; ++m) {
      const double kx = wave(rng) * (unit(rng) < 0.5 ? -1.0 : 1.0);
      const double ky = wave(rng);
      const double sx = 2.0 * std::abs(std::sin(std::numbers::pi * ky / static_cast<double>(ny)));
      const double sy = 2.0 * std::abs(std::sin(std::numbers::pi * kx / static_cast<double>(nx)));
      const double speed = per_mode * (0.5 + 0.5 * unit(rng));
      const double amp = speed / std::hypot(sx, sy);
      eddies_.push_back({kx, ky, amp, phase(rng)});
      max_u_ += amp * sx;
      max_v_ += amp * sy;
    }
    max_u_ += std::abs(drift_u_);
    max_v_ += std::abs(drift_v_);
  }

  double max_u() const { return max_u_; }
  double max_v() const { return max_v_; }

  /// Streamfunction at cell corner (i + 1/2, j + 1/2).
  double psi(double x, double y, double t) const {
    double v = 0.0;
    for (const auto& e : eddies_) {
      v += e.amp * std::sin(kTwoPi * (e.kx * x / static_cast<double>(nx_) +
                                      e.ky * y / static_cast<double>(ny_)) +
                            e.phase - omega_ * t);
    }
    return v;
  }

  /// Face velocities at time t; the discrete divergence of the eddy part
  /// is zero by construction.
  void faces(double t, std::vector<double>& u, std::vector<double>& v) const {
    corner_.resize(nx_ * ny_);
    for (std::size_t j = 0; j < ny_; ++j)
      for (std::size_t i = 0; i < nx_; ++i)
        corner_[j * nx_ + i] = psi(static_cast<double>(i) + 0.5, static_cast<double>(j) + 0.5, t);
    u.resize(nx_ * ny_);
    v.resize(nx_ * ny_);
    for (std::size_t j = 0; j < ny_; ++j) {
      const std::size_t jm = (j + ny_ - 1) % ny_;
      for (std::size_t i = 0; i < nx_; ++i) {
        const std::size_t im = (i + nx_ - 1) % nx_;
        u[j * nx_ + i] = drift_u_ + corner_[j * nx_ + i] - corner_[jm * nx_ + i];
        v[j * nx_ + i] = drift_v_ - (corner_[j * nx_ + i] - corner_[j * nx_ + im]);
      }
    }
  }

 private:
  std::size_t nx_, ny_;
  double drift_u_, drift_v_, omega_;
  std::vector<Eddy> eddies_;
  double max_u_ = 0.0, max_v_ = 0.0;
  mutable std::vector<double> corner_;
};

}  // namespace

double Trajectory::hour_of_day(std::size_t t) const {
  return std::fmod(start_hour + static_cast<double>(t) * kRawStepHours, kDayHours);
}

double Trajectory::day_of_year(std::size_t t) const {
  const double days = start_day + (start_hour + static_cast<double>(t) * kRawStepHours) / kDayHours;
  return std::fmod(days, kYearDays);
}

void advect_diffuse_step(std::vector<double>& q, std::size_t nx, std::size_t ny,
                         std::span<const double> u_face, std::span<const double> v_face,
                         double diffusion, double dt) {
  if (q.size() != nx * ny || u_face.size() != q.size() || v_face.size() != q.size())
    throw DimensionError("advect_diffuse_step: field and face sizes differ");
  std::vector<double> fx(q.size()), fy(q.size());
  for (std::size_t j = 0; j < ny; ++j) {
    const std::size_t jp = (j + 1) % ny;
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t ip = (i + 1) % nx;
      const std::size_t k = j * nx + i;
      const double u = u_face[k], v = v_face[k];
      fx[k] = u * (u > 0.0 ? q[k] : q[j * nx + ip]) - diffusion * (q[j * nx + ip] - q[k]);
      fy[k] = v * (v > 0.0 ? q[k] : q[jp * nx + i]) - diffusion * (q[jp * nx + i] - q[k]);
    }
  }
  for (std::size_t j = 0; j < ny; ++j) {
    const std::size_t jm = (j + ny - 1) % ny;
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t im = (i + nx - 1) % nx;
      const std::size_t k = j * nx + i;
      q[k] -= dt * (fx[k] - fx[j * nx + im] + fy[k] - fy[jm * nx + i]);
    }
  }
}

void check_cfl(double max_u, double max_v, double diffusion, double dt) {
  const double courant = dt * (max_u + max_v) + 4.0 * diffusion * dt;
  if (courant <= 1.0) return;
  const double dt_max = 1.0 / (max_u + max_v + 4.0 * diffusion);
  std::ostringstream msg;
  msg << "CFL condition violated (Courant number " << courant << "); use an internal step <= "
      << dt_max << " raw steps, i.e. substeps >= "
      << static_cast<std::size_t>(std::ceil(kRawStepHours / dt_max));
  throw ConfigError(msg.str());
}

Trajectory generate_trajectory(const GridSpec& grid, std::uint64_t seed, std::size_t T,
                               const PhysicsConfig& p) {
  if (T < 8) throw ConfigError("generate_trajectory: T must be at least 8");
  if (grid.width == 0 || grid.height == 0) throw ConfigError("generate_trajectory: empty grid");
  if (p.state_vars == 0) throw ConfigError("generate_trajectory: state_vars must be positive");
  if (p.substeps == 0) throw ConfigError("generate_trajectory: substeps must be positive");

  std::mt19937_64 rng(seed);
  const std::size_t W = grid.width, H = grid.height, pad = p.pad;
  const std::size_t nx = W + 2 * pad, ny = H + 2 * pad, np = nx * ny;

  Flow flow(nx, ny, p, rng);
  const double dt = 1.0 / static_cast<double>(p.substeps);
  check_cfl(flow.max_u(), flow.max_v(), p.diffusion, dt);

  std::mt19937_64 terrain_rng(p.terrain_seed);
  std::vector<double> topo = smooth_field(nx, ny, 3, terrain_rng);
  rescale_unit(topo);
  std::vector<double> water(np);
  for (std::size_t k = 0; k < np; ++k) water[k] = std::clamp(1.0 - topo[k] / 0.3, 0.0, 1.0);

  std::uniform_int_distribution<int> half_day(0, 1);
  std::uniform_int_distribution<int> day(0, 364);
  Trajectory tr;
  tr.grid = grid;
  tr.state_vars = p.state_vars;
  tr.start_hour = 12.0 * half_day(rng);
  tr.start_day = day(rng);

  // Tracers beyond the first use rotated source weights.
  const std::size_t tracers = p.state_vars > 3 ? p.state_vars - 2 : 1;
  std::vector<std::vector<double>> q(tracers);
  for (auto& f : q) {
    f = smooth_field(nx, ny, 4, rng);
    rescale_unit(f);
    for (double& v : f) v = p.initial_amplitude * (v - 0.5);
  }

  // Fractional area coordinates of every padded cell.
  const double xscale = W > 1 ? static_cast<double>(W - 1) : 1.0;
  const double yscale = H > 1 ? static_cast<double>(H - 1) : 1.0;
  auto frac_x = [&](std::size_t i) { return (static_cast<double>(i) - static_cast<double>(pad)) / xscale; };
  auto frac_y = [&](std::size_t j) { return (static_cast<double>(j) - static_cast<double>(pad)) / yscale; };

  std::vector<double> uf, vf, src(np);
  const std::size_t N = grid.num_nodes(), S = p.state_vars;

  auto record = [&](double t) {
    flow.faces(t, uf, vf);
    Tensor x({N, S});
    for (std::size_t j = 0; j < H; ++j) {
      for (std::size_t i = 0; i < W; ++i) {
        const std::size_t n = j * W + i;
        const std::size_t k = (j + pad) * nx + (i + pad);
        const std::size_t kw = (j + pad) * nx + (i + pad - 1);
        const std::size_t ks = (j + pad - 1) * nx + (i + pad);
        const double vars[3] = {q[0][k], 0.5 * (uf[k] + uf[kw]), 0.5 * (vf[k] + vf[ks])};
        for (std::size_t s = 0; s < std::min<std::size_t>(S, 3); ++s) x.at(n, s) = vars[s];
        for (std::size_t s = 3; s < S; ++s) x.at(n, s) = q[s - 2][k];
      }
    }
    tr.states.push_back(std::move(x));
  };

  const double t0 = -static_cast<double>(p.spinup_steps);
  const std::size_t total = p.spinup_steps + T - 1;
  if (p.spinup_steps == 0) record(0.0);
  for (std::size_t step = 0; step < total; ++step) {
    for (std::size_t sub = 0; sub < p.substeps; ++sub) {
      const double t = t0 + static_cast<double>(step) + static_cast<double>(sub) * dt;
      flow.faces(t, uf, vf);
      const double hour = std::fmod(std::fmod(tr.start_hour + t, kDayHours) + kDayHours, kDayHours);
      const double dayv = tr.start_day + (tr.start_hour + t) / kDayHours;
      for (std::size_t c = 0; c < tracers; ++c) {
        auto& f = q[c];
        advect_diffuse_step(f, nx, ny, uf, vf, p.diffusion, dt);
        if (p.source_amplitude == 0.0 && p.damping == 0.0) continue;
        for (std::size_t j = 0; j < ny; ++j) {
          for (std::size_t i = 0; i < nx; ++i) {
            const std::size_t k = j * nx + i;
            const double land = c % 2 == 0 ? 1.0 - 0.7 * water[k] : 0.3 + 0.7 * water[k];
            const double heat = toa_proxy(frac_x(i), frac_y(j), hour, dayv) * land * (0.5 + topo[k]);
            src[k] = p.source_amplitude * (heat - 0.25) - p.damping * f[k];
          }
        }
        for (std::size_t k = 0; k < np; ++k) f[k] += dt * src[k];
      }
    }
    const double t_end = t0 + static_cast<double>(step + 1);
    if (t_end >= -1e-9) record(t_end);
  }

  tr.topography.resize(N);
  tr.water.resize(N);
  for (std::size_t j = 0; j < H; ++j) {
    for (std::size_t i = 0; i < W; ++i) {
      const std::size_t k = (j + pad) * nx + (i + pad);
      tr.topography[j * W + i] = topo[k];
      tr.water[j * W + i] = water[k];
    }
  }
  for (const auto& x : tr.states)
    if (!x.all_finite()) throw NumericError("generate_trajectory: non-finite state");
  return tr;
}

std::vector<Trajectory> generate_trajectories(const GridSpec& grid, std::size_t count,
                                              std::size_t T, std::uint64_t seed,
                                              const PhysicsConfig& physics) {
  std::vector<Trajectory> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(generate_trajectory(grid, seed + k, T, physics));
  return out;
}

Tensor forcing_features(double hour_of_day, double day_of_year, const GridSpec& grid,
                        std::span<const double> water) {
  const std::size_t N = grid.num_nodes();
  if (water.size() != N) throw DimensionError("forcing_features: water mask size differs from grid");
  const double xscale = grid.width > 1 ? static_cast<double>(grid.width - 1) : 1.0;
  const double yscale = grid.height > 1 ? static_cast<double>(grid.height - 1) : 1.0;
  const double pd = kTwoPi * hour_of_day / kDayHours;
  const double py = kTwoPi * day_of_year / kYearDays;
  Tensor f({N, kForcingFeatures});
  for (std::size_t j = 0; j < grid.height; ++j) {
    for (std::size_t i = 0; i < grid.width; ++i) {
      const std::size_t n = j * grid.width + i;
      f.at(n, 0) = toa_proxy(static_cast<double>(i) / xscale, static_cast<double>(j) / yscale,
                             hour_of_day, day_of_year);
      f.at(n, 1) = unit_sin(pd);
      f.at(n, 2) = unit_cos(pd);
      f.at(n, 3) = unit_sin(py);
      f.at(n, 4) = unit_cos(py);
      f.at(n, 5) = water[n];
    }
  }
  return f;
}

Tensor trajectory_forcing(const Trajectory& tr, std::size_t t) {
  return forcing_features(tr.hour_of_day(t), tr.day_of_year(t), tr.grid, tr.water);
}

}  // namespace lamcast::data
