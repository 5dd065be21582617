#include <algorithm>
#include <regex>

#include "lamcast/data/data.hpp"
#include "lamcast/errors.hpp"

namespace lamcast::data {

namespace {

std::size_t meta_size(const ad::Container& c, const std::string& key) {
  const std::string& v = c.require_meta(key);
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (const std::exception&) {
    throw CorruptFileError("dataset: bad metadata value for " + key);
  }
}

Tensor stats_tensor(const std::vector<double>& v) { return Tensor({v.size()}, v); }

std::vector<double> stats_vector(const ad::Container& c, const std::string& name) {
  const Tensor& t = c.tensor(name);
  if (t.rank() != 1) throw CorruptFileError("stats: " + name + " is not a vector");
  return {t.values().begin(), t.values().end()};
}

}  // namespace

void save_trajectory(const Trajectory& tr, const std::filesystem::path& path) {
  ad::Container c("trajectory");
  c.set_meta("width", std::to_string(tr.grid.width));
  c.set_meta("height", std::to_string(tr.grid.height));
  c.set_meta("boundary", std::to_string(tr.grid.boundary));
  c.set_meta("state_vars", std::to_string(tr.state_vars));
  c.set_meta("steps", std::to_string(tr.length()));
  const std::size_t N = tr.grid.num_nodes(), S = tr.state_vars;
  Tensor states({tr.length(), N, S});
  for (std::size_t t = 0; t < tr.length(); ++t) {
    if (tr.states[t].size() != N * S) throw DimensionError("save_trajectory: state shape differs");
    std::copy(tr.states[t].values().begin(), tr.states[t].values().end(),
              states.values().begin() + static_cast<std::ptrdiff_t>(t * N * S));
  }
  c.put("states", std::move(states));
  c.put("topography", Tensor({N}, tr.topography));
  c.put("water", Tensor({N}, tr.water));
  c.put("start_time", Tensor({2}, {tr.start_hour, tr.start_day}));
  c.save(path);
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  const auto c = ad::Container::load(path);
  c.require_kind("trajectory");
  Trajectory tr;
  tr.grid.width = meta_size(c, "width");
  tr.grid.height = meta_size(c, "height");
  tr.grid.boundary = meta_size(c, "boundary");
  tr.state_vars = meta_size(c, "state_vars");
  const std::size_t T = meta_size(c, "steps"), N = tr.grid.num_nodes(), S = tr.state_vars;
  const Tensor& states = c.tensor("states");
  if (states.shape() != ad::Shape{T, N, S}) throw CorruptFileError("trajectory: states shape");
  for (std::size_t t = 0; t < T; ++t) {
    auto first = states.values().begin() + static_cast<std::ptrdiff_t>(t * N * S);
    tr.states.emplace_back(ad::Shape{N, S}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(N * S)));
  }
  const Tensor& topo = c.tensor("topography");
  const Tensor& water = c.tensor("water");
  const Tensor& time = c.tensor("start_time");
  if (topo.size() != N || water.size() != N || time.size() != 2)
    throw CorruptFileError("trajectory: static field shape");
  tr.topography.assign(topo.values().begin(), topo.values().end());
  tr.water.assign(water.values().begin(), water.values().end());
  tr.start_hour = time[0];
  tr.start_day = time[1];
  return tr;
}

void write_stats(ad::Container& c, const NormStats& s) {
  c.put("stats.mean", stats_tensor(s.mean));
  c.put("stats.std", stats_tensor(s.std));
  c.put("stats.diff_var", stats_tensor(s.diff_var));
  c.put("stats.lambda", stats_tensor(s.lambda));
  c.put("stats.omega", stats_tensor(s.omega));
}

NormStats read_stats(const ad::Container& c) {
  NormStats s;
  s.mean = stats_vector(c, "stats.mean");
  s.std = stats_vector(c, "stats.std");
  s.diff_var = stats_vector(c, "stats.diff_var");
  s.lambda = stats_vector(c, "stats.lambda");
  s.omega = stats_vector(c, "stats.omega");
  const std::size_t S = s.mean.size();
  if (s.std.size() != S || s.diff_var.size() != S || s.lambda.size() != S || s.omega.size() != S)
    throw CorruptFileError("stats: vectors differ in length");
  return s;
}

void save_stats(const NormStats& s, const std::filesystem::path& path) {
  ad::Container c("normstats");
  write_stats(c, s);
  c.save(path);
}

NormStats load_stats(const std::filesystem::path& path) {
  const auto c = ad::Container::load(path);
  c.require_kind("normstats");
  return read_stats(c);
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < d.trajectories.size(); ++k)
    save_trajectory(d.trajectories[k], dir / ("traj_" + std::to_string(k) + ".lct"));
  save_stats(d.stats, dir / "stats.lct");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw ContractError("load_dataset: not a directory: " + dir.string());
  const std::regex name("traj_([0-9]+)\\.lct");
  std::vector<std::pair<std::size_t, std::filesystem::path>> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string fname = entry.path().filename().string();
    if (std::regex_match(fname, m, name)) files.emplace_back(std::stoull(m[1].str()), entry.path());
  }
  std::sort(files.begin(), files.end());
  Dataset d;
  d.stats = load_stats(dir / "stats.lct");
  for (const auto& [k, path] : files) {
    d.trajectories.push_back(load_trajectory(path));
    const auto& tr = d.trajectories.back();
    if (tr.state_vars != d.stats.vars())
      throw ContractError("load_dataset: " + path.filename().string() + " has " +
                          std::to_string(tr.state_vars) + " variables, stats have " +
                          std::to_string(d.stats.vars()));
    if (!(tr.grid == d.trajectories.front().grid))
      throw ContractError("load_dataset: trajectories disagree on the grid");
  }
  return d;
}

}  // namespace lamcast::data
