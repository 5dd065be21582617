#include "lamcast/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "lamcast/errors.hpp"

namespace lamcast::eval {

namespace {

std::string variable_name(std::size_t s, std::size_t S) {
  static const char* names[] = {"q", "u", "v"};
  if (S <= 3 && s < 3) return names[s];
  return s < 3 ? names[s] : "tracer" + std::to_string(s - 2);
}

void count_into(const graph::EdgeSet& es, std::vector<std::size_t>& deg) {
  for (auto d : es.dst) ++deg[d];
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  out.precision(17);
  return out;
}

}  // namespace

std::size_t DegreeReport::over8_total() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.over8.size();
  return n;
}

std::size_t DegreeReport::coincident_total() const {
  std::size_t n = 0;
  for (auto c : coincident) n += c;
  return n;
}

std::size_t DegreeReport::max_degree() const {
  std::size_t m = 0;
  for (const auto& l : levels)
    for (auto d : l.total) m = std::max(m, d);
  return m;
}

DegreeReport degree_diagnostic(const graph::LamGraph& g) {
  DegreeReport r;
  const std::size_t L = g.levels.size();
  for (std::size_t l = 0; l < L; ++l) {
    DegreeLevel lv;
    lv.level = l + 1;
    lv.intra.assign(g.levels[l].size(), 0);
    count_into(g.intra[l], lv.intra);
    lv.total = lv.intra;
    if (l >= 1 && l - 1 < g.up.size()) count_into(g.up[l - 1], lv.total);
    if (l < g.down.size()) count_into(g.down[l], lv.total);
    for (std::uint32_t n = 0; n < lv.total.size(); ++n) {
      if (lv.total[n] > 8) lv.over8.push_back(n);
      ++lv.histogram[lv.total[n]];
    }
    r.levels.push_back(std::move(lv));
  }
  if (g.variant == graph::Variant::Multiscale && g.n1 > 0 && g.num_levels >= 2) {
    const auto levels = graph::mesh_levels(g.grid, g.n1, g.num_levels);
    const auto merged = graph::build_multiscale(levels);
    const auto& total = r.levels.front().total;
    for (std::size_t l = 1; l < merged.merged_index.size(); ++l) {
      std::size_t n = 0;
      for (auto k : merged.merged_index[l]) n += total[k] > 8 ? 1 : 0;
      r.coincident.push_back(n);
    }
  }
  return r;
}

std::vector<SampleRef> test_samples(const Dataset& d, std::size_t steps) {
  std::vector<SampleRef> out;
  for (std::size_t k = 0; k < d.trajectories.size(); ++k) {
    auto w = data::window_samples(d.trajectories[k], k, steps);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

RmseTable rmse_table(const Forecaster& f, const graph::LamGraph& g, const Dataset& d,
                     std::span<const SampleRef> samples, std::size_t steps,
                     const std::vector<std::size_t>& map_leads,
                     std::map<std::size_t, std::vector<double>>* spatial) {
  if (samples.empty()) throw ContractError("evaluate: no test samples");
  if (steps == 0) throw ContractError("evaluate: need at least one lead step");
  const std::size_t S = d.stats.vars(), N = g.grid.num_nodes();
  std::vector<std::uint32_t> interior;
  for (std::uint32_t n = 0; n < N; ++n)
    if (!g.boundary[n]) interior.push_back(n);
  if (interior.empty()) throw ContractError("evaluate: every grid node is in the boundary set");

  std::vector<std::vector<double>> sse(S, std::vector<double>(steps, 0.0));
  if (spatial) {
    spatial->clear();
    for (auto t : map_leads)
      if (t >= 1 && t <= steps) (*spatial)[t].assign(N, 0.0);
  }
  for (const auto& ref : samples) {
    const auto sample = data::materialize(d, ref, steps);
    const auto preds = f(sample, ref, steps);
    if (preds.size() < steps) throw ContractError("evaluate: forecaster returned too few steps");
    for (std::size_t t = 0; t < steps; ++t) {
      const Tensor p = d.stats.denormalize(preds[t]);
      const Tensor y = d.stats.denormalize(sample.targets[t]);
      for (auto n : interior)
        for (std::size_t s = 0; s < S; ++s) {
          const double e = p.at(n, s) - y.at(n, s);
          sse[s][t] += e * e;
        }
      if (spatial && spatial->count(t + 1)) {
        auto& map = (*spatial)[t + 1];
        for (auto n : interior)
          for (std::size_t s = 0; s < S; ++s) {
            const double e = preds[t].at(n, s) - sample.targets[t].at(n, s);
            map[n] += d.stats.lambda[s] * d.stats.omega[s] * e * e;
          }
      }
    }
  }
  const double count = static_cast<double>(samples.size()) * static_cast<double>(interior.size());
  RmseTable out(S, std::vector<double>(steps));
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t t = 0; t < steps; ++t) out[s][t] = std::sqrt(sse[s][t] / count);
  if (spatial)
    for (auto& [t, map] : *spatial)
      for (double& v : map) v /= static_cast<double>(samples.size());
  return out;
}

Forecaster model_forecaster(const ModelParams& p, const graph::LamGraph& g, const Dataset& d) {
  model::check_compatible(p.config, g);
  if (p.config.state_vars != d.stats.vars())
    throw ContractError("evaluate: model and dataset disagree on the variable count");
  auto statics = std::make_shared<std::vector<std::unique_ptr<model::StaticInputs>>>(d.trajectories.size());
  return [&p, &g, &d, statics](const data::ForecastSample& s, const SampleRef& ref, std::size_t steps) {
    auto& slot = (*statics)[ref.trajectory];
    if (!slot)
      slot = std::make_unique<model::StaticInputs>(
          model::make_static_inputs(g, d.trajectories[ref.trajectory].topography));
    return model::forecast(p, g, *slot, s.prev2, s.prev, s.forcing, s.boundary, steps);
  };
}

Forecaster persistence_forecaster() {
  return [](const data::ForecastSample& s, const SampleRef&, std::size_t steps) {
    return std::vector<Tensor>(steps, s.prev);
  };
}

RmseTable persistence_baseline(const graph::LamGraph& g, const Dataset& d, std::size_t steps,
                               std::span<const SampleRef> samples) {
  return rmse_table(persistence_forecaster(), g, d, samples, steps);
}

EvalReport evaluate(const ModelParams& p, const graph::LamGraph& g, const Dataset& d,
                    const EvalConfig& config) {
  auto samples = test_samples(d, config.steps);
  if (config.max_samples > 0 && samples.size() > config.max_samples) {
    std::vector<SampleRef> kept;
    for (std::size_t i = 0; i < config.max_samples; ++i)
      kept.push_back(samples[i * samples.size() / config.max_samples]);
    samples = std::move(kept);
  }
  EvalReport r;
  r.steps = config.steps;
  r.samples = samples.size();
  r.rmse = rmse_table(model_forecaster(p, g, d), g, d, samples, config.steps, config.map_leads,
                      &r.spatial_loss);
  r.baseline = persistence_baseline(g, d, config.steps, samples);
  return r;
}

double mean_rmse(const RmseTable& t, std::size_t first, std::size_t last) {
  if (t.empty() || first == 0 || last < first || last > t.front().size())
    throw ContractError("mean_rmse: lead range outside the table");
  double sum = 0.0;
  for (const auto& row : t)
    for (std::size_t k = first; k <= last; ++k) sum += row[k - 1];
  return sum / static_cast<double>(t.size() * (last - first + 1));
}

void write_report(const EvalReport& r, const DegreeReport& degrees, const graph::LamGraph& g,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t S = r.rmse.size();
  {
    auto out = open_out(dir / "rmse.csv");
    out << "variable,lead_steps,rmse,baseline_rmse\n";
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t t = 0; t < r.steps; ++t)
        out << variable_name(s, S) << ',' << t + 1 << ',' << r.rmse[s][t] << ',' << r.baseline[s][t]
            << '\n';
  }
  const auto pts = graph::grid_coordinates(g.grid);
  for (const auto& [t, map] : r.spatial_loss) {
    auto out = open_out(dir / ("spatial_loss_" + std::to_string(t) + ".csv"));
    out << "node,x,y,boundary,loss\n";
    for (std::size_t n = 0; n < map.size(); ++n)
      out << n << ',' << pts[n].x << ',' << pts[n].y << ',' << int(g.boundary[n]) << ',' << map[n]
          << '\n';
  }
  auto out = open_out(dir / "degrees.csv");
  out << "level,node,x,y,intra_in_degree,total_in_degree\n";
  for (const auto& lv : degrees.levels) {
    const auto& nodes = g.levels[lv.level - 1].nodes;
    for (std::size_t n = 0; n < lv.total.size(); ++n)
      out << lv.level << ',' << n << ',' << nodes[n].x << ',' << nodes[n].y << ',' << lv.intra[n]
          << ',' << lv.total[n] << '\n';
  }
}

namespace {

std::string heat_colour(double v, double scale) {
  const double a = scale > 0.0 ? std::clamp(v / scale, -1.0, 1.0) : 0.0;
  const int hi = 255, lo = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(a))));
  std::ostringstream c;
  if (a >= 0.0)
    c << "rgb(" << hi << ',' << lo << ',' << lo << ')';
  else
    c << "rgb(" << lo << ',' << lo << ',' << hi << ')';
  return c.str();
}

void write_svg(const std::filesystem::path& path, const graph::GridSpec& grid,
               std::span<const double> field, double centre, double scale) {
  constexpr int cell = 6;
  auto out = open_out(path);
  const std::size_t W = grid.width, H = grid.height, b = grid.boundary;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W * cell << "\" height=\""
      << H * cell << "\">\n";
  for (std::size_t j = 0; j < H; ++j)
    for (std::size_t i = 0; i < W; ++i) {
      // Row 0 is drawn at the bottom.
      out << "<rect x=\"" << i * cell << "\" y=\"" << (H - 1 - j) * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"" << heat_colour(field[j * W + i] - centre, scale)
          << "\"/>\n";
    }
  out << "<rect x=\"" << b * cell << "\" y=\"" << b * cell << "\" width=\"" << (W - 2 * b) * cell
      << "\" height=\"" << (H - 2 * b) * cell
      << "\" fill=\"none\" stroke=\"black\" stroke-dasharray=\"4 2\"/>\n</svg>\n";
}

}  // namespace

std::vector<std::filesystem::path> forecast_export(const ModelParams& p, const graph::LamGraph& g,
                                                   const Dataset& d, const SampleRef& ref,
                                                   std::size_t steps,
                                                   const std::filesystem::path& dir, bool svg) {
  const auto sample = data::materialize(d, ref, steps);
  const auto preds = model_forecaster(p, g, d)(sample, ref, steps);
  std::filesystem::create_directories(dir);
  const std::size_t S = d.stats.vars(), W = g.grid.width, H = g.grid.height;

  std::vector<Tensor> fields;
  for (const auto& x : preds) fields.push_back(d.stats.denormalize(x));

  std::vector<std::filesystem::path> files;
  nlohmann::json meta;
  meta["grid"] = {{"width", W}, {"height", H}, {"boundary", g.grid.boundary}};
  meta["boundary_region"] =
      "nodes within `boundary` cells of the edge hold supplied truth, not model output";
  meta["sample"] = {{"trajectory", ref.trajectory}, {"phase", ref.phase}, {"start", ref.start}};
  meta["lead_hours_per_step"] = data::kRawStepHours * static_cast<double>(data::kStride);
  meta["units"] = "raw (de-normalised)";
  meta["variables"] = nlohmann::json::array();
  for (std::size_t s = 0; s < S; ++s) meta["variables"].push_back(variable_name(s, S));

  for (std::size_t s = 0; s < S; ++s) {
    double scale = 0.0;
    const double centre = d.stats.mean[s];
    for (const auto& f : fields)
      for (std::size_t n = 0; n < f.rows(); ++n) scale = std::max(scale, std::abs(f.at(n, s) - centre));
    for (std::size_t t = 0; t < steps; ++t) {
      const std::string stem = "field_" + variable_name(s, S) + "_" + std::to_string(t + 1);
      auto path = dir / (stem + ".csv");
      {
        auto out = open_out(path);
        for (std::size_t j = 0; j < H; ++j) {
          for (std::size_t i = 0; i < W; ++i) out << (i ? "," : "") << fields[t].at(j * W + i, s);
          out << '\n';
        }
      }
      files.push_back(path);
      meta["files"].push_back(path.filename().string());
      if (svg) {
        std::vector<double> col(W * H);
        for (std::size_t n = 0; n < col.size(); ++n) col[n] = fields[t].at(n, s);
        write_svg(dir / (stem + ".svg"), g.grid, col, centre, scale);
      }
    }
  }
  auto out = open_out(dir / "metadata.json");
  out << meta.dump(2) << '\n';
  return files;
}

std::vector<double> read_field_csv(const std::filesystem::path& path, const graph::GridSpec& grid) {
  std::ifstream in(path);
  if (!in) throw CorruptFileError("cannot read " + path.string());
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(row, cell, ',')) {
      try {
        out.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw CorruptFileError("bad value in " + path.string());
      }
      ++cols;
    }
    if (cols != grid.width) throw CorruptFileError("row width differs from grid in " + path.string());
  }
  if (out.size() != grid.num_nodes()) throw CorruptFileError("row count differs from grid in " + path.string());
  return out;
}

}  // namespace lamcast::eval
