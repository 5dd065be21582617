#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <vector>

#include "lamcast/data/data.hpp"
#include "lamcast/model/model.hpp"

namespace lamcast::eval {

using ad::Tensor;
using data::Dataset;
using data::SampleRef;
using model::ModelParams;

/// 57 h at 3 h per step.
inline constexpr std::size_t kEvalSteps = 19;

/// rmse[s][t]: variable s at lead t + 1.
using RmseTable = std::vector<std::vector<double>>;

struct DegreeLevel {
  std::size_t level = 1;  // 1-based
  std::vector<std::size_t> intra;  // in-degree from same-level edges
  std::vector<std::size_t> total;  // plus inter-level edges received
  std::vector<std::uint32_t> over8;  // nodes with total in-degree > 8
  std::map<std::size_t, std::size_t> histogram;  // total degree -> count
};

struct DegreeReport {
  std::vector<DegreeLevel> levels;
  /// Multiscale graphs only: coincident[l - 2] counts the merged nodes with
  /// in-degree > 8 that coincide with a node of mesh level l >= 2. Upper
  /// levels' nodes are subsets of lower ones, so a node can be counted
  /// under several levels.
  std::vector<std::size_t> coincident;
  /// Distinct mesh nodes with in-degree > 8.
  std::size_t over8_total() const;
  /// Sum of `coincident`.
  std::size_t coincident_total() const;
  std::size_t max_degree() const;
};

DegreeReport degree_diagnostic(const graph::LamGraph& g);

struct EvalReport {
  std::size_t steps = 0;
  std::size_t samples = 0;
  RmseTable rmse;
  RmseTable baseline;
  /// Lead -> per grid node mean weighted squared error (normalised units);
  /// boundary nodes hold 0.
  std::map<std::size_t, std::vector<double>> spatial_loss;
};

/// Produces `steps` normalised predictions for a sample.
using Forecaster =
    std::function<std::vector<Tensor>(const data::ForecastSample&, const SampleRef&, std::size_t steps)>;

/// Every window of `steps` targets in the dataset, in trajectory order.
std::vector<SampleRef> test_samples(const Dataset& d, std::size_t steps);

/// RMSE_s(t) = sqrt(mean over samples and non-boundary nodes of the squared
/// de-normalised error). Throws ContractError without samples.
RmseTable rmse_table(const Forecaster& f, const graph::LamGraph& g, const Dataset& d,
                     std::span<const SampleRef> samples, std::size_t steps,
                     const std::vector<std::size_t>& map_leads = {},
                     std::map<std::size_t, std::vector<double>>* spatial = nullptr);

Forecaster model_forecaster(const ModelParams& p, const graph::LamGraph& g, const Dataset& d);
Forecaster persistence_forecaster();

RmseTable persistence_baseline(const graph::LamGraph& g, const Dataset& d, std::size_t steps,
                               std::span<const SampleRef> samples);

struct EvalConfig {
  std::size_t steps = kEvalSteps;
  std::vector<std::size_t> map_leads{1, 5, 10, 19};
  /// Evenly spaced subset of the test windows; 0 keeps them all.
  std::size_t max_samples = 0;
};

EvalReport evaluate(const ModelParams& p, const graph::LamGraph& g, const Dataset& d,
                    const EvalConfig& config = {});

/// Writes rmse.csv, spatial_loss_<t>.csv and degrees.csv.
void write_report(const EvalReport& r, const DegreeReport& degrees, const graph::LamGraph& g,
                  const std::filesystem::path& dir);

/// Mean of rmse over variables and leads [first, last] (1-based).
double mean_rmse(const RmseTable& t, std::size_t first, std::size_t last);

/// De-normalised forecast fields, one CSV grid per variable and lead
/// (field_<s>_<t>.csv, height rows of width values), optional SVG heatmaps
/// and metadata.json. Returns the CSV paths.
std::vector<std::filesystem::path> forecast_export(const ModelParams& p, const graph::LamGraph& g,
                                                   const Dataset& d, const SampleRef& sample,
                                                   std::size_t steps,
                                                   const std::filesystem::path& dir,
                                                   bool svg = false);

/// Reads a field CSV written by forecast_export as an N-vector.
std::vector<double> read_field_csv(const std::filesystem::path& path, const graph::GridSpec& grid);

}  // namespace lamcast::eval
