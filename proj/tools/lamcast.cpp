#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "lamcast/data/data.hpp"
#include "lamcast/errors.hpp"
#include "lamcast/eval/eval.hpp"
#include "lamcast/graph/graph.hpp"
#include "lamcast/model/model.hpp"
#include "lamcast/train/train.hpp"

namespace {

using namespace lamcast;

graph::GridSpec parse_grid(const std::string& s, std::size_t boundary) {
  const auto x = s.find_first_of("xX");
  if (x == std::string::npos) throw ConfigError("grid must look like WxH, got '" + s + "'");
  graph::GridSpec g;
  try {
    std::size_t used = 0;
    g.width = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const auto rest = s.substr(x + 1);
    g.height = std::stoul(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw ConfigError("grid must look like WxH, got '" + s + "'");
  }
  g.boundary = boundary;
  g.validate();
  return g;
}

struct BuildGraphArgs {
  std::string grid;
  std::size_t boundary = 10;
  std::size_t n1 = 0;
  std::size_t levels = 1;
  std::string variant = "multiscale";
  std::string out;
};

int build_graph_cmd(const BuildGraphArgs& a) {
  const auto grid = parse_grid(a.grid, a.boundary);
  const auto g = graph::build_graph(grid, a.n1, a.levels, graph::parse_variant(a.variant));
  graph::save_graph(g, a.out);
  std::printf("%s graph: %zu grid nodes, %zu mesh nodes, %zu mesh edges, %zu g2m, %zu m2g\n",
              graph::to_string(g.variant).c_str(), grid.num_nodes(), g.mesh_node_count(),
              g.mesh_edge_count(), g.g2m.size(), g.m2g.size());
  return 0;
}

struct GenDataArgs {
  std::string grid;
  std::size_t boundary = 10;
  std::size_t n_traj = 1;
  std::size_t len = 0;
  std::uint64_t seed = 0;
  std::size_t state_vars = 3;
  std::string stats;
  std::string out;
};

int gen_data_cmd(const GenDataArgs& a) {
  const auto grid = parse_grid(a.grid, a.boundary);
  data::PhysicsConfig physics;
  physics.state_vars = a.state_vars;
  data::Dataset d;
  d.trajectories = data::generate_trajectories(grid, a.n_traj, a.len, a.seed, physics);
  d.stats = a.stats.empty() ? data::compute_norm_stats(d.trajectories) : data::load_stats(a.stats);
  if (d.stats.vars() != a.state_vars)
    throw ContractError("gen-data: stats file has a different variable count");
  data::save_dataset(d, a.out);
  std::printf("wrote %zu trajectories of %zu steps to %s\n", a.n_traj, a.len, a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string graph_path;
  std::string data_dir;
  std::string variant;
  std::size_t phase = 1;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string init;
  std::size_t latent = 64;
  std::size_t batch = 8;
  double lr = 1e-3;
  std::size_t checkpoint_every = 10;
  std::string loss_csv;
  bool all_windows = false;
};

int train_cmd(const TrainArgs& a) {
  const auto g = graph::load_graph(a.graph_path);
  if (!a.variant.empty() && graph::parse_variant(a.variant) != g.variant)
    throw ContractError("train: --variant " + a.variant + " does not match the " +
                        graph::to_string(g.variant) + " graph");
  const auto d = data::load_dataset(a.data_dir);

  train::TrainConfig config;
  config.batch = a.batch;
  config.lr = a.lr;
  config.seed = a.seed;
  config.checkpoint = a.out;
  config.checkpoint_every = a.checkpoint_every;
  config.loss_csv = a.loss_csv.empty() ? std::filesystem::path(a.out).replace_extension(".csv")
                                       : std::filesystem::path(a.loss_csv);
  if (a.all_windows) config.sampling = data::EpochSampler::Mode::AllWindows;

  model::ModelParams init;
  if (!a.init.empty()) {
    init = train::load_checkpoint(a.init).params;
  } else {
    if (a.phase == 2) throw ContractError("train: phase 2 needs --init with a phase 1 checkpoint");
    model::ModelConfig base;
    base.latent = a.latent;
    base.state_vars = d.stats.vars();
    init = model::ModelParams::init(model::config_for(g, base), a.seed);
  }

  if (a.phase == 1) {
    config.epochs = a.epochs ? a.epochs : train::kPhase1Epochs;
    train::train_phase(std::move(init), g, d, config);
  } else if (a.phase == 2) {
    config.epochs = a.epochs ? a.epochs : train::kPhase2Epochs;
    train::finetune_rollout(std::move(init), g, d, config);
  } else {
    throw ConfigError("train: --phase must be 1 or 2");
  }
  std::printf("checkpoint %s, loss curve %s\n", a.out.c_str(), config.loss_csv.c_str());
  return 0;
}

struct EvalArgs {
  std::string ckpt;
  std::string graph_path;
  std::string data_dir;
  std::string out;
  std::size_t steps = eval::kEvalSteps;
  std::size_t max_samples = 0;
};

int evaluate_cmd(const EvalArgs& a) {
  const auto c = train::load_checkpoint(a.ckpt);
  const auto g = graph::load_graph(a.graph_path);
  auto d = data::load_dataset(a.data_dir);
  d.stats = c.stats;
  eval::EvalConfig config;
  config.steps = a.steps;
  config.max_samples = a.max_samples;
  config.map_leads.clear();
  for (std::size_t t : {1, 5, 10, 19})
    if (t <= a.steps) config.map_leads.push_back(t);
  const auto r = eval::evaluate(c.params, g, d, config);
  eval::write_report(r, eval::degree_diagnostic(g), g, a.out);
  std::printf("%zu samples; mean rmse over leads 1-%zu: model %.6g, persistence %.6g\n", r.samples,
              a.steps, eval::mean_rmse(r.rmse, 1, a.steps), eval::mean_rmse(r.baseline, 1, a.steps));
  return 0;
}

struct ForecastArgs {
  std::string ckpt;
  std::string graph_path;
  std::string data_dir;
  std::size_t sample = 0;
  std::string out;
  std::size_t steps = eval::kEvalSteps;
  bool svg = false;
};

int forecast_cmd(const ForecastArgs& a) {
  const auto c = train::load_checkpoint(a.ckpt);
  const auto g = graph::load_graph(a.graph_path);
  auto d = data::load_dataset(a.data_dir);
  d.stats = c.stats;
  const auto samples = eval::test_samples(d, a.steps);
  if (a.sample >= samples.size())
    throw ContractError("forecast: sample " + std::to_string(a.sample) + " out of range (" +
                        std::to_string(samples.size()) + " windows)");
  const auto files = eval::forecast_export(c.params, g, d, samples[a.sample], a.steps, a.out, a.svg);
  std::printf("wrote %zu fields to %s\n", files.size(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lamcast: graph-based limited area forecasting"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  BuildGraphArgs bg;
  auto* bgc = app.add_subcommand("build-graph", "Build and save a graph");
  bgc->add_option("--grid", bg.grid, "WxH")->required();
  bgc->add_option("--boundary", bg.boundary, "Boundary band width");
  bgc->add_option("--n1", bg.n1, "Finest mesh nodes per side")->required();
  bgc->add_option("--levels", bg.levels, "Mesh levels");
  bgc->add_option("--variant", bg.variant, "multiscale|hierarchical|single");
  bgc->add_option("--out", bg.out)->required();

  GenDataArgs gd;
  auto* gdc = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gdc->add_option("--grid", gd.grid, "WxH")->required();
  gdc->add_option("--boundary", gd.boundary, "Boundary band width");
  gdc->add_option("--n-traj", gd.n_traj, "Trajectories");
  gdc->add_option("--len", gd.len, "Raw steps per trajectory")->required();
  gdc->add_option("--seed", gd.seed);
  gdc->add_option("--state-vars", gd.state_vars);
  gdc->add_option("--stats", gd.stats, "Reuse normalisation stats from a stats file");
  gdc->add_option("--out", gd.out)->required();

  TrainArgs tr;
  auto* trc = app.add_subcommand("train", "Train a model");
  trc->add_option("--graph", tr.graph_path)->required();
  trc->add_option("--data", tr.data_dir)->required();
  trc->add_option("--variant", tr.variant, "Must match the graph");
  trc->add_option("--phase", tr.phase, "1 (single step) or 2 (4-step rollout)");
  trc->add_option("--epochs", tr.epochs, "Default 50 for phase 1, 20 for phase 2");
  trc->add_option("--seed", tr.seed);
  trc->add_option("--out", tr.out, "Checkpoint file")->required();
  trc->add_option("--init", tr.init, "Start from this checkpoint");
  trc->add_option("--latent", tr.latent);
  trc->add_option("--batch", tr.batch);
  trc->add_option("--lr", tr.lr);
  trc->add_option("--checkpoint-every", tr.checkpoint_every);
  trc->add_option("--loss-csv", tr.loss_csv, "Default: checkpoint path with .csv");
  trc->add_flag("--all-windows", tr.all_windows, "Use every window each epoch");

  EvalArgs ev;
  auto* evc = app.add_subcommand("evaluate", "RMSE per variable and lead time");
  evc->add_option("--ckpt", ev.ckpt)->required();
  evc->add_option("--graph", ev.graph_path)->required();
  evc->add_option("--data", ev.data_dir)->required();
  evc->add_option("--out", ev.out)->required();
  evc->add_option("--steps", ev.steps);
  evc->add_option("--max-samples", ev.max_samples, "0 keeps every window");

  ForecastArgs fc;
  auto* fcc = app.add_subcommand("forecast", "Export one forecast");
  fcc->add_option("--ckpt", fc.ckpt)->required();
  fcc->add_option("--graph", fc.graph_path)->required();
  fcc->add_option("--data", fc.data_dir)->required();
  fcc->add_option("--sample", fc.sample);
  fcc->add_option("--out", fc.out)->required();
  fcc->add_option("--steps", fc.steps);
  fcc->add_flag("--svg", fc.svg);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*bgc) return build_graph_cmd(bg);
    if (*gdc) return gen_data_cmd(gd);
    if (*trc) return train_cmd(tr);
    if (*evc) return evaluate_cmd(ev);
    if (*fcc) return forecast_cmd(fc);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
