#include <string>

#include "lamcast/errors.hpp"
#include "lamcast/model/model.hpp"

namespace lamcast::model {

namespace {

constexpr double kHeadInitScale = 0.01;

std::string lv(std::size_t l) { return std::to_string(l); }

struct Spec {
  std::string name;
  std::size_t in, out;
  bool layer_norm;
};

std::vector<Spec> mlp_specs(const ModelConfig& c) {
  const std::size_t d = c.latent;
  const std::size_t L = c.levels;
  const std::size_t K = c.processor_layers();
  std::vector<Spec> s;
  auto add = [&](std::string name, std::size_t in, std::size_t out = 0, bool ln = true) {
    s.push_back({std::move(name), in, out ? out : d, ln});
  };

  add("embed.grid", c.grid_input_width());
  add("embed.g2m", kEdgeFeatureWidth);
  add("embed.m2g", kEdgeFeatureWidth);
  for (std::size_t l = 1; l <= L; ++l) {
    add("embed.mesh" + lv(l), kMeshStaticWidth);
    add("embed.intra" + lv(l), kEdgeFeatureWidth);
  }
  add("g2m.edge", 3 * d);
  add("g2m.grid", d);
  add("g2m.node", 2 * d);

  if (c.variant == Variant::Hierarchical) {
    for (std::size_t l = 1; l < L; ++l) {
      add("embed.up" + lv(l), kEdgeFeatureWidth);
      add("embed.down" + lv(l), kEdgeFeatureWidth);
    }
    for (std::size_t l = 2; l <= L; ++l) {
      add("encode.up" + lv(l) + ".edge", 3 * d);
      add("encode.up" + lv(l) + ".node", 2 * d);
    }
    for (std::size_t k = 1; k <= K; ++k) {
      const std::string p = "proc" + lv(k);
      for (std::size_t l = 1; l <= L; ++l) {
        add(p + ".down.intra" + lv(l) + ".edge", 3 * d);
        add(p + ".down.intra" + lv(l) + ".node", 2 * d);
        add(p + ".up.intra" + lv(l) + ".edge", 3 * d);
        add(p + ".up.intra" + lv(l) + ".node", 2 * d);
        if (l >= 2) {
          add(p + ".down.inter" + lv(l) + ".edge", 3 * d);
          add(p + ".down.inter" + lv(l) + ".node", 2 * d);
        }
        if (l < L) {
          add(p + ".up.inter" + lv(l) + ".edge", 3 * d);
          add(p + ".up.inter" + lv(l) + ".node", 2 * d);
        }
      }
    }
    for (std::size_t l = 1; l < L; ++l) {
      add("decode.down" + lv(l) + ".edge", 3 * d);
      add("decode.down" + lv(l) + ".node", 2 * d);
    }
  } else {
    for (std::size_t k = 1; k <= K; ++k) {
      add("proc" + lv(k) + ".edge", 3 * d);
      add("proc" + lv(k) + ".node", 2 * d);
    }
  }

  add("m2g.edge", 3 * d);
  add("m2g.node", 2 * d);
  add("pred", d, c.state_vars, false);
  return s;
}

}  // namespace

std::size_t ModelConfig::processor_layers() const {
  if (layers > 0) return layers;
  return variant == Variant::Hierarchical ? 2 : 4;
}

std::size_t ModelConfig::grid_input_width() const {
  return 2 * state_vars + 3 * forcing_features + kGridStaticWidth;
}

ModelConfig config_for(const LamGraph& g, ModelConfig base) {
  base.variant = g.variant;
  base.levels = g.levels.size();
  return base;
}

std::vector<std::string> mlp_names(const ModelConfig& config) {
  std::vector<std::string> out;
  for (const auto& s : mlp_specs(config)) out.push_back(s.name);
  return out;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  if (config.latent == 0 || config.state_vars == 0 || config.levels == 0) {
    throw ConfigError("model config needs latent, state_vars and levels > 0");
  }
  if (config.variant != Variant::Hierarchical && config.levels != 1) {
    throw ConfigError("multiscale and single models use one merged mesh level");
  }
  ModelParams p;
  p.config = config;
  p.config.layers = config.processor_layers();
  std::mt19937_64 rng(seed);
  for (const auto& s : mlp_specs(config)) {
    const double scale = s.name == "pred" ? kHeadInitScale : 1.0;
    p.mlps.emplace(s.name, MlpParams::init(s.in, config.latent, s.out, s.layer_norm, rng, scale));
  }
  return p;
}

const MlpParams& ModelParams::at(const std::string& name) const {
  auto it = mlps.find(name);
  if (it == mlps.end()) throw ContractError("model has no MLP named '" + name + "'");
  return it->second;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& [name, m] : mlps) {
    out.insert(out.end(), {&m.w1, &m.b1, &m.w2, &m.b2});
    if (m.layer_norm) out.insert(out.end(), {&m.ln_gain, &m.ln_bias});
  }
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& [name, m] : mlps) {
    out.insert(out.end(), {&m.w1, &m.b1, &m.w2, &m.b2});
    if (m.layer_norm) out.insert(out.end(), {&m.ln_gain, &m.ln_bias});
  }
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

void zero_final_layers(ModelParams& p, bool head_only) {
  for (auto& [name, m] : p.mlps) {
    if (head_only && name != "pred") continue;
    m.w2.fill(0.0);
    m.b2.fill(0.0);
    if (m.layer_norm) m.ln_bias.fill(0.0);
  }
}

const MlpVars& BoundModel::operator[](const std::string& name) const {
  auto it = mlps.find(name);
  if (it == mlps.end()) throw ContractError("model has no MLP named '" + name + "'");
  return it->second;
}

BoundModel bind_model(Tape& tape, const ModelParams& p, bool trainable) {
  BoundModel b;
  b.config = p.config;
  b.tape = &tape;
  for (const auto& [name, m] : p.mlps) {
    MlpVars v = ad::bind(tape, m, trainable);
    b.leaves.insert(b.leaves.end(), {v.w1, v.b1, v.w2, v.b2});
    if (v.layer_norm) b.leaves.insert(b.leaves.end(), {v.ln_gain, v.ln_bias});
    b.mlps.emplace(name, v);
  }
  return b;
}

void check_compatible(const ModelConfig& c, const LamGraph& g) {
  if (c.variant != g.variant) {
    throw ContractError("model is " + graph::to_string(c.variant) + " but graph is " +
                        graph::to_string(g.variant));
  }
  if (c.levels != g.levels.size()) {
    throw ContractError("model expects " + std::to_string(c.levels) + " mesh levels, graph has " +
                        std::to_string(g.levels.size()));
  }
}

void write_params(ad::Container& c, const ModelParams& p) {
  const ModelConfig& k = p.config;
  c.set_meta("model.variant", graph::to_string(k.variant));
  c.set_meta("model.latent", std::to_string(k.latent));
  c.set_meta("model.layers", std::to_string(k.processor_layers()));
  c.set_meta("model.levels", std::to_string(k.levels));
  c.set_meta("model.state_vars", std::to_string(k.state_vars));
  c.set_meta("model.forcing_features", std::to_string(k.forcing_features));
  for (const auto& [name, m] : p.mlps) {
    const std::string prefix = "mlp." + name + ".";
    c.put(prefix + "w1", m.w1);
    c.put(prefix + "b1", m.b1);
    c.put(prefix + "w2", m.w2);
    c.put(prefix + "b2", m.b2);
    if (m.layer_norm) {
      c.put(prefix + "ln_gain", m.ln_gain);
      c.put(prefix + "ln_bias", m.ln_bias);
    }
  }
}

ModelParams read_params(const ad::Container& c) {
  auto num = [&](const std::string& key) -> std::size_t {
    const std::string& v = c.require_meta(key);
    try {
      return static_cast<std::size_t>(std::stoull(v));
    } catch (const std::exception&) {
      throw CorruptFileError("bad value for " + key + ": '" + v + "'");
    }
  };
  ModelConfig k;
  k.variant = graph::parse_variant(c.require_meta("model.variant"));
  k.latent = num("model.latent");
  k.layers = num("model.layers");
  k.levels = num("model.levels");
  k.state_vars = num("model.state_vars");
  k.forcing_features = num("model.forcing_features");

  ModelParams p;
  p.config = k;
  for (const auto& s : mlp_specs(k)) {
    const std::string prefix = "mlp." + s.name + ".";
    MlpParams m;
    m.w1 = c.tensor(prefix + "w1");
    m.b1 = c.tensor(prefix + "b1");
    m.w2 = c.tensor(prefix + "w2");
    m.b2 = c.tensor(prefix + "b2");
    m.layer_norm = s.layer_norm;
    if (s.layer_norm) {
      m.ln_gain = c.tensor(prefix + "ln_gain");
      m.ln_bias = c.tensor(prefix + "ln_bias");
    }
    const ad::Shape w1{s.in, k.latent}, w2{k.latent, s.out};
    if (m.w1.shape() != w1 || m.w2.shape() != w2 || m.b1.size() != k.latent ||
        m.b2.size() != s.out || (s.layer_norm && (m.ln_gain.size() != s.out ||
                                                  m.ln_bias.size() != s.out))) {
      throw CorruptFileError("MLP '" + s.name + "' has unexpected shapes");
    }
    p.mlps.emplace(s.name, std::move(m));
  }
  return p;
}

}  // namespace lamcast::model
