#include <string>

#include "lamcast/autodiff/container.hpp"
#include "lamcast/errors.hpp"
#include "lamcast/graph/graph.hpp"

namespace lamcast::graph {

namespace {

using ad::Container;
using ad::Tensor;

void put_points(Container& c, const std::string& name, const std::vector<Point>& pts) {
  Tensor t({pts.size(), 2});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t.at(i, 0) = pts[i].x;
    t.at(i, 1) = pts[i].y;
  }
  c.put(name, std::move(t));
}

std::vector<Point> get_points(const Container& c, const std::string& name) {
  const Tensor& t = c.tensor(name);
  if (t.rank() != 2 || t.cols() != 2) throw CorruptFileError("graph: bad point array " + name);
  std::vector<Point> pts(t.rows());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {t.at(i, 0), t.at(i, 1)};
  return pts;
}

void put_edges(Container& c, const std::string& name, const EdgeSet& e) {
  Container::IndexArray idx;
  idx.reserve(2 * e.size());
  for (std::size_t k = 0; k < e.size(); ++k) {
    idx.push_back(e.src[k]);
    idx.push_back(e.dst[k]);
  }
  c.put_indices(name + ".index", {e.size(), 2}, std::move(idx));
  c.put(name + ".features", e.features);
}

EdgeSet get_edges(const Container& c, const std::string& name, std::size_t n_src,
                  std::size_t n_dst) {
  const auto& idx = c.indices(name + ".index");
  EdgeSet e;
  const std::size_t n = idx.size() / 2;
  e.src.resize(n);
  e.dst.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto s = idx[2 * k], d = idx[2 * k + 1];
    if (s < 0 || d < 0 || static_cast<std::size_t>(s) >= n_src ||
        static_cast<std::size_t>(d) >= n_dst) {
      throw CorruptFileError("graph: edge index out of range in " + name);
    }
    e.src[k] = static_cast<std::uint32_t>(s);
    e.dst[k] = static_cast<std::uint32_t>(d);
  }
  e.features = c.tensor(name + ".features");
  if (e.features.rank() != 2 || e.features.rows() != n || (n > 0 && e.features.cols() != 3)) {
    throw CorruptFileError("graph: feature array does not match edges in " + name);
  }
  return e;
}

std::size_t meta_size(const Container& c, const std::string& key) {
  const std::string& v = c.require_meta(key);
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (const std::exception&) {
    throw CorruptFileError("graph: bad metadata value for " + key);
  }
}

}  // namespace

void save_graph(const LamGraph& g, const std::filesystem::path& path) {
  Container c("graph");
  c.set_meta("variant", to_string(g.variant));
  c.set_meta("width", std::to_string(g.grid.width));
  c.set_meta("height", std::to_string(g.grid.height));
  c.set_meta("boundary", std::to_string(g.grid.boundary));
  c.set_meta("n1", std::to_string(g.n1));
  c.set_meta("num_levels", std::to_string(g.num_levels));
  c.set_meta("mesh_levels", std::to_string(g.levels.size()));
  c.set_meta("g2m_unconnected", std::to_string(g.g2m_unconnected));

  for (std::size_t l = 0; l < g.levels.size(); ++l) {
    const MeshLevel& lev = g.levels[l];
    const std::string p = "level" + std::to_string(l);
    c.put(p + ".lattice", Tensor::vector({static_cast<double>(lev.nx),
                                          static_cast<double>(lev.ny), lev.spacing_x,
                                          lev.spacing_y, lev.origin.x, lev.origin.y}));
    put_points(c, p + ".nodes", lev.nodes);
    put_edges(c, p + ".intra", g.intra[l]);
  }
  for (std::size_t l = 0; l < g.up.size(); ++l) {
    put_edges(c, "up" + std::to_string(l), g.up[l]);
    put_edges(c, "down" + std::to_string(l), g.down[l]);
  }
  put_edges(c, "g2m", g.g2m);
  put_edges(c, "m2g", g.m2g);
  c.save(path);
}

LamGraph load_graph(const std::filesystem::path& path) {
  Container c = Container::load(path);
  c.require_kind("graph");
  LamGraph g;
  g.variant = parse_variant(c.require_meta("variant"));
  g.grid.width = meta_size(c, "width");
  g.grid.height = meta_size(c, "height");
  g.grid.boundary = meta_size(c, "boundary");
  g.n1 = meta_size(c, "n1");
  g.num_levels = meta_size(c, "num_levels");
  g.g2m_unconnected = meta_size(c, "g2m_unconnected");
  const std::size_t n_levels = meta_size(c, "mesh_levels");
  if (n_levels == 0) throw CorruptFileError("graph: no mesh levels in '" + path.string() + "'");

  g.grid_nodes = grid_coordinates(g.grid);
  g.boundary = boundary_mask(g.grid);
  for (std::size_t l = 0; l < n_levels; ++l) {
    const std::string p = "level" + std::to_string(l);
    const Tensor& lat = c.tensor(p + ".lattice");
    if (lat.size() != 6) throw CorruptFileError("graph: bad lattice for " + p);
    MeshLevel lev;
    lev.nx = static_cast<std::size_t>(lat[0]);
    lev.ny = static_cast<std::size_t>(lat[1]);
    lev.spacing_x = lat[2];
    lev.spacing_y = lat[3];
    lev.origin = {lat[4], lat[5]};
    lev.nodes = get_points(c, p + ".nodes");
    if (lev.nodes.size() != lev.nx * lev.ny) {
      throw CorruptFileError("graph: node count does not match lattice for " + p);
    }
    g.intra.push_back(get_edges(c, p + ".intra", lev.size(), lev.size()));
    lev.edges = g.intra.back();
    g.levels.push_back(std::move(lev));
  }
  if (g.variant == Variant::Hierarchical) {
    for (std::size_t l = 0; l + 1 < n_levels; ++l) {
      g.up.push_back(get_edges(c, "up" + std::to_string(l), g.levels[l].size(),
                               g.levels[l + 1].size()));
      g.down.push_back(get_edges(c, "down" + std::to_string(l), g.levels[l + 1].size(),
                                 g.levels[l].size()));
    }
  }
  const std::size_t n_grid = g.grid.num_nodes();
  const std::size_t n_mesh = g.levels.front().size();
  g.g2m = get_edges(c, "g2m", n_grid, n_mesh);
  g.m2g = get_edges(c, "m2g", n_mesh, n_grid);
  return g;
}

}  // namespace lamcast::graph
