#include "lamcast/graph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "lamcast/errors.hpp"

namespace lamcast::graph {

namespace {

using EdgePairs = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

EdgeSet to_edge_set(EdgePairs pairs) {
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  EdgeSet e;
  e.src.reserve(pairs.size());
  e.dst.reserve(pairs.size());
  for (auto [s, d] : pairs) {
    e.src.push_back(s);
    e.dst.push_back(d);
  }
  return e;
}

double distance(Point a, Point b) { return std::hypot(b.x - a.x, b.y - a.y); }

// Index range [lo, hi] of lattice positions within `radius` (in index
// units) of continuous index `c`, clamped to [0, n).
std::pair<std::size_t, std::size_t> window(double c, double radius, std::size_t n) {
  const double lo = std::max(0.0, std::floor(c - radius));
  const double hi = std::min(static_cast<double>(n - 1), std::ceil(c + radius));
  if (hi < lo) return {1, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

void GridSpec::validate() const {
  if (width < 2 * boundary + 2 || height < 2 * boundary + 2) {
    throw SpecError("grid " + std::to_string(width) + "x" + std::to_string(height) +
                    " too small for boundary width " + std::to_string(boundary));
  }
}

std::vector<Point> grid_coordinates(const GridSpec& grid) {
  std::vector<Point> pts;
  pts.reserve(grid.num_nodes());
  for (std::size_t j = 0; j < grid.height; ++j)
    for (std::size_t i = 0; i < grid.width; ++i)
      pts.push_back({static_cast<double>(i), static_cast<double>(j)});
  return pts;
}

std::vector<std::uint8_t> boundary_mask(const GridSpec& grid) {
  std::vector<std::uint8_t> mask(grid.num_nodes(), 0);
  const std::size_t b = grid.boundary;
  for (std::size_t j = 0; j < grid.height; ++j) {
    for (std::size_t i = 0; i < grid.width; ++i) {
      const bool inside = i >= b && j >= b && i + b < grid.width && j + b < grid.height;
      mask[j * grid.width + i] = inside ? 0 : 1;
    }
  }
  return mask;
}

double MeshLevel::node_distance() const { return std::max(spacing_x, spacing_y); }

MeshLevel build_mesh_level(std::size_t nx, std::size_t ny, double spacing_x, double spacing_y,
                           Point origin) {
  if (nx < 2 || ny < 2) {
    throw SpecError("mesh level needs at least 2x2 nodes, got " + std::to_string(nx) + "x" +
                    std::to_string(ny));
  }
  MeshLevel level;
  level.nx = nx;
  level.ny = ny;
  level.spacing_x = spacing_x;
  level.spacing_y = spacing_y;
  level.origin = origin;
  level.nodes.reserve(nx * ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i)
      level.nodes.push_back({origin.x + static_cast<double>(i) * spacing_x,
                             origin.y + static_cast<double>(j) * spacing_y});

  EdgePairs pairs;
  pairs.reserve(8 * nx * ny);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const auto self = static_cast<std::uint32_t>(j * nx + i);
      for (int dj = -1; dj <= 1; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          if (di == 0 && dj == 0) continue;
          const auto ni = static_cast<std::ptrdiff_t>(i) + di;
          const auto nj = static_cast<std::ptrdiff_t>(j) + dj;
          if (ni < 0 || nj < 0 || ni >= static_cast<std::ptrdiff_t>(nx) ||
              nj >= static_cast<std::ptrdiff_t>(ny))
            continue;
          pairs.emplace_back(self, static_cast<std::uint32_t>(nj * static_cast<std::ptrdiff_t>(nx) + ni));
        }
      }
    }
  }
  level.edges = to_edge_set(std::move(pairs));
  return level;
}

std::vector<MeshLevel> mesh_levels(const GridSpec& grid, std::size_t n1, std::size_t levels) {
  if (levels < 1) throw SpecError("at least one mesh level is required");
  std::vector<MeshLevel> out;
  std::size_t n = n1;
  const double extent_x = static_cast<double>(grid.width - 1);
  const double extent_y = static_cast<double>(grid.height - 1);
  for (std::size_t l = 0; l < levels; ++l) {
    if (l > 0) {
      if (n % 3 != 0) {
        throw SpecError("level " + std::to_string(l) + " size " + std::to_string(n) +
                        " is not divisible by 3");
      }
      n /= 3;
    }
    if (n < 2) {
      throw SpecError("mesh level " + std::to_string(l + 1) + " would have " +
                      std::to_string(n) + " nodes per side; need at least 2");
    }
    const double sx = extent_x / static_cast<double>(n);
    const double sy = extent_y / static_cast<double>(n);
    out.push_back(build_mesh_level(n, n, sx, sy, {sx / 2, sy / 2}));
  }
  return out;
}

MultiscaleMesh build_multiscale(std::span<const MeshLevel> levels) {
  if (levels.empty()) throw SpecError("build_multiscale: no levels");
  const MeshLevel& base = levels[0];
  const double tol = 1e-6 * std::min(base.spacing_x, base.spacing_y);
  MultiscaleMesh out;
  out.mesh = base;
  EdgePairs pairs;
  for (std::size_t e = 0; e < base.edges.size(); ++e) {
    pairs.emplace_back(base.edges.src[e], base.edges.dst[e]);
  }
  out.merged_index.emplace_back(base.size());
  for (std::uint32_t k = 0; k < base.size(); ++k) out.merged_index[0][k] = k;

  for (std::size_t l = 1; l < levels.size(); ++l) {
    const MeshLevel& lev = levels[l];
    std::vector<std::uint32_t> map(lev.size());
    for (std::size_t k = 0; k < lev.size(); ++k) {
      const Point p = lev.nodes[k];
      const double ci = std::round((p.x - base.origin.x) / base.spacing_x);
      const double cj = std::round((p.y - base.origin.y) / base.spacing_y);
      const bool in_range = ci >= 0 && cj >= 0 && ci < static_cast<double>(base.nx) &&
                            cj < static_cast<double>(base.ny);
      const std::size_t idx =
          in_range ? static_cast<std::size_t>(cj) * base.nx + static_cast<std::size_t>(ci) : 0;
      if (!in_range || distance(base.nodes[idx], p) > tol) {
        throw AlignmentError("level " + std::to_string(l + 1) + " node " + std::to_string(k) +
                             " does not coincide with any finest-level node");
      }
      map[k] = static_cast<std::uint32_t>(idx);
    }
    for (std::size_t e = 0; e < lev.edges.size(); ++e) {
      pairs.emplace_back(map[lev.edges.src[e]], map[lev.edges.dst[e]]);
    }
    out.merged_index.push_back(std::move(map));
  }
  out.mesh.edges = to_edge_set(std::move(pairs));
  return out;
}

HierarchicalMesh build_hierarchy(std::span<const MeshLevel> levels) {
  if (levels.size() < 2) throw SpecError("build_hierarchy: need at least 2 levels");
  HierarchicalMesh h;
  h.levels.assign(levels.begin(), levels.end());
  for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
    const MeshLevel& lo = levels[l];
    const MeshLevel& hi = levels[l + 1];
    EdgePairs up, down;
    for (std::uint32_t s = 0; s < lo.size(); ++s) {
      std::uint32_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::uint32_t r = 0; r < hi.size(); ++r) {
        const double d = distance(lo.nodes[s], hi.nodes[r]);
        if (d < best_d) {
          best_d = d;
          best = r;
        }
      }
      up.emplace_back(s, best);
      down.emplace_back(best, s);
    }
    h.up.push_back(to_edge_set(std::move(up)));
    h.down.push_back(to_edge_set(std::move(down)));
  }
  return h;
}

EdgeSet build_grid2mesh(std::span<const Point> grid, const MeshLevel& mesh) {
  const double radius = kGrid2MeshRadius * mesh.node_distance();
  EdgePairs pairs;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Point p = grid[g];
    const auto [i0, i1] = window((p.x - mesh.origin.x) / mesh.spacing_x,
                                 radius / mesh.spacing_x + 1, mesh.nx);
    const auto [j0, j1] = window((p.y - mesh.origin.y) / mesh.spacing_y,
                                 radius / mesh.spacing_y + 1, mesh.ny);
    for (std::size_t j = j0; j <= j1 && j0 <= j1; ++j) {
      for (std::size_t i = i0; i <= i1 && i0 <= i1; ++i) {
        const std::size_t m = j * mesh.nx + i;
        if (distance(p, mesh.nodes[m]) < radius) {
          pairs.emplace_back(static_cast<std::uint32_t>(g), static_cast<std::uint32_t>(m));
        }
      }
    }
  }
  return to_edge_set(std::move(pairs));
}

EdgeSet build_mesh2grid(std::span<const Point> grid, const MeshLevel& mesh) {
  if (mesh.size() < 4) throw SpecError("mesh2grid needs at least 4 mesh nodes");
  const double reach = 2.0 * mesh.node_distance();
  EdgePairs pairs;
  pairs.reserve(4 * grid.size());
  std::vector<std::pair<double, std::uint32_t>> cand;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Point p = grid[g];
    // Clamp the lookup position onto the lattice so grid nodes outside the
    // mesh extent still search the nearest corner region.
    const double ci = std::clamp((p.x - mesh.origin.x) / mesh.spacing_x, 0.0,
                                 static_cast<double>(mesh.nx - 1));
    const double cj = std::clamp((p.y - mesh.origin.y) / mesh.spacing_y, 0.0,
                                 static_cast<double>(mesh.ny - 1));
    const auto [i0, i1] = window(ci, reach / mesh.spacing_x + 1, mesh.nx);
    const auto [j0, j1] = window(cj, reach / mesh.spacing_y + 1, mesh.ny);
    cand.clear();
    for (std::size_t j = j0; j <= j1; ++j)
      for (std::size_t i = i0; i <= i1; ++i) {
        const auto m = static_cast<std::uint32_t>(j * mesh.nx + i);
        cand.emplace_back(distance(p, mesh.nodes[m]), m);
      }
    if (cand.size() < 4) {
      cand.clear();
      for (std::uint32_t m = 0; m < mesh.size(); ++m) cand.emplace_back(distance(p, mesh.nodes[m]), m);
    }
    std::partial_sort(cand.begin(), cand.begin() + 4, cand.end());
    for (int k = 0; k < 4; ++k) pairs.emplace_back(cand[k].second, static_cast<std::uint32_t>(g));
  }
  return to_edge_set(std::move(pairs));
}

ad::Tensor compute_edge_features(const EdgeSet& edges, std::span<const Point> src_nodes,
                                 std::span<const Point> dst_nodes, double max_length) {
  ad::Tensor f({edges.size(), 3});
  const double inv = max_length > 0 ? 1.0 / max_length : 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Point s = src_nodes[edges.src[e]];
    const Point d = dst_nodes[edges.dst[e]];
    const double dx = d.x - s.x, dy = d.y - s.y;
    f.at(e, 0) = std::hypot(dx, dy) * inv;
    f.at(e, 1) = dx * inv;
    f.at(e, 2) = dy * inv;
  }
  return f;
}

double max_coordinate(const GridSpec& grid) {
  return static_cast<double>(std::max(grid.width, grid.height) - 1);
}

ad::Tensor grid_static_features(const GridSpec& grid, std::span<const double> topography) {
  if (topography.size() != grid.num_nodes()) {
    throw DimensionError("grid_static_features: topography has " +
                         std::to_string(topography.size()) + " values for " +
                         std::to_string(grid.num_nodes()) + " grid nodes");
  }
  const double maxc = max_coordinate(grid);
  const auto mask = boundary_mask(grid);
  const auto pts = grid_coordinates(grid);
  ad::Tensor f({grid.num_nodes(), 4});
  for (std::size_t n = 0; n < pts.size(); ++n) {
    f.at(n, 0) = pts[n].x / maxc;
    f.at(n, 1) = pts[n].y / maxc;
    f.at(n, 2) = topography[n];
    f.at(n, 3) = mask[n];
  }
  return f;
}

ad::Tensor mesh_static_features(const GridSpec& grid, const MeshLevel& level) {
  const double maxc = max_coordinate(grid);
  ad::Tensor f({level.size(), 2});
  for (std::size_t n = 0; n < level.size(); ++n) {
    f.at(n, 0) = level.nodes[n].x / maxc;
    f.at(n, 1) = level.nodes[n].y / maxc;
  }
  return f;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Multiscale: return "multiscale";
    case Variant::Hierarchical: return "hierarchical";
    case Variant::Single: return "single";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "multiscale" || s == "gc" || s == "gc-lam") return Variant::Multiscale;
  if (s == "hierarchical" || s == "hi" || s == "hi-lam") return Variant::Hierarchical;
  if (s == "single" || s == "1l" || s == "1l-lam") return Variant::Single;
  throw SpecError("unknown graph variant '" + s + "'");
}

std::size_t LamGraph::mesh_node_count() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.size();
  return n;
}

std::size_t LamGraph::mesh_edge_count() const {
  std::size_t n = 0;
  for (const auto& e : intra) n += e.size();
  for (const auto& e : up) n += e.size();
  for (const auto& e : down) n += e.size();
  return n;
}

LamGraph build_graph(const GridSpec& grid, std::size_t n1, std::size_t levels, Variant variant) {
  LamGraph g = assemble_graph(
      grid, mesh_levels(grid, n1, variant == Variant::Single ? 1 : levels), variant);
  g.n1 = n1;
  g.num_levels = levels;
  return g;
}

LamGraph assemble_graph(const GridSpec& grid, std::vector<MeshLevel> lattice, Variant variant) {
  grid.validate();
  if (lattice.empty()) throw SpecError("assemble_graph: no mesh levels");
  if (variant == Variant::Single) lattice.resize(1);
  LamGraph g;
  g.variant = variant;
  g.grid = grid;
  g.n1 = lattice.front().nx;
  g.num_levels = lattice.size();
  g.grid_nodes = grid_coordinates(grid);
  g.boundary = boundary_mask(grid);

  switch (variant) {
    case Variant::Single:
    case Variant::Multiscale: {
      MultiscaleMesh ms = build_multiscale(lattice);
      g.intra.push_back(ms.mesh.edges);
      g.levels.push_back(std::move(ms.mesh));
      break;
    }
    case Variant::Hierarchical: {
      if (lattice.size() >= 2) {
        HierarchicalMesh h = build_hierarchy(lattice);
        g.levels = std::move(h.levels);
        g.up = std::move(h.up);
        g.down = std::move(h.down);
      } else {
        g.levels = std::move(lattice);
      }
      for (const auto& l : g.levels) g.intra.push_back(l.edges);
      break;
    }
  }

  const MeshLevel& bottom = g.levels.front();
  g.g2m = build_grid2mesh(g.grid_nodes, bottom);
  g.m2g = build_mesh2grid(g.grid_nodes, bottom);
  {
    std::vector<std::uint8_t> seen(grid.num_nodes(), 0);
    for (auto s : g.g2m.src) seen[s] = 1;
    g.g2m_unconnected = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 0));
  }

  // Normalise every edge feature by the longest edge of the whole graph.
  double longest = 0.0;
  auto scan = [&](const EdgeSet& e, std::span<const Point> src, std::span<const Point> dst) {
    for (std::size_t k = 0; k < e.size(); ++k)
      longest = std::max(longest, distance(src[e.src[k]], dst[e.dst[k]]));
  };
  for (std::size_t l = 0; l < g.levels.size(); ++l) scan(g.intra[l], g.levels[l].nodes, g.levels[l].nodes);
  for (std::size_t l = 0; l < g.up.size(); ++l) {
    scan(g.up[l], g.levels[l].nodes, g.levels[l + 1].nodes);
    scan(g.down[l], g.levels[l + 1].nodes, g.levels[l].nodes);
  }
  scan(g.g2m, g.grid_nodes, bottom.nodes);
  scan(g.m2g, bottom.nodes, g.grid_nodes);

  for (std::size_t l = 0; l < g.levels.size(); ++l) {
    g.intra[l].features =
        compute_edge_features(g.intra[l], g.levels[l].nodes, g.levels[l].nodes, longest);
    g.levels[l].edges.features = g.intra[l].features;
  }
  for (std::size_t l = 0; l < g.up.size(); ++l) {
    g.up[l].features =
        compute_edge_features(g.up[l], g.levels[l].nodes, g.levels[l + 1].nodes, longest);
    g.down[l].features =
        compute_edge_features(g.down[l], g.levels[l + 1].nodes, g.levels[l].nodes, longest);
  }
  g.g2m.features = compute_edge_features(g.g2m, g.grid_nodes, bottom.nodes, longest);
  g.m2g.features = compute_edge_features(g.m2g, bottom.nodes, g.grid_nodes, longest);
  return g;
}

}  // namespace lamcast::graph
