#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lamcast/autodiff/tensor.hpp"

namespace lamcast::graph {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Limited-area grid of width x height nodes with unit spacing; node
/// (i, j) has index j * width + i. The outermost `boundary` rows and
/// columns form the boundary band.
struct GridSpec {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t boundary = 10;

  std::size_t num_nodes() const { return width * height; }
  /// Throws SpecError unless width, height >= 2 * boundary + 2.
  void validate() const;
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

std::vector<Point> grid_coordinates(const GridSpec& grid);
/// 1 for nodes within `boundary` cells of the area edge.
std::vector<std::uint8_t> boundary_mask(const GridSpec& grid);

/// Directed edges plus their static features (E x 3: length, dx, dy),
/// sorted lexicographically by (src, dst).
struct EdgeSet {
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  ad::Tensor features;

  std::size_t size() const { return src.size(); }
  friend bool operator==(const EdgeSet&, const EdgeSet&) = default;
};

/// Regular nx x ny lattice of mesh nodes; node (i, j) sits at
/// origin + (i * spacing_x, j * spacing_y) and has index j * nx + i.
struct MeshLevel {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double spacing_x = 1.0;
  double spacing_y = 1.0;
  Point origin;
  std::vector<Point> nodes;
  /// Bidirectional 8-neighbourhood edges, both directions listed.
  EdgeSet edges;

  std::size_t size() const { return nodes.size(); }
  /// Distance between neighbouring mesh nodes used by grid2mesh.
  double node_distance() const;
  friend bool operator==(const MeshLevel&, const MeshLevel&) = default;
};

MeshLevel build_mesh_level(std::size_t nx, std::size_t ny, double spacing_x, double spacing_y,
                           Point origin = {});
inline MeshLevel build_mesh_level(std::size_t nx, std::size_t ny, double spacing,
                                  Point origin = {}) {
  return build_mesh_level(nx, ny, spacing, spacing, origin);
}

/// Mesh levels for a grid: level l (0-based) is an n x n array with
/// n = n1 / 3^l, cell-centred over the grid extent so that every level's
/// nodes coincide with the centres of 3 x 3 groups one level below.
std::vector<MeshLevel> mesh_levels(const GridSpec& grid, std::size_t n1, std::size_t levels);

struct MultiscaleMesh {
  MeshLevel mesh;  // finest level's nodes, union of all levels' edges
  /// merged_index[l][k]: merged node coinciding with node k of level l.
  std::vector<std::vector<std::uint32_t>> merged_index;
};

/// Merges levels onto the finest level's nodes. Throws AlignmentError if an
/// upper-level node has no coincident finest-level node.
MultiscaleMesh build_multiscale(std::span<const MeshLevel> levels);

struct HierarchicalMesh {
  std::vector<MeshLevel> levels;
  std::vector<EdgeSet> up;    // up[l]: level l -> level l + 1
  std::vector<EdgeSet> down;  // down[l]: level l + 1 -> level l
};

/// Keeps levels distinct and links every node to its closest node one
/// level up (ties: lowest index); down edges are the reversed up edges.
/// Throws SpecError for fewer than two levels.
HierarchicalMesh build_hierarchy(std::span<const MeshLevel> levels);

inline constexpr double kGrid2MeshRadius = 0.67;

/// Grid -> mesh edges to every mesh node closer than 0.67 * d_m.
EdgeSet build_grid2mesh(std::span<const Point> grid, const MeshLevel& mesh);

/// Mesh -> grid edges from the 4 closest mesh nodes of every grid node
/// (ties: lowest mesh index). Throws SpecError for meshes under 4 nodes.
EdgeSet build_mesh2grid(std::span<const Point> grid, const MeshLevel& mesh);

/// Per edge (|d|, dx, dy) / max_length, with d = dst - src.
ad::Tensor compute_edge_features(const EdgeSet& edges, std::span<const Point> src_nodes,
                                 std::span<const Point> dst_nodes, double max_length);

/// Largest coordinate value on the grid, used to normalise positions.
double max_coordinate(const GridSpec& grid);

/// N x 4: (x / max, y / max, topography, in-boundary flag).
ad::Tensor grid_static_features(const GridSpec& grid, std::span<const double> topography);

/// n x 2 normalised mesh node positions.
ad::Tensor mesh_static_features(const GridSpec& grid, const MeshLevel& level);

enum class Variant { Multiscale, Hierarchical, Single };

std::string to_string(Variant v);
/// Accepts multiscale|hierarchical|single (and gc|hi|1l). Throws SpecError.
Variant parse_variant(const std::string& s);

struct LamGraph {
  Variant variant = Variant::Multiscale;
  GridSpec grid;
  std::size_t n1 = 0;
  std::size_t num_levels = 0;  // levels requested at build time
  std::vector<Point> grid_nodes;
  std::vector<std::uint8_t> boundary;
  /// Hierarchical: one entry per level. Multiscale / single: one merged level.
  std::vector<MeshLevel> levels;
  /// Intra-level edge sets, parallel to `levels`.
  std::vector<EdgeSet> intra;
  std::vector<EdgeSet> up;
  std::vector<EdgeSet> down;
  EdgeSet g2m;
  EdgeSet m2g;
  /// Grid nodes that received no grid2mesh edge.
  std::size_t g2m_unconnected = 0;

  std::size_t mesh_node_count() const;
  std::size_t mesh_edge_count() const;

  friend bool operator==(const LamGraph&, const LamGraph&) = default;
};

/// Builds the full graph for a variant. For `Single` only the finest of
/// the `levels` levels is used.
LamGraph build_graph(const GridSpec& grid, std::size_t n1, std::size_t levels, Variant variant);

/// Builds a graph from explicit mesh levels (finest first). Used by
/// build_graph and for hand-sized test graphs.
LamGraph assemble_graph(const GridSpec& grid, std::vector<MeshLevel> levels, Variant variant);

void save_graph(const LamGraph& g, const std::filesystem::path& path);
LamGraph load_graph(const std::filesystem::path& path);

}  // namespace lamcast::graph
