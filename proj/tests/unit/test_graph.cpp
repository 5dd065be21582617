#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "lamcast/errors.hpp"
#include "lamcast/graph/graph.hpp"

using namespace lamcast;
using namespace lamcast::graph;

namespace {

// Independent enumeration: every ordered pair of distinct lattice nodes whose
// index offsets are both within one.
std::size_t enumerate_neighbour_pairs(std::size_t n) {
  std::size_t count = 0;
  for (std::size_t a = 0; a < n * n; ++a) {
    for (std::size_t b = 0; b < n * n; ++b) {
      if (a == b) continue;
      const long ai = static_cast<long>(a % n), aj = static_cast<long>(a / n);
      const long bi = static_cast<long>(b % n), bj = static_cast<long>(b / n);
      if (std::abs(ai - bi) <= 1 && std::abs(aj - bj) <= 1) ++count;
    }
  }
  return count;
}

std::vector<std::size_t> in_degrees(const EdgeSet& e, std::size_t n) {
  std::vector<std::size_t> deg(n, 0);
  for (auto d : e.dst) ++deg[d];
  return deg;
}

bool sorted_unique(const EdgeSet& e) {
  for (std::size_t k = 1; k < e.size(); ++k) {
    if (std::make_pair(e.src[k - 1], e.dst[k - 1]) >= std::make_pair(e.src[k], e.dst[k]))
      return false;
  }
  return true;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lamcast_test_graph_" + name);
}

}  // namespace

TEST_CASE("build_mesh_level counts") {
  auto l3 = build_mesh_level(3, 3, 1.0);
  CHECK(l3.size() == 9);
  CHECK(l3.edges.size() == 40);
  auto l2 = build_mesh_level(2, 2, 1.0);
  CHECK(l2.size() == 4);
  CHECK(l2.edges.size() == 12);
  CHECK(sorted_unique(l3.edges));
  CHECK_THROWS_AS(build_mesh_level(1, 3, 1.0), SpecError);
  CHECK_THROWS_AS(build_mesh_level(3, 0, 1.0), SpecError);
}

TEST_CASE("intra-level edge count matches enumeration and closed form") {
  for (std::size_t n = 2; n <= 10; ++n) {
    CAPTURE(n);
    const std::size_t oracle = enumerate_neighbour_pairs(n);
    CHECK(oracle == 4 * (n - 1) * (2 * n - 1));
    CHECK(build_mesh_level(n, n, 1.0).edges.size() == oracle);
  }
  CHECK(build_mesh_level(81, 81, 1.0).edges.size() == 51520);
}

TEST_CASE("interior mesh nodes have eight neighbours") {
  auto lev = build_mesh_level(6, 5, 2.0, 3.0);
  auto deg = in_degrees(lev.edges, lev.size());
  for (std::size_t j = 1; j + 1 < 5; ++j)
    for (std::size_t i = 1; i + 1 < 6; ++i) CHECK(deg[j * 6 + i] == 8);
  CHECK(deg[0] == 3);
}

TEST_CASE("build_multiscale") {
  SUBCASE("single level is unchanged") {
    std::vector<MeshLevel> one{build_mesh_level(4, 4, 1.0)};
    auto ms = build_multiscale(one);
    CHECK(ms.mesh == one[0]);
  }
  SUBCASE("9x9 plus 3x3") {
    GridSpec grid{30, 30, 2};
    auto levels = mesh_levels(grid, 9, 2);
    auto ms = build_multiscale(levels);
    CHECK(ms.mesh.size() == 81);
    CHECK(ms.mesh.edges.size() == 584);
    CHECK(sorted_unique(ms.mesh.edges));
    // Coarse node j lands on fine node 3j+1 in both axes.
    for (std::size_t k = 0; k < 9; ++k) {
      const std::size_t i = k % 3, j = k / 3;
      CHECK(ms.merged_index[1][k] == (3 * j + 1) * 9 + 3 * i + 1);
    }
    auto deg = in_degrees(ms.mesh.edges, 81);
    std::set<std::uint32_t> high, coarse(ms.merged_index[1].begin(), ms.merged_index[1].end());
    for (std::uint32_t n = 0; n < 81; ++n)
      if (deg[n] > 8) high.insert(n);
    CHECK(high == coarse);
  }
  SUBCASE("misaligned levels") {
    std::vector<MeshLevel> levels{build_mesh_level(9, 9, 1.0),
                                  build_mesh_level(3, 3, 3.0, {0.5, 0.5})};
    CHECK_THROWS_AS(build_multiscale(levels), AlignmentError);
  }
}

TEST_CASE("build_hierarchy") {
  SUBCASE("9x9 plus 3x3") {
    GridSpec grid{30, 30, 2};
    auto levels = mesh_levels(grid, 9, 2);
    auto h = build_hierarchy(levels);
    REQUIRE(h.up.size() == 1);
    CHECK(h.up[0].size() == 81);
    CHECK(h.down[0].size() == 81);
    auto deg = in_degrees(h.up[0], 9);
    for (auto d : deg) CHECK(d == 9);
    // Every down edge is a flipped up edge.
    std::set<std::pair<std::uint32_t, std::uint32_t>> up, down;
    for (std::size_t k = 0; k < h.up[0].size(); ++k) up.emplace(h.up[0].src[k], h.up[0].dst[k]);
    for (std::size_t k = 0; k < h.down[0].size(); ++k)
      down.emplace(h.down[0].dst[k], h.down[0].src[k]);
    CHECK(up == down);
  }
  SUBCASE("identical levels map to coincident nodes") {
    std::vector<MeshLevel> levels{build_mesh_level(3, 3, 1.0), build_mesh_level(3, 3, 1.0)};
    auto h = build_hierarchy(levels);
    for (std::size_t k = 0; k < 9; ++k) CHECK(h.up[0].src[k] == h.up[0].dst[k]);
    auto f = compute_edge_features(h.up[0], levels[0].nodes, levels[1].nodes, 1.0);
    for (std::size_t k = 0; k < 9; ++k) CHECK(f.at(k, 0) == 0.0);
  }
  SUBCASE("one level is rejected") {
    std::vector<MeshLevel> levels{build_mesh_level(3, 3, 1.0)};
    CHECK_THROWS_AS(build_hierarchy(levels), SpecError);
  }
}

TEST_CASE("build_grid2mesh geometry") {
  auto mesh = build_mesh_level(4, 4, 3.0);
  std::vector<Point> coincident{{3.0, 3.0}};
  auto e1 = build_grid2mesh(coincident, mesh);
  REQUIRE(e1.size() == 1);
  CHECK(e1.dst[0] == 5);
  std::vector<Point> midpoint{{1.5, 0.0}};
  auto e2 = build_grid2mesh(midpoint, mesh);
  REQUIRE(e2.size() == 2);
  CHECK(e2.dst[0] == 0);
  CHECK(e2.dst[1] == 1);
  std::vector<Point> far{{30.0, 30.0}};
  CHECK(build_grid2mesh(far, mesh).size() == 0);
}

TEST_CASE("build_mesh2grid") {
  GridSpec grid{25, 22, 3};
  auto pts = grid_coordinates(grid);
  auto levels = mesh_levels(grid, 6, 1);
  auto e = build_mesh2grid(pts, levels[0]);
  CHECK(e.size() == 4 * grid.num_nodes());
  auto deg = in_degrees(e, grid.num_nodes());
  for (auto d : deg) CHECK(d == 4);

  // Brute-force oracle for the k-NN with lowest-index ties.
  std::map<std::uint32_t, std::set<std::uint32_t>> got;
  for (std::size_t k = 0; k < e.size(); ++k) got[e.dst[k]].insert(e.src[k]);
  for (std::uint32_t g = 0; g < pts.size(); g += 7) {
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t m = 0; m < levels[0].size(); ++m) {
      all.emplace_back(std::hypot(pts[g].x - levels[0].nodes[m].x, pts[g].y - levels[0].nodes[m].y), m);
    }
    std::sort(all.begin(), all.end());
    std::set<std::uint32_t> want;
    for (int k = 0; k < 4; ++k) want.insert(all[k].second);
    CHECK(got[g] == want);
  }

  SUBCASE("tie-break at a mesh node") {
    auto mesh = build_mesh_level(3, 3, 3.0);
    std::vector<Point> centre{{3.0, 3.0}};
    auto t = build_mesh2grid(centre, mesh);
    std::set<std::uint32_t> src(t.src.begin(), t.src.end());
    // Coincident node 4 plus the three lowest-index nodes at distance 3.
    CHECK(src == std::set<std::uint32_t>{1, 3, 4, 5});
  }
  SUBCASE("too few mesh nodes") {
    MeshLevel tiny;
    tiny.nx = 1;
    tiny.ny = 3;
    tiny.nodes = {{0, 0}, {0, 1}, {0, 2}};
    CHECK_THROWS_AS(build_mesh2grid(pts, tiny), SpecError);
  }
}

TEST_CASE("compute_edge_features") {
  std::vector<Point> nodes{{0, 0}, {3, 0}};
  EdgeSet e;
  e.src = {0, 1};
  e.dst = {1, 0};
  auto f = compute_edge_features(e, nodes, nodes, 3.0);
  CHECK(f.at(0, 0) == 1.0);
  CHECK(f.at(0, 1) == 1.0);
  CHECK(f.at(0, 2) == 0.0);
  CHECK(f.at(1, 0) == 1.0);
  CHECK(f.at(1, 1) == -1.0);
}

TEST_CASE("grid_static_features") {
  GridSpec grid{30, 30, 10};
  std::vector<double> topo(grid.num_nodes(), 0.25);
  auto f = grid_static_features(grid, topo);
  CHECK(f.at(0, 0) == 0.0);
  CHECK(f.at(0, 1) == 0.0);
  CHECK(f.at(0, 3) == 1.0);
  const std::size_t centre = 15 * 30 + 15;
  CHECK(f.at(centre, 3) == 0.0);
  CHECK(f.at(centre, 2) == 0.25);
  CHECK(f.at(grid.num_nodes() - 1, 0) == 1.0);
  CHECK(f.at(grid.num_nodes() - 1, 1) == 1.0);
  // Band is exactly b cells wide.
  CHECK(f.at(10 * 30 + 9, 3) == 1.0);
  CHECK(f.at(10 * 30 + 10, 3) == 0.0);
  CHECK(f.at(19 * 30 + 19, 3) == 0.0);
  CHECK(f.at(19 * 30 + 20, 3) == 1.0);
  std::vector<double> short_topo(3);
  CHECK_THROWS_AS(grid_static_features(grid, short_topo), DimensionError);
  CHECK_THROWS_AS((GridSpec{21, 40, 10}.validate()), SpecError);
}

TEST_CASE("graph variants on a small grid") {
  GridSpec grid{40, 34, 4};
  auto hi = build_graph(grid, 9, 2, Variant::Hierarchical);
  auto gc = build_graph(grid, 9, 2, Variant::Multiscale);
  auto one = build_graph(grid, 9, 2, Variant::Single);
  CHECK(hi.mesh_node_count() == 90);
  CHECK(gc.mesh_node_count() == 81);
  CHECK(one.mesh_node_count() == 81);
  CHECK(gc.mesh_edge_count() == 584);
  CHECK(one.mesh_edge_count() == 544);
  CHECK(hi.mesh_edge_count() == 584 + 2 * 81);

  for (const LamGraph* g : {&hi, &gc, &one}) {
    double max_len = 0.0;
    auto scan = [&](const EdgeSet& e) {
      CHECK(sorted_unique(e));
      for (double v : e.features.values()) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
      for (std::size_t k = 0; k < e.size(); ++k) max_len = std::max(max_len, e.features.at(k, 0));
    };
    for (const auto& e : g->intra) scan(e);
    for (const auto& e : g->up) scan(e);
    for (const auto& e : g->down) scan(e);
    scan(g->g2m);
    scan(g->m2g);
    CHECK(max_len == 1.0);
    for (auto d : g->g2m.dst) CHECK(d < g->levels.front().size());
  }

  // Down features are negated up features of the flipped edge.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> up_index;
  for (std::size_t k = 0; k < hi.up[0].size(); ++k) up_index[{hi.up[0].src[k], hi.up[0].dst[k]}] = k;
  for (std::size_t k = 0; k < hi.down[0].size(); ++k) {
    const std::size_t u = up_index.at({hi.down[0].dst[k], hi.down[0].src[k]});
    CHECK(hi.down[0].features.at(k, 0) == hi.up[0].features.at(u, 0));
    CHECK(hi.down[0].features.at(k, 1) == -hi.up[0].features.at(u, 1));
    CHECK(hi.down[0].features.at(k, 2) == -hi.up[0].features.at(u, 2));
  }
}

TEST_CASE("graph save and load") {
  GridSpec grid{40, 34, 4};
  auto path = temp_file("roundtrip.lcg");
  for (Variant v : {Variant::Hierarchical, Variant::Multiscale, Variant::Single}) {
    auto g = build_graph(grid, 9, 2, v);
    save_graph(g, path);
    CHECK(load_graph(path) == g);
  }
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 17);
  CHECK_THROWS_AS(load_graph(path), CorruptFileError);
  std::filesystem::remove(path);
}

TEST_CASE("variant names") {
  CHECK(parse_variant("gc") == Variant::Multiscale);
  CHECK(parse_variant("hierarchical") == Variant::Hierarchical);
  CHECK(parse_variant("1l") == Variant::Single);
  CHECK_THROWS_AS(parse_variant("icosahedral"), SpecError);
}

TEST_CASE("MEPS-scale graph counts") {
  GridSpec grid{238, 268, 10};
  auto hi = build_graph(grid, 81, 4, Variant::Hierarchical);
  CHECK(hi.mesh_node_count() == 7380);
  CHECK(hi.mesh_edge_count() == 72358);
  auto gc = build_graph(grid, 81, 4, Variant::Multiscale);
  CHECK(gc.mesh_node_count() == 6561);
  CHECK(gc.mesh_edge_count() == 57616);
  CHECK(gc.m2g.size() == 255136);
  CHECK(gc.g2m.size() == 100656);
  auto one = build_graph(grid, 81, 4, Variant::Single);
  CHECK(one.mesh_node_count() == 6561);
  CHECK(one.mesh_edge_count() == 51520);

  auto path = temp_file("meps.lcg");
  save_graph(gc, path);
  auto back = load_graph(path);
  CHECK(back.mesh_edge_count() == 57616);
  CHECK(back.m2g.size() == 255136);
  std::filesystem::remove(path);
}
