#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "psmom/cluster_tree.hpp"
#include "psmom/geometry.hpp"

using namespace psmom;

namespace {

double diameter_of(const std::vector<Vec3>& pts) {
  return BoundingBox::of(pts).diameter();
}

// reference recursion: sorted-by-longest-axis median split with the same rule
void reference_split(std::vector<Vec3> pts, double min_diam, std::vector<std::vector<Vec3>>& leaves) {
  const auto box = BoundingBox::of(pts);
  int axis = 0;
  (box.hi - box.lo).maxCoeff(&axis);
  std::sort(pts.begin(), pts.end(), [axis](const Vec3& a, const Vec3& b) { return a(axis) < b(axis); });
  const size_t half = pts.size() / 2;
  if (pts.size() >= 2) {
    std::vector<Vec3> lo(pts.begin(), pts.begin() + half), hi(pts.begin() + half, pts.end());
    const bool split = std::min(diameter_of(lo), diameter_of(hi)) >= min_diam ||
                       box.diameter() >= 2.0 * min_diam;
    if (split && box.diameter() > 0.0) {
      reference_split(lo, min_diam, leaves);
      reference_split(hi, min_diam, leaves);
      return;
    }
  }
  leaves.push_back(pts);
}

std::vector<Vec3> sphere_centroids(double radius, double edge) {
  return build_rwg(make_sphere(radius, edge)).centroids();
}

void check_structure(const ClusterTree& tree) {
  const auto& perm = tree.permutation();
  std::vector<int> sorted(perm);
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < tree.size(); ++i) CHECK(sorted[i] == i);
  for (const auto& node : tree.nodes()) {
    if (node.is_leaf()) continue;
    const auto& a = tree.node(node.children[0]);
    const auto& b = tree.node(node.children[1]);
    CHECK(a.begin == node.begin);
    CHECK(a.end == b.begin);
    CHECK(b.end == node.end);
    CHECK(a.parent == b.parent);
    CHECK(a.level == node.level + 1);
  }
}

// every (row, col) index pair is covered exactly once
void check_tiling(const ClusterTree& tree, const BlockPartition& part) {
  const int n = tree.size();
  std::vector<int> cover(static_cast<size_t>(n) * n, 0);
  long long area = 0;
  for (const auto* list : {&part.near, &part.far}) {
    for (const auto& b : *list) {
      const auto& t = tree.node(b.row);
      const auto& s = tree.node(b.col);
      area += static_cast<long long>(t.size()) * s.size();
      for (int i = t.begin; i < t.end; ++i) {
        for (int j = s.begin; j < s.end; ++j) ++cover[static_cast<size_t>(i) * n + j];
      }
    }
  }
  CHECK(area == static_cast<long long>(n) * n);
  CHECK(std::all_of(cover.begin(), cover.end(), [](int c) { return c == 1; }));
  for (const auto& b : part.far) {
    CHECK(admissible(tree.node(b.row).box, tree.node(b.col).box, part.eta));
  }
  for (const auto& b : part.near) {
    CHECK(tree.node(b.row).is_leaf());
    CHECK(tree.node(b.col).is_leaf());
  }
}

}  // namespace

TEST_CASE("admissibility") {
  const BoundingBox a{Vec3(0, 0, 0), Vec3(1, 1, 1)};
  CHECK(admissible(a, BoundingBox{Vec3(3, 0, 0), Vec3(4, 1, 1)}, 1.0));       // gap 2 >= sqrt 3
  CHECK_FALSE(admissible(a, BoundingBox{Vec3(2.5, 0, 0), Vec3(3.5, 1, 1)}, 1.0));  // 1.5 < sqrt 3
  CHECK_FALSE(admissible(a, a, 1.0));
  CHECK_FALSE(admissible(a, BoundingBox{Vec3(1, 0, 0), Vec3(2, 1, 1)}, 100.0));  // touching
  CHECK(admissible(a, BoundingBox{Vec3(2.5, 0, 0), Vec3(3.5, 1, 1)}, 2.0));
  CHECK(a.distance(BoundingBox{Vec3(2, 3, 1), Vec3(5, 5, 5)}) == doctest::Approx(std::sqrt(5.0)));
}

TEST_CASE("line of 8 centroids over 4 wavelengths") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 8; ++i) pts.emplace_back(4.0 * i / 7.0, 0.0, 0.0);
  std::shuffle(pts.begin(), pts.end(), std::mt19937(3));
  const auto tree = build_tree(pts, 1.0, 0.5);
  check_structure(tree);

  std::vector<std::vector<Vec3>> ref;
  reference_split(pts, 0.5, ref);
  REQUIRE(tree.num_leaves() == static_cast<int>(ref.size()));
  for (int i = 0; i < tree.num_leaves(); ++i) {
    const auto& leaf = tree.leaf(i);
    CHECK(leaf.box.diameter() >= 0.5);
    CHECK(leaf.size() == static_cast<int>(ref[i].size()));
    CHECK(tree.node(leaf.parent).box.diameter() >= 1.0);
  }
  CHECK(tree.depth() == 2);
}

TEST_CASE("degenerate trees") {
  const std::vector<Vec3> same(5, Vec3(1, 2, 3));
  const auto t1 = build_tree(same, 1.0);
  CHECK(t1.num_leaves() == 1);
  CHECK(t1.depth() == 0);
  const auto p1 = partition_blocks(t1);
  CHECK(p1.near.size() == 1);
  CHECK(p1.far.empty());

  const std::vector<Vec3> two = {Vec3(0, 0, 0), Vec3(10, 0, 0)};
  const auto t2 = build_tree(two, 1.0);
  CHECK(t2.num_leaves() == 2);
  CHECK(t2.nodes().size() == 3);
}

TEST_CASE("two separated clusters: two near self blocks and a mirrored far pair") {
  std::vector<Vec3> pts;
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  for (int i = 0; i < 20; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  for (int i = 0; i < 20; ++i) pts.emplace_back(10.0 + u(rng), u(rng), u(rng));
  const auto tree = build_tree(pts, 1.0);
  REQUIRE(tree.num_leaves() == 2);
  const auto part = partition_blocks(tree);
  CHECK(part.near.size() == 2);
  REQUIRE(part.far.size() == 2);
  CHECK(part.far[0].row == part.far[1].col);
  CHECK(part.far[0].col == part.far[1].row);
  check_tiling(tree, part);
}

TEST_CASE("row of four leaves: touching pairs near, rest far") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 16; ++i) pts.emplace_back(0.5 * i / 3.0 + 0.0 * i, 0.0, 0.0);
  // 4 groups of 4 points each spanning 0.5, packed end to end with a 1/6 spacing
  pts.clear();
  for (int g = 0; g < 4; ++g) {
    for (int i = 0; i < 4; ++i) pts.emplace_back(0.7 * g + 0.5 * i / 3.0, 0.0, 0.0);
  }
  const auto tree = build_tree(pts, 1.0, 0.5);
  REQUIRE(tree.num_leaves() == 4);
  const auto part = partition_blocks(tree, 1.0);
  check_tiling(tree, part);
  // exhaustive oracle over leaf pairs
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const bool adm = i != j && admissible(tree.leaf(i).box, tree.leaf(j).box, 1.0);
      bool in_near = false;
      for (const auto& b : part.near) {
        in_near |= b.row == tree.leaves()[i] && b.col == tree.leaves()[j];
      }
      if (!adm) CHECK(in_near);
    }
  }
  CHECK(part.near.size() == 10);  // self + neighbours (gap 0.2 < 0.5)
}

TEST_CASE("sphere tree invariants") {
  for (double radius : {0.5, 1.0}) {
    const auto pts = sphere_centroids(radius, 0.1);
    const auto tree = build_tree(pts, 1.0, 0.5);
    check_structure(tree);
    for (int i = 0; i < tree.num_leaves(); ++i) CHECK(tree.leaf(i).box.diameter() >= 0.5);
    const auto part = partition_blocks(tree, 1.0);
    check_tiling(tree, part);

    const auto adj = near_adjacency(tree, part);
    size_t total = 0, most = 0;
    for (const auto& a : adj) {
      total += a.size();
      most = std::max(most, a.size());
      for (int j : a) {
        CHECK(std::find(adj[j].begin(), adj[j].end(), static_cast<int>(&a - adj.data())) !=
              adj[j].end());
      }
    }
    const double mean = double(total) / adj.size();
    MESSAGE("radius " << radius << ": mean near neighbours " << mean << ", max " << most);
    CHECK(mean <= 26.0);

    // permutation round trip
    VectorXc v(tree.size());
    for (int i = 0; i < tree.size(); ++i) v(i) = cplx(i, -i);
    CHECK((tree.to_original_order(tree.to_tree_order(v)) - v).norm() == 0.0);
    CHECK(tree.to_tree_order(v)(0) == v(tree.permutation()[0]));
  }
}

TEST_CASE("leaf ordering") {
  SUBCASE("shuffled path graph reaches bandwidth 1") {
    // path 3 - 0 - 4 - 1 - 2
    const std::vector<std::vector<int>> adj = {{3, 4}, {4, 2}, {1}, {0}, {0, 1}};
    const auto order = order_leaves(adj);
    CHECK(bandwidth(adj, order) == 1);
    std::vector<int> sorted(order);
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4});
  }
  SUBCASE("banded input is not made worse") {
    std::vector<std::vector<int>> adj(8);
    for (int i = 0; i < 8; ++i) {
      for (int j = std::max(0, i - 2); j <= std::min(7, i + 2); ++j) {
        if (j != i) adj[i].push_back(j);
      }
    }
    std::vector<int> identity(8);
    std::iota(identity.begin(), identity.end(), 0);
    CHECK(bandwidth(adj, order_leaves(adj)) <= bandwidth(adj, identity));
  }
  SUBCASE("components stay contiguous") {
    // {0, 2, 4} triangle and {1, 3} edge, 5 isolated
    const std::vector<std::vector<int>> adj = {{2, 4}, {3}, {0, 4}, {1}, {0, 2}, {}};
    const auto order = order_leaves(adj);
    std::vector<int> comp = {0, 1, 0, 1, 0, 2};
    int changes = 0;
    for (size_t k = 1; k < order.size(); ++k) changes += comp[order[k]] != comp[order[k - 1]];
    CHECK(changes == 2);
  }
  SUBCASE("sphere: RCM reduces bandwidth against tree order") {
    const auto tree = build_tree(sphere_centroids(1.0, 0.1), 1.0, 0.5);
    const auto adj = near_adjacency(tree, partition_blocks(tree));
    std::vector<int> identity(adj.size());
    std::iota(identity.begin(), identity.end(), 0);
    CHECK(bandwidth(adj, order_leaves(adj)) <= bandwidth(adj, identity));
  }
}
