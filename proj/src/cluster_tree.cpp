#include "psmom/cluster_tree.hpp"

#include <algorithm>
#include <deque>
#include <numeric>

namespace psmom {

BoundingBox BoundingBox::of(std::span<const Vec3> points) {
  BoundingBox b;
  if (points.empty()) return b;
  b.lo = b.hi = points.front();
  for (const auto& p : points) {
    b.lo = b.lo.cwiseMin(p);
    b.hi = b.hi.cwiseMax(p);
  }
  return b;
}

double BoundingBox::distance(const BoundingBox& other) const {
  const Vec3 gap = (other.lo - hi).cwiseMax(lo - other.hi).cwiseMax(0.0);
  return gap.norm();
}

ClusterTree::ClusterTree(std::vector<ClusterNode> nodes, std::vector<int> permutation,
                         double wavelength, double leaf_factor)
    : nodes_(std::move(nodes)),
      permutation_(std::move(permutation)),
      wavelength_(wavelength),
      leaf_factor_(leaf_factor) {
  inverse_.assign(permutation_.size(), 0);
  for (int i = 0; i < static_cast<int>(permutation_.size()); ++i) inverse_[permutation_[i]] = i;
  // depth-first traversal yields leaves in tree order
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    auto& n = nodes_[id];
    if (n.is_leaf()) {
      n.leaf_index = static_cast<int>(leaves_.size());
      leaves_.push_back(id);
    } else {
      stack.push_back(n.children[1]);
      stack.push_back(n.children[0]);
    }
  }
}

int ClusterTree::depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.level);
  return d;
}

VectorXc ClusterTree::to_tree_order(const VectorXc& original) const {
  if (original.size() != size()) throw DimensionError("to_tree_order: size mismatch");
  VectorXc out(original.size());
  for (int i = 0; i < size(); ++i) out(i) = original(permutation_[i]);
  return out;
}

VectorXc ClusterTree::to_original_order(const VectorXc& tree) const {
  if (tree.size() != size()) throw DimensionError("to_original_order: size mismatch");
  VectorXc out(tree.size());
  for (int i = 0; i < size(); ++i) out(permutation_[i]) = tree(i);
  return out;
}

namespace {

struct TreeBuilder {
  std::span<const Vec3> centroids;
  double min_diameter;
  std::vector<int> perm;
  std::vector<ClusterNode> nodes;

  BoundingBox box_of(int begin, int end) const {
    BoundingBox b;
    b.lo = b.hi = centroids[perm[begin]];
    for (int i = begin + 1; i < end; ++i) {
      b.lo = b.lo.cwiseMin(centroids[perm[i]]);
      b.hi = b.hi.cwiseMax(centroids[perm[i]]);
    }
    return b;
  }

  int build(int begin, int end, int parent, int level) {
    const int id = static_cast<int>(nodes.size());
    ClusterNode node;
    node.begin = begin;
    node.end = end;
    node.parent = parent;
    node.level = level;
    node.box = box_of(begin, end);
    nodes.push_back(node);

    const double diam = node.box.diameter();
    if (end - begin < 2 || diam == 0.0) return id;

    int axis = 0;
    (node.box.hi - node.box.lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::vector<int> saved(perm.begin() + begin, perm.begin() + end);
    std::nth_element(perm.begin() + begin, perm.begin() + mid, perm.begin() + end,
                     [&](int a, int b) {
                       const double ca = centroids[a][axis], cb = centroids[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    // keep each half in ascending original order for reproducibility
    std::sort(perm.begin() + begin, perm.begin() + mid);
    std::sort(perm.begin() + mid, perm.begin() + end);

    const double d_left = box_of(begin, mid).diameter();
    const double d_right = box_of(mid, end).diameter();
    const bool split = std::min(d_left, d_right) >= min_diameter || diam >= 2.0 * min_diameter;
    if (!split) {
      std::copy(saved.begin(), saved.end(), perm.begin() + begin);
      return id;
    }
    const int left = build(begin, mid, id, level + 1);
    const int right = build(mid, end, id, level + 1);
    nodes[id].children[0] = left;
    nodes[id].children[1] = right;
    return id;
  }
};

}  // namespace

ClusterTree build_tree(std::span<const Vec3> centroids, double wavelength, double leaf_factor) {
  if (centroids.empty()) throw std::invalid_argument("build_tree: no centroids");
  if (wavelength <= 0.0) throw std::invalid_argument("build_tree: wavelength must be positive");
  TreeBuilder b{centroids, leaf_factor * wavelength, {}, {}};
  b.perm.resize(centroids.size());
  std::iota(b.perm.begin(), b.perm.end(), 0);
  b.build(0, static_cast<int>(centroids.size()), -1, 0);
  return ClusterTree(std::move(b.nodes), std::move(b.perm), wavelength, leaf_factor);
}

bool admissible(const BoundingBox& t, const BoundingBox& s, double eta) {
  const double dist = t.distance(s);
  if (dist <= 0.0) return false;
  return eta * dist >= std::min(t.diameter(), s.diameter());
}

std::vector<std::vector<BlockPair>> BlockPartition::far_by_level() const {
  std::vector<std::vector<BlockPair>> out;
  for (const auto& b : far) {
    if (b.level >= static_cast<int>(out.size())) out.resize(b.level + 1);
    out[b.level].push_back(b);
  }
  return out;
}

namespace {

void partition_recurse(const ClusterTree& tree, double eta, int t, int s, BlockPartition& out) {
  const auto& nt = tree.node(t);
  const auto& ns = tree.node(s);
  if (t != s && admissible(nt.box, ns.box, eta)) {
    out.far.push_back({t, s, std::max(nt.level, ns.level)});
    return;
  }
  if (nt.is_leaf() && ns.is_leaf()) {
    out.near.push_back({t, s, std::max(nt.level, ns.level)});
    return;
  }
  if (nt.is_leaf()) {
    for (int c : ns.children) partition_recurse(tree, eta, t, c, out);
  } else if (ns.is_leaf()) {
    for (int c : nt.children) partition_recurse(tree, eta, c, s, out);
  } else {
    for (int ct : nt.children) {
      for (int cs : ns.children) partition_recurse(tree, eta, ct, cs, out);
    }
  }
}

}  // namespace

BlockPartition partition_blocks(const ClusterTree& tree, double eta) {
  BlockPartition out;
  out.eta = eta;
  partition_recurse(tree, eta, 0, 0, out);
  return out;
}

std::vector<std::vector<int>> near_adjacency(const ClusterTree& tree,
                                             const BlockPartition& partition) {
  std::vector<std::vector<int>> adj(tree.num_leaves());
  for (const auto& b : partition.near) {
    const int i = tree.node(b.row).leaf_index;
    const int j = tree.node(b.col).leaf_index;
    if (i != j) adj[i].push_back(j);
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

namespace {

// BFS levels from `start` restricted to unvisited vertices of its component.
std::vector<std::vector<int>> level_structure(const std::vector<std::vector<int>>& adj, int start) {
  std::vector<std::vector<int>> levels;
  std::vector<char> seen(adj.size(), 0);
  std::vector<int> frontier = {start};
  seen[start] = 1;
  while (!frontier.empty()) {
    levels.push_back(frontier);
    std::vector<int> next;
    for (int v : frontier) {
      for (int w : adj[v]) {
        if (!seen[w]) {
          seen[w] = 1;
          next.push_back(w);
        }
      }
    }
    frontier = std::move(next);
  }
  return levels;
}

int pseudo_peripheral(const std::vector<std::vector<int>>& adj, int start) {
  int v = start;
  auto levels = level_structure(adj, v);
  for (int iter = 0; iter < 16; ++iter) {
    const auto& last = levels.back();
    int best = last.front();
    for (int w : last) {
      if (adj[w].size() < adj[best].size() || (adj[w].size() == adj[best].size() && w < best)) {
        best = w;
      }
    }
    auto candidate = level_structure(adj, best);
    if (candidate.size() <= levels.size()) break;
    v = best;
    levels = std::move(candidate);
  }
  return v;
}

}  // namespace

std::vector<int> order_leaves(const std::vector<std::vector<int>>& adjacency) {
  const int n = static_cast<int>(adjacency.size());
  std::vector<int> order;
  order.reserve(n);
  std::vector<char> placed(n, 0);
  for (int seed = 0; seed < n; ++seed) {
    if (placed[seed]) continue;
    // lowest-degree vertex of this component as the starting guess
    int start = seed;
    for (const auto& level : level_structure(adjacency, seed)) {
      for (int v : level) {
        if (adjacency[v].size() < adjacency[start].size()) start = v;
      }
    }
    start = pseudo_peripheral(adjacency, start);
    std::deque<int> queue = {start};
    placed[start] = 1;
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      order.push_back(v);
      std::vector<int> next;
      for (int w : adjacency[v]) {
        if (!placed[w]) next.push_back(w);
      }
      std::sort(next.begin(), next.end(), [&](int a, int b) {
        return adjacency[a].size() < adjacency[b].size() ||
               (adjacency[a].size() == adjacency[b].size() && a < b);
      });
      for (int w : next) {
        placed[w] = 1;
        queue.push_back(w);
      }
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

int bandwidth(const std::vector<std::vector<int>>& adjacency, std::span<const int> order) {
  std::vector<int> pos(adjacency.size());
  for (int k = 0; k < static_cast<int>(order.size()); ++k) pos[order[k]] = k;
  int bw = 0;
  for (int v = 0; v < static_cast<int>(adjacency.size()); ++v) {
    for (int w : adjacency[v]) bw = std::max(bw, std::abs(pos[v] - pos[w]));
  }
  return bw;
}

}  // namespace psmom
