#pragma once

#include <span>
#include <vector>

#include "psmom/types.hpp"

namespace psmom {

struct BoundingBox {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  static BoundingBox of(std::span<const Vec3> points);
  /// Length of the box diagonal.
  double diameter() const { return (hi - lo).norm(); }
  /// Euclidean distance between the closest points of two boxes.
  double distance(const BoundingBox& other) const;
};

struct ClusterNode {
  BoundingBox box;
  int begin = 0;  // range in tree order
  int end = 0;
  int children[2] = {-1, -1};
  int parent = -1;
  int level = 0;
  int leaf_index = -1;  // position in ClusterTree::leaves(), -1 for inner nodes

  bool is_leaf() const { return children[0] < 0; }
  int size() const { return end - begin; }
};

/// Binary space partition of basis centroids. Every node owns a contiguous
/// range of the tree-order permutation.
class ClusterTree {
 public:
  ClusterTree() = default;
  ClusterTree(std::vector<ClusterNode> nodes, std::vector<int> permutation, double wavelength,
              double leaf_factor);

  const std::vector<ClusterNode>& nodes() const { return nodes_; }
  const ClusterNode& node(int id) const { return nodes_[id]; }
  const ClusterNode& root() const { return nodes_.front(); }
  /// Leaf node ids, in tree order.
  const std::vector<int>& leaves() const { return leaves_; }
  int num_leaves() const { return static_cast<int>(leaves_.size()); }
  const ClusterNode& leaf(int leaf_index) const { return nodes_[leaves_[leaf_index]]; }
  int size() const { return static_cast<int>(permutation_.size()); }
  int depth() const;

  /// permutation()[tree position] = original index.
  const std::vector<int>& permutation() const { return permutation_; }
  const std::vector<int>& inverse_permutation() const { return inverse_; }

  double wavelength() const { return wavelength_; }
  double leaf_factor() const { return leaf_factor_; }

  VectorXc to_tree_order(const VectorXc& original) const;
  VectorXc to_original_order(const VectorXc& tree) const;

 private:
  std::vector<ClusterNode> nodes_;
  std::vector<int> permutation_;
  std::vector<int> inverse_;
  std::vector<int> leaves_;
  double wavelength_ = 1.0;
  double leaf_factor_ = 0.5;
};

/// Splits along the longest box axis at the median centroid. A node is split
/// when both halves keep a box diameter >= leaf_factor * wavelength, or when
/// the node itself spans at least twice that size.
ClusterTree build_tree(std::span<const Vec3> centroids, double wavelength,
                       double leaf_factor = 0.5);

/// eta * dist(t, s) >= min(diam t, diam s), with touching boxes never
/// admissible.
bool admissible(const BoundingBox& t, const BoundingBox& s, double eta);

struct BlockPair {
  int row = 0;  // cluster node ids
  int col = 0;
  int level = 0;
};

struct BlockPartition {
  double eta = 1.0;
  std::vector<BlockPair> near;  // leaf x leaf, inadmissible
  std::vector<BlockPair> far;   // admissible, any level

  /// Far blocks bucketed by level.
  std::vector<std::vector<BlockPair>> far_by_level() const;
};

BlockPartition partition_blocks(const ClusterTree& tree, double eta = 1.0);

/// Leaf adjacency induced by the near list (no self loops), indexed by
/// leaf index.
std::vector<std::vector<int>> near_adjacency(const ClusterTree& tree,
                                             const BlockPartition& partition);

/// Reverse Cuthill-McKee ordering; order[k] is the vertex placed k-th.
/// Connected components stay contiguous.
std::vector<int> order_leaves(const std::vector<std::vector<int>>& adjacency);

/// max |pos(i) - pos(j)| over edges for the given ordering.
int bandwidth(const std::vector<std::vector<int>>& adjacency, std::span<const int> order);

}  // namespace psmom
