#pragma once

#include <Eigen/LU>
#include <functional>
#include <vector>

#include "psmom/hmatrix.hpp"
#include "psmom/types.hpp"

namespace psmom {

/// Block-sparse view of the near-field in tree ordering: leaf ranges, the
/// structurally symmetric leaf adjacency (no self loops) and a block getter.
struct NearPattern {
  std::vector<int> offsets;  // leaf i spans [offsets[i], offsets[i+1])
  std::vector<std::vector<int>> adjacency;
  std::function<MatrixXc(int, int)> block;

  int num_leaves() const { return static_cast<int>(offsets.size()) - 1; }
  int leaf_size(int i) const { return offsets[i + 1] - offsets[i]; }
  int size() const { return offsets.back(); }
};

NearPattern near_pattern(const HMatrix& h);
/// Pattern over a dense matrix; blocks (i, j) with i != j are kept when
/// adjacency lists them. The matrix must outlive the pattern.
NearPattern near_pattern(const MatrixXc& z, std::vector<int> offsets,
                         std::vector<std::vector<int>> adjacency);

struct ScalingStep {
  int leaf = 0;                              // eliminated leaf
  std::vector<int> neighbors;                // later leaves coupled at elimination time
  std::vector<MatrixXc> right;               // alpha_pj = -Z_pp^{-1} Z_pj
  std::vector<MatrixXc> left;                // alpha'_jp = -Z_jp Z_pp^{-1}; empty when symmetric
};

struct ScalingSet {
  std::vector<int> offsets;
  std::vector<ScalingStep> steps;  // elimination order
  bool symmetric = false;

  int size() const { return offsets.empty() ? 0 : offsets.back(); }
  long long stored_entries() const;
};

/// Block-diagonal near-field after elimination, kept as LU factors.
struct ScaledNearField {
  std::vector<int> offsets;
  std::vector<MatrixXc> blocks;
  std::vector<Eigen::PartialPivLU<MatrixXc>> factors;

  int size() const { return offsets.empty() ? 0 : offsets.back(); }
  long long stored_entries() const;
};

struct ScalingDiagnostics {
  int fill_blocks = 0;             // blocks created by Schur updates
  long long fill_entries = 0;
  std::vector<int> step_updates;   // Schur block updates per step
  long long total_updates = 0;
  long long memory_entries = 0;    // complex numbers in alpha + diagonal blocks
};

/// Successive Schur-complement elimination of the leaves in `order`. Throws
/// SingularMatrixError naming the leaf if a diagonal block is singular.
void compute_scaling(const NearPattern& near, const std::vector<int>& order, bool symmetric,
                     ScalingSet& scaling, ScaledNearField& diagonal,
                     ScalingDiagnostics* diagnostics = nullptr);

/// x = alpha_1 alpha_2 ... alpha_{L-1} v (tree ordering).
VectorXc apply_right(const ScalingSet& s, const VectorXc& v);
/// b~ = alpha'_{L-1} ... alpha'_2 alpha'_1 v (tree ordering).
VectorXc apply_left(const ScalingSet& s, const VectorXc& v);
/// Per-leaf solves with the factored diagonal blocks.
VectorXc apply_Dinv(const ScaledNearField& d, const VectorXc& v);

}  // namespace psmom
