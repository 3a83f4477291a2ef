#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "psmom/cluster_tree.hpp"
#include "psmom/types.hpp"

namespace psmom {

struct AcaConfig {
  double tolerance = 1e-4;  // relative Frobenius
  int max_rank = -1;        // <= 0: min(m, n) / 2
  bool recompress = true;
};

/// A (m x r) times B (r x n).
template <class Scalar>
struct LowRankBlock {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix A;
  Matrix B;
  bool rank_capped = false;

  int rows() const { return static_cast<int>(A.rows()); }
  int cols() const { return static_cast<int>(B.cols()); }
  int rank() const { return static_cast<int>(A.cols()); }
  Matrix dense() const { return A * B; }
};

inline int aca_rank_cap(int m, int n, const AcaConfig& cfg) {
  const int cap = cfg.max_rank > 0 ? cfg.max_rank : std::min(m, n) / 2;
  return std::clamp(cap, 1, std::min(m, n));
}

/// Partially pivoted adaptive cross approximation. `row(i)` and `col(j)`
/// return row i / column j of the m x n block. Stops once
/// |u_r| |v_r| <= eps |A B|_F holds for two consecutive updates; hitting
/// the rank cap first sets rank_capped.
template <class Scalar, class RowFn, class ColFn>
LowRankBlock<Scalar> aca_build(RowFn&& row, ColFn&& col, int m, int n, const AcaConfig& cfg) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const int cap = aca_rank_cap(m, n, cfg);
  std::vector<Vector> us;
  std::vector<RowVector> vs;
  std::vector<char> row_used(m, 0);
  double norm2 = 0.0;
  bool converged = false;
  int pivot_row = 0;
  int zero_rows = 0;
  int small_updates = 0;

  while (static_cast<int>(us.size()) < cap) {
    row_used[pivot_row] = 1;
    RowVector r = row(pivot_row);
    for (size_t k = 0; k < us.size(); ++k) r -= us[k](pivot_row) * vs[k];
    Eigen::Index pivot_col = 0;
    const double pivot_mag = r.cwiseAbs().maxCoeff(&pivot_col);
    if (pivot_mag <= 1e-300 || (norm2 > 0.0 && pivot_mag <= 1e-15 * std::sqrt(norm2))) {
      // residual row vanishes; move on to another unused row
      ++zero_rows;
      int next = -1;
      for (int i = 0; i < m; ++i) {
        if (!row_used[i]) {
          next = i;
          break;
        }
      }
      if (next < 0 || zero_rows > 8) {
        converged = true;
        break;
      }
      pivot_row = next;
      continue;
    }
    RowVector v = r / r(pivot_col);
    Vector u = col(static_cast<int>(pivot_col));
    for (size_t k = 0; k < us.size(); ++k) u -= vs[k](pivot_col) * us[k];

    const double un = u.squaredNorm(), vn = v.squaredNorm();
    double cross = 0.0;
    for (size_t k = 0; k < us.size(); ++k) {
      cross += std::real(us[k].dot(u) * vs[k].dot(v));
    }
    norm2 += un * vn + 2.0 * cross;
    us.push_back(std::move(u));
    vs.push_back(std::move(v));
    // one small update can be a lucky pivot; ask for two in a row
    if (std::sqrt(un * vn) <= cfg.tolerance * std::sqrt(std::max(norm2, 0.0))) {
      if (++small_updates >= 2) {
        converged = true;
        break;
      }
    } else {
      small_updates = 0;
    }

    double best = -1.0;
    int next = -1;
    for (int i = 0; i < m; ++i) {
      if (!row_used[i] && std::abs(us.back()(i)) > best) {
        best = std::abs(us.back()(i));
        next = i;
      }
    }
    if (next < 0) {
      converged = true;
      break;
    }
    pivot_row = next;
  }

  LowRankBlock<Scalar> out;
  const int r = static_cast<int>(us.size());
  out.A.resize(m, r);
  out.B.resize(r, n);
  for (int k = 0; k < r; ++k) {
    out.A.col(k) = us[k];
    out.B.row(k) = vs[k];
  }
  // the cap cut off the confirming step only: the plain criterion was met
  out.rank_capped = !converged && small_updates == 0 && r < std::min(m, n);
  return out;
}

/// Orthogonalise both factors, take the SVD of the small core and drop the
/// tail whose Frobenius mass is <= tolerance * |A B|_F.
template <class Scalar>
LowRankBlock<Scalar> recompress(const LowRankBlock<Scalar>& block, double tolerance) {
  using Matrix = typename LowRankBlock<Scalar>::Matrix;
  const int r = block.rank();
  if (r <= 1) return block;
  const int m = block.rows(), n = block.cols();
  Eigen::HouseholderQR<Matrix> qa(block.A);
  Eigen::HouseholderQR<Matrix> qb(block.B.transpose());
  const int ka = std::min(m, r), kb = std::min(n, r);
  const Matrix ra = qa.matrixQR().topRows(ka).template triangularView<Eigen::Upper>();
  const Matrix rb = qb.matrixQR().topRows(kb).template triangularView<Eigen::Upper>();
  const Matrix core = ra * rb.transpose();  // ka x kb
  Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double total = s.squaredNorm();
  int keep = static_cast<int>(s.size());
  double tail = 0.0;
  while (keep > 1) {
    const double next = tail + s(keep - 1) * s(keep - 1);
    if (next > tolerance * tolerance * total) break;
    tail = next;
    --keep;
  }
  if (total == 0.0) keep = 1;
  Matrix qa_thin = qa.householderQ() * Matrix::Identity(m, ka);
  Matrix qb_thin = qb.householderQ() * Matrix::Identity(n, kb);
  LowRankBlock<Scalar> out;
  out.A = qa_thin * (svd.matrixU().leftCols(keep) * s.head(keep).asDiagonal());
  out.B = svd.matrixV().leftCols(keep).adjoint() * qb_thin.transpose();
  out.rank_capped = block.rank_capped;
  return out;
}

/// LU with partial pivoting. Throws SingularMatrixError when a pivot falls
/// below 1e-14 |A|_F.
template <class Derived, class Rhs>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> dense_direct_solve(
    const Eigen::MatrixBase<Derived>& a, const Eigen::MatrixBase<Rhs>& b) {
  using Matrix = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.rows() != a.cols() || a.rows() != b.rows()) {
    throw DimensionError("dense_direct_solve: dimension mismatch");
  }
  Eigen::PartialPivLU<Matrix> lu(a);
  const double scale = a.norm();
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(min_pivot >= 1e-14 * scale) || scale == 0.0) {
    throw SingularMatrixError("dense_direct_solve: singular matrix");
  }
  return lu.solve(b);
}

struct DenseBlock {
  int row = 0;  // cluster node ids (leaves)
  int col = 0;
  MatrixXc data;
};

struct FarBlock {
  int row = 0;  // cluster node ids
  int col = 0;
  LowRankBlock<cplx> factors;
};

/// Returns the dense sub-block Z(rows, cols); indices in original ordering.
using BlockSampler = std::function<MatrixXc(std::span<const int>, std::span<const int>)>;

/// Sampler over an explicit dense matrix (original ordering).
BlockSampler dense_sampler(const MatrixXc& z);

struct AssemblyStats {
  double near_seconds = 0.0;
  double far_seconds = 0.0;
};

class HMatrix {
 public:
  HMatrix() = default;
  HMatrix(ClusterTree tree, BlockPartition partition, bool symmetric);

  int size() const { return tree_.size(); }
  bool symmetric() const { return symmetric_; }
  const ClusterTree& tree() const { return tree_; }
  const BlockPartition& partition() const { return partition_; }
  const std::vector<DenseBlock>& near_blocks() const { return near_; }
  const std::vector<FarBlock>& far_blocks() const { return far_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Near block between two leaves (leaf indices) in tree order, or nullptr
  /// when the pair is not in the near list. In symmetric mode only the lower
  /// (row >= col) blocks are stored; `transposed` reports a mirrored hit.
  const MatrixXc* find_near(int row_leaf, int col_leaf, bool* transposed = nullptr) const;
  /// Near block as a full matrix, mirroring if needed.
  MatrixXc near_block(int row_leaf, int col_leaf) const;

  /// Product in the original ordering.
  VectorXc matvec(const VectorXc& x) const;
  /// Product in tree ordering, near + far.
  VectorXc matvec_tree(const VectorXc& x) const;
  VectorXc far_matvec_tree(const VectorXc& x) const;
  VectorXc near_matvec_tree(const VectorXc& x) const;

  /// Dense matrix in the original ordering.
  MatrixXc materialize_dense() const;
  MatrixXc materialize_far_tree() const;

  long long near_storage() const;  // complex numbers stored
  long long far_storage() const;
  double compression_ratio() const;

  /// Instrumentation: how often near / far blocks were touched by products.
  long long near_block_touches() const { return near_touches_; }
  long long far_block_touches() const { return far_touches_; }

  void save(const std::string& path) const;
  static HMatrix load(const std::string& path);

 private:
  friend HMatrix assemble_hmatrix(const BlockSampler&, const ClusterTree&, const BlockPartition&,
                                  const AcaConfig&, bool, AssemblyStats*);
  void index_near();

  ClusterTree tree_;
  BlockPartition partition_;
  bool symmetric_ = false;
  std::vector<DenseBlock> near_;
  std::vector<FarBlock> far_;
  std::map<std::pair<int, int>, int> near_index_;  // (row leaf, col leaf) -> near_ slot
  std::vector<std::string> warnings_;
  mutable long long near_touches_ = 0;
  mutable long long far_touches_ = 0;
};

/// Dense near blocks, ACA (+ recompression) far blocks. In symmetric mode
/// only near blocks with row leaf >= col leaf are sampled and stored.
HMatrix assemble_hmatrix(const BlockSampler& sampler, const ClusterTree& tree,
                         const BlockPartition& partition, const AcaConfig& cfg, bool symmetric,
                         AssemblyStats* stats = nullptr);

}  // namespace psmom
