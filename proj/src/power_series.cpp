#include "psmom/power_series.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <limits>

namespace psmom {

SeriesOperator::SeriesOperator(const HMatrix& h, const ScalingSet& scaling,
                               const ScaledNearField& diagonal)
    : h_(&h), scaling_(&scaling), diagonal_(&diagonal) {
  if (scaling.size() != h.size() || diagonal.size() != h.size()) {
    throw DimensionError("SeriesOperator: scaling / H-matrix size mismatch");
  }
}

VectorXc SeriesOperator::apply(const VectorXc& v) const {
  if (v.size() != size()) throw DimensionError("SeriesOperator: vector length mismatch");
  ++applications_;
  return apply_Dinv(*diagonal_, apply_left(*scaling_, h_->far_matvec_tree(apply_right(*scaling_, v))));
}

double ConvergenceReport::max_ratio() const {
  return ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end());
}

ConvergenceVerdict check_convergence(const ConvergenceReport& report, double threshold) {
  for (double r : report.ratios) {
    if (!(r < threshold)) return ConvergenceVerdict::diverged;
  }
  return ConvergenceVerdict::ok;
}

SeriesResult solve_system(const HMatrix& h, const ScalingSet& scaling,
                          const ScaledNearField& diagonal, const VectorXc& b,
                          const SeriesConfig& cfg) {
  if (b.size() != h.size()) throw DimensionError("solve_system: right-hand side length mismatch");
  const auto& tree = h.tree();
  SeriesOperator u(h, scaling, diagonal);
  const VectorXc b_o = apply_Dinv(diagonal, apply_left(scaling, tree.to_tree_order(b)));
  auto result = series_solve(u, b_o, cfg);
  result.x = tree.to_original_order(apply_right(scaling, result.x));
  return result;
}

namespace {

MatrixXc columns_of(int n, const auto& op) {
  MatrixXc out(n, n);
  VectorXc e = VectorXc::Zero(n);
  for (int j = 0; j < n; ++j) {
    e(j) = 1.0;
    out.col(j) = op(e);
    e(j) = 0.0;
  }
  return out;
}

double frobenius_condition(const MatrixXc& a) {
  Eigen::BDCSVD<MatrixXc> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smin = s(s.size() - 1);
  if (smin <= std::numeric_limits<double>::min()) return std::numeric_limits<double>::infinity();
  return s.norm() * s.cwiseInverse().norm();
}

}  // namespace

void condition_diagnostics(const HMatrix& h, const ScalingSet& scaling,
                           const ScaledNearField& diagonal, ConvergenceReport& report) {
  const int n = h.size();
  // |D|_F |D^-1|_F block by block
  double norm2 = 0.0, inv2 = 0.0;
  for (size_t i = 0; i < diagonal.blocks.size(); ++i) {
    const auto& b = diagonal.blocks[i];
    norm2 += b.squaredNorm();
    inv2 += diagonal.factors[i].inverse().squaredNorm();
  }
  report.k_nf = std::sqrt(norm2 * inv2);
  const MatrixXc zf = columns_of(n, [&](const VectorXc& v) {
    return apply_left(scaling, h.far_matvec_tree(apply_right(scaling, v)));
  });
  report.k_ff = frobenius_condition(zf);
}

GmresResult gmres_solve(const HMatrix& h, const VectorXc& b, double tol, int restart,
                        int max_iters) {
  if (b.size() != h.size()) throw DimensionError("gmres_solve: right-hand side length mismatch");
  return gmres([&h](const VectorXc& v) { return h.matvec(v); }, b, tol, restart, max_iters);
}

}  // namespace psmom
