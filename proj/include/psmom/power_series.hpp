#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "psmom/hmatrix.hpp"
#include "psmom/schur_scaling.hpp"
#include "psmom/types.hpp"

namespace psmom {

/// U = D^{-1} L Z_F R, applied matrix-free in tree ordering.
class SeriesOperator {
 public:
  SeriesOperator(const HMatrix& h, const ScalingSet& scaling, const ScaledNearField& diagonal);

  int size() const { return h_->size(); }
  VectorXc apply(const VectorXc& v) const;
  VectorXc operator()(const VectorXc& v) const { return apply(v); }
  long long applications() const { return applications_; }

 private:
  const HMatrix* h_;
  const ScalingSet* scaling_;
  const ScaledNearField* diagonal_;
  mutable long long applications_ = 0;
};

struct SeriesConfig {
  int n_terms = 2;          // applications of U
  double threshold = 0.1;   // ratio guard
  bool adaptive = false;
  int max_terms = 8;
  double adaptive_tolerance = 1e-12;
};

enum class SeriesStatus { converged, diverging };

struct ConvergenceReport {
  std::vector<double> term_norms;  // |it_0|, |it_1|, ...
  std::vector<double> ratios;      // |it_n| / |it_{n-1}|
  SeriesStatus status = SeriesStatus::converged;
  int applications = 0;
  std::optional<double> k_nf;
  std::optional<double> k_ff;

  double max_ratio() const;
};

struct SeriesResult {
  VectorXc x;
  ConvergenceReport report;
};

inline void validate(const SeriesConfig& cfg) {
  if (cfg.n_terms < 1) throw std::invalid_argument("SeriesConfig: n_terms must be >= 1");
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) {
    throw std::invalid_argument("SeriesConfig: threshold must lie in (0, 1)");
  }
  if (cfg.adaptive && cfg.max_terms < 1) {
    throw std::invalid_argument("SeriesConfig: max_terms must be >= 1");
  }
}

/// x~ = it_0 - it_1 + it_2 - ... with it_0 = b_o, it_n = U it_{n-1}.
/// Fixed mode applies U exactly n_terms times; adaptive mode stops once
/// |it_n| / |x~| < adaptive_tolerance, a ratio reaches the threshold, or
/// max_terms applications were spent.
template <class Op, class Vector>
SeriesResult series_solve(const Op& u, const Vector& b_o, const SeriesConfig& cfg) {
  validate(cfg);
  SeriesResult out;
  auto& rep = out.report;
  VectorXc it = b_o;
  out.x = it;
  rep.term_norms.push_back(it.norm());
  const int limit = cfg.adaptive ? cfg.max_terms : cfg.n_terms;
  double sign = 1.0;
  for (int n = 1; n <= limit; ++n) {
    if (rep.term_norms.back() == 0.0) break;
    it = u(it);
    ++rep.applications;
    sign = -sign;
    out.x += sign * it;
    const double norm = it.norm();
    rep.ratios.push_back(norm / rep.term_norms.back());
    rep.term_norms.push_back(norm);
    if (rep.ratios.back() >= cfg.threshold) rep.status = SeriesStatus::diverging;
    if (cfg.adaptive) {
      if (rep.status == SeriesStatus::diverging) break;
      if (norm <= cfg.adaptive_tolerance * out.x.norm()) break;
    }
  }
  return out;
}

enum class ConvergenceVerdict { ok, diverged };

/// ok iff every recorded ratio is below the threshold.
ConvergenceVerdict check_convergence(const ConvergenceReport& report, double threshold = 0.1);

/// Full pipeline in the original ordering: b~ = L b, b_o = D^{-1} b~, series,
/// x = R x~.
SeriesResult solve_system(const HMatrix& h, const ScalingSet& scaling,
                          const ScaledNearField& diagonal, const VectorXc& b,
                          const SeriesConfig& cfg);

/// Condition estimates |A|_F |A^{-1}|_F of the scaled near field (k_nf) and
/// of the scaled far field L Z_F R (k_ff); dense, intended for small N.
void condition_diagnostics(const HMatrix& h, const ScalingSet& scaling,
                           const ScaledNearField& diagonal, ConvergenceReport& report);

struct GmresResult {
  VectorXc x;
  int iterations = 0;  // operator applications
  bool converged = false;
  double relative_residual = 0.0;
};

/// Restarted GMRES(restart) on a linear operator `a(v)`.
template <class Op>
GmresResult gmres(const Op& a, const VectorXc& b, double tol = 1e-6, int restart = 50,
                  int max_iters = 1000) {
  GmresResult out;
  const int n = static_cast<int>(b.size());
  out.x = VectorXc::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }
  VectorXc r = b;
  double beta = bnorm;
  while (out.iterations < max_iters) {
    const int m = std::min(restart, max_iters - out.iterations);
    MatrixXc v(n, m + 1);
    MatrixXc hmat = MatrixXc::Zero(m + 1, m);
    std::vector<cplx> cs(m), sn(m);
    VectorXc g = VectorXc::Zero(m + 1);
    g(0) = beta;
    v.col(0) = r / beta;
    int k = 0;
    double resid = beta;
    for (; k < m; ++k) {
      VectorXc w = a(VectorXc(v.col(k)));
      ++out.iterations;
      for (int i = 0; i <= k; ++i) {  // modified Gram-Schmidt
        hmat(i, k) = v.col(i).dot(w);
        w -= hmat(i, k) * v.col(i);
      }
      hmat(k + 1, k) = w.norm();
      for (int i = 0; i < k; ++i) {
        const cplx t = std::conj(cs[i]) * hmat(i, k) + std::conj(sn[i]) * hmat(i + 1, k);
        hmat(i + 1, k) = -sn[i] * hmat(i, k) + cs[i] * hmat(i + 1, k);
        hmat(i, k) = t;
      }
      const double h1 = std::abs(hmat(k, k)), h2 = std::abs(hmat(k + 1, k));
      const double denom = std::hypot(h1, h2);
      if (denom == 0.0) {
        cs[k] = 1.0;
        sn[k] = 0.0;
      } else {
        cs[k] = hmat(k, k) / denom;
        sn[k] = hmat(k + 1, k) / denom;
      }
      hmat(k, k) = denom;
      hmat(k + 1, k) = 0.0;
      g(k + 1) = -sn[k] * g(k);
      g(k) = std::conj(cs[k]) * g(k);
      resid = std::abs(g(k + 1));
      if (h2 > 0.0) v.col(k + 1) = w / h2;
      if (resid <= tol * bnorm || h2 == 0.0) {
        ++k;
        break;
      }
    }
    // back substitution on the k x k triangle
    VectorXc y = hmat.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    out.x += v.leftCols(k) * y;
    r = b - a(out.x);
    beta = r.norm();
    out.relative_residual = beta / bnorm;
    if (out.relative_residual <= tol) break;
  }
  out.converged = out.relative_residual <= tol;
  return out;
}

/// GMRES baseline on the unscaled H-matrix (original ordering).
GmresResult gmres_solve(const HMatrix& h, const VectorXc& b, double tol = 1e-6, int restart = 50,
                        int max_iters = 1000);

}  // namespace psmom
