#include "psmom/em_operator.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace psmom {

Medium Medium::free_space(double frequency_hz) {
  Medium m;
  m.omega = 2.0 * kPi * frequency_hz;
  m.permittivity = kEps0;
  m.permeability = kMu0;
  m.wavenumber = m.omega * std::sqrt(kEps0 * kMu0);
  m.impedance = std::sqrt(kMu0 / kEps0);
  return m;
}

Medium Medium::from_wavenumber(double k) {
  return free_space(k / (2.0 * kPi * std::sqrt(kEps0 * kMu0)));
}

cplx green(const Vec3& r, const Vec3& r_src, double k) {
  const double R = (r - r_src).norm();
  if (R == 0.0) throw std::domain_error("green: coincident observation and source points");
  return std::exp(cplx(0.0, -k * R)) / (4.0 * kPi * R);
}

CVec3 grad_green(const Vec3& r, const Vec3& r_src, double k) {
  const Vec3 d = r - r_src;
  const double R = d.norm();
  if (R == 0.0) throw std::domain_error("grad_green: coincident observation and source points");
  const cplx g = std::exp(cplx(0.0, -k * R)) / (4.0 * kPi * R);
  const cplx factor = (cplx(0.0, k) + 1.0 / R) * g / R;
  return factor * d.cast<cplx>();
}

PotentialIntegrals potential_integrals(const std::array<Vec3, 3>& v, const Vec3& r) {
  const Vec3 n = (v[1] - v[0]).cross(v[2] - v[0]).normalized();
  const double d = n.dot(r - v[0]);
  const double ad = std::abs(d);
  const Vec3 rho = r - d * n;
  const double scale = (v[1] - v[0]).norm() + (v[2] - v[1]).norm() + (v[0] - v[2]).norm();
  const double tiny = 1e-14 * scale * scale;

  PotentialIntegrals out;
  for (int i = 0; i < 3; ++i) {
    const Vec3& a = v[i];
    const Vec3& b = v[(i + 1) % 3];
    Vec3 l = b - a;
    l.normalize();
    const Vec3 u = l.cross(n);  // outward in-plane edge normal
    const double lp = (b - rho).dot(l);
    const double lm = (a - rho).dot(l);
    const double s = (a - rho).dot(u);
    const double r0sq = s * s + d * d;
    const double rp = std::sqrt(lp * lp + r0sq);
    const double rm = std::sqrt(lm * lm + r0sq);

    // ln((R+ + l+)/(R- + l-)), evaluated without cancellation
    double log_term = 0.0;
    if (r0sq > tiny) {
      if (lm >= 0.0) {
        log_term = std::log((rp + lp) / (rm + lm));
      } else if (lp <= 0.0) {
        log_term = std::log((rm - lm) / (rp - lp));
      } else {
        log_term = std::log((rp + lp) * (rm - lm) / r0sq);
      }
    } else if (lm * lp > 0.0) {
      // on the edge line, outside the segment
      log_term = lm > 0.0 ? std::log(lp / lm) : std::log(lm / lp);
    }

    out.scalar += s * log_term;
    if (ad > 0.0) {
      out.scalar -= ad * (std::atan2(s * lp, r0sq + ad * rp) - std::atan2(s * lm, r0sq + ad * rm));
    }
    out.vector += 0.5 * (r0sq * log_term + lp * rp - lm * rm) * u;
  }
  return out;
}

namespace {

// (e^{-jkR} - 1) / (4 pi R), finite at R = 0
cplx smooth_green(double k, double R) {
  const double x = k * R;
  if (x < 1e-6) return cplx(-0.5 * k * x, -k * (1.0 - x * x / 6.0)) / (4.0 * kPi);
  const double half = std::sin(0.5 * x);
  return cplx(-2.0 * half * half, -std::sin(x)) / (4.0 * kPi * R);
}

}  // namespace

MomOperator::MomOperator(const RwgBasisSet& basis, const Medium& medium, OperatorConfig config)
    : basis_(basis), medium_(medium), config_(config), surface_(classify_surface(basis.mesh())) {
  if (medium_.wavenumber <= 0.0) throw std::invalid_argument("MomOperator: wavenumber must be > 0");
  switch (config_.formulation) {
    case Formulation::efie: alpha_ = 1.0; break;
    case Formulation::mfie:
      if (surface_ == SurfaceKind::open) {
        throw FormulationError("MFIE requires a closed surface; the mesh has boundary edges");
      }
      alpha_ = 0.0;
      break;
    case Formulation::cfie:
      if (config_.cfie_alpha < 0.0 || config_.cfie_alpha > 1.0) {
        throw FormulationError("CFIE alpha must lie in [0, 1]");
      }
      alpha_ = surface_ == SurfaceKind::open ? 1.0 : config_.cfie_alpha;
      break;
  }

  const auto& mesh = basis_.mesh();
  const TriangleRule& r3 = triangle_rule(3);
  const TriangleRule& r7 = triangle_rule(7);
  const TriangleRule rsub = subdivided_rule(r7, 1);
  tris_.resize(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    auto& td = tris_[t];
    td.ids = mesh.triangles()[t];
    for (int i = 0; i < 3; ++i) td.v[i] = mesh.nodes()[td.ids[i]];
    td.normal = mesh.normal(t);
    td.centroid = mesh.centroid(t);
    td.area = mesh.area(t);
    td.diameter = std::max({(td.v[0] - td.v[1]).norm(), (td.v[1] - td.v[2]).norm(),
                            (td.v[2] - td.v[0]).norm()});
    auto fill = [&](const TriangleRule& rule, std::vector<Vec3>& pts, std::vector<double>& w) {
      for (const auto& q : rule) {
        pts.push_back(q.b0 * td.v[0] + q.b1 * td.v[1] + q.b2 * td.v[2]);
        w.push_back(q.weight * td.area);
      }
    };
    fill(r3, td.q3, td.w3);
    fill(r7, td.q7, td.w7);
    fill(rsub, td.qsub, td.wsub);
  }

  halves_.reserve(basis_.size());
  for (int n = 0; n < basis_.size(); ++n) {
    const auto& f = basis_[n];
    const int tp = f.plus_triangle, tm = f.minus_triangle;
    halves_.push_back(
        {Half{tp, local_vertex(tp, f.plus_vertex), 1.0, f.length / (2.0 * tris_[tp].area)},
         Half{tm, local_vertex(tm, f.minus_vertex), -1.0, f.length / (2.0 * tris_[tm].area)}});
  }
}

int MomOperator::local_vertex(int t, int node) const {
  const auto& ids = tris_[t].ids;
  for (int i = 0; i < 3; ++i) {
    if (ids[i] == node) return i;
  }
  return -1;
}

bool MomOperator::touching(int t, int s) const {
  for (int a : tris_[t].ids) {
    for (int b : tris_[s].ids) {
      if (a == b) return true;
    }
  }
  return false;
}

int MomOperator::rule_for(int t, int s) const {
  const auto& a = tris_[t];
  const auto& b = tris_[s];
  const double dist = (a.centroid - b.centroid).norm();
  return dist < config_.near_factor * std::max(a.diameter, b.diameter) ? config_.near_points
                                                                       : config_.regular_points;
}

// Regular EFIE pair in canonical order: the outer loop always runs over the
// lower-indexed triangle so (t, s) and (s, t) sum identical terms in
// identical order.
void MomOperator::efie_regular(int t, int s, int rule, Eigen::Matrix3cd& vec,
                               cplx& scalar) const {
  const auto& T = tris_[t];
  const auto& S = tris_[s];
  const auto& qt = rule == 7 ? T.q7 : T.q3;
  const auto& wt = rule == 7 ? T.w7 : T.w3;
  const auto& qs = rule == 7 ? S.q7 : S.q3;
  const auto& ws = rule == 7 ? S.w7 : S.w3;
  const double k = medium_.wavenumber;
  vec.setZero();
  scalar = 0.0;
  for (size_t a = 0; a < qt.size(); ++a) {
    const Vec3& x = qt[a];
    for (size_t b = 0; b < qs.size(); ++b) {
      const Vec3& y = qs[b];
      const double R = (x - y).norm();
      const cplx g = std::exp(cplx(0.0, -k * R)) * (wt[a] * ws[b] / (4.0 * kPi * R));
      scalar += g;
      for (int i = 0; i < 3; ++i) {
        const Vec3 xi = x - T.v[i];
        for (int j = 0; j < 3; ++j) vec(i, j) += g * xi.dot(y - S.v[j]);
      }
    }
  }
}

// Self / touching EFIE pair: analytic 1/R part on the source triangle, the
// bounded remainder (e^{-jkR} - 1)/(4 pi R) by quadrature on both.
void MomOperator::efie_singular(int t, int s, Eigen::Matrix3cd& vec, cplx& scalar) const {
  const auto& T = tris_[t];
  const auto& S = tris_[s];
  const auto& qt = config_.self_points == 7 ? T.q7 : T.qsub;
  const auto& wt = config_.self_points == 7 ? T.w7 : T.wsub;
  const double k = medium_.wavenumber;
  vec.setZero();
  scalar = 0.0;
  constexpr double inv4pi = 1.0 / (4.0 * kPi);
  for (size_t a = 0; a < qt.size(); ++a) {
    const Vec3& x = qt[a];
    const PotentialIntegrals pot = potential_integrals(S.v, x);
    const Vec3 rho = x - S.normal.dot(x - S.v[0]) * S.normal;

    cplx smooth0 = 0.0;
    CVec3 smooth1 = CVec3::Zero();  // \int g_s r' dS'
    for (size_t b = 0; b < S.q7.size(); ++b) {
      const cplx gs = smooth_green(k, (x - S.q7[b]).norm()) * S.w7[b];
      smooth0 += gs;
      smooth1 += gs * S.q7[b].cast<cplx>();
    }

    scalar += wt[a] * (inv4pi * pot.scalar + smooth0);
    for (int j = 0; j < 3; ++j) {
      // \int (r' - v_j) G dS'
      const CVec3 inner =
          (inv4pi * (pot.vector + (rho - S.v[j]) * pot.scalar)).cast<cplx>() + smooth1 -
          smooth0 * S.v[j].cast<cplx>();
      for (int i = 0; i < 3; ++i) {
        vec(i, j) += wt[a] * (x - T.v[i]).cast<cplx>().dot(inner);
      }
    }
  }
}

void MomOperator::mfie_pair(int t, int s, int rule, Eigen::Matrix3cd& out) const {
  out.setZero();
  if (t == s) return;  // flat self cell: principal value vanishes
  const auto& T = tris_[t];
  const auto& S = tris_[s];
  const std::vector<Vec3>* qt;
  const std::vector<Vec3>* qs;
  const std::vector<double>* wt;
  const std::vector<double>* ws;
  if (rule == 0) {
    qt = &T.qsub, wt = &T.wsub, qs = &S.qsub, ws = &S.wsub;
  } else if (rule == 7) {
    qt = &T.q7, wt = &T.w7, qs = &S.q7, ws = &S.w7;
  } else {
    qt = &T.q3, wt = &T.w3, qs = &S.q3, ws = &S.w3;
  }
  const double k = medium_.wavenumber;
  for (size_t a = 0; a < qt->size(); ++a) {
    const Vec3& x = (*qt)[a];
    std::array<Vec3, 3> tx;  // (x - v_i) x n
    for (int i = 0; i < 3; ++i) tx[i] = (x - T.v[i]).cross(T.normal);
    for (size_t b = 0; b < qs->size(); ++b) {
      const Vec3& y = (*qs)[b];
      const Vec3 d = x - y;
      const double R = d.norm();
      const cplx g = std::exp(cplx(0.0, -k * R)) / (4.0 * kPi * R);
      const cplx gp = (cplx(0.0, k) + 1.0 / R) * g / R * ((*wt)[a] * (*ws)[b]);
      for (int j = 0; j < 3; ++j) {
        const Vec3 c = (y - S.v[j]).cross(d);
        for (int i = 0; i < 3; ++i) out(i, j) += gp * c.dot(tx[i]);
      }
    }
  }
}

MomOperator::PairIntegrals MomOperator::pair_integrals(int t, int s, bool with_mfie) const {
  ++pair_evaluations_;
  PairIntegrals p;
  const bool singular = t == s || touching(t, s);
  const int lo = std::min(t, s), hi = std::max(t, s);
  if (singular) {
    efie_singular(lo, hi, p.vec, p.scalar);
    // the exact self integral is symmetric in (i, j); the outer rule is not
    if (t == s) p.vec = (0.5 * (p.vec + p.vec.transpose())).eval();
  } else {
    efie_regular(lo, hi, rule_for(lo, hi), p.vec, p.scalar);
  }
  if (t != lo) p.vec.transposeInPlace();
  if (with_mfie) {
    mfie_pair(t, s, singular ? 0 : rule_for(t, s), p.mfie);
  } else {
    p.mfie.setZero();
  }
  return p;
}

double MomOperator::gram(int t, int i, int j) const {
  // \int_T (r - v_i).(r - v_j) dA, exact with the degree-2 rule
  const auto& T = tris_[t];
  double sum = 0.0;
  for (size_t q = 0; q < T.q3.size(); ++q) {
    sum += T.w3[q] * (T.q3[q] - T.v[i]).dot(T.q3[q] - T.v[j]);
  }
  return sum;
}

cplx MomOperator::combine(int m, int n, const PairIntegrals* pairs[2][2], bool efie,
                          bool mfie, bool weighted) const {
  const auto hm = halves(m);
  const auto hn = halves(n);
  const double k = medium_.wavenumber;
  const double eta = medium_.impedance;
  cplx ze = 0.0, zm = 0.0;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const PairIntegrals& p = *pairs[a][b];
      const double c = hm[a].sign * hm[a].coef * hn[b].sign * hn[b].coef;
      if (efie) {
        ze += cplx(0.0, k * eta) * c * p.vec(hm[a].vertex, hn[b].vertex) -
              cplx(0.0, eta / k) * (4.0 * c) * p.scalar;
      }
      if (mfie) {
        if (hm[a].triangle == hn[b].triangle) {
          zm += 0.5 * c * gram(hm[a].triangle, hm[a].vertex, hn[b].vertex);
        }
        zm -= c * p.mfie(hm[a].vertex, hn[b].vertex);
      }
    }
  }
  if (!weighted) return efie ? ze : zm;
  // the magnetic part carries eta so that it matches Z_o n x H on the right-hand side
  return alpha_ * ze + eta * (1.0 - alpha_) * zm;
}

cplx MomOperator::efie_entry(int m, int n) const {
  const auto hm = halves(m);
  const auto hn = halves(n);
  PairIntegrals p[2][2];
  const PairIntegrals* ptr[2][2];
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      p[a][b] = pair_integrals(hm[a].triangle, hn[b].triangle, false);
      ptr[a][b] = &p[a][b];
    }
  }
  return combine(m, n, ptr, true, false, false);
}

cplx MomOperator::mfie_entry(int m, int n) const {
  if (surface_ == SurfaceKind::open) {
    throw FormulationError("MFIE entry requested on an open surface");
  }
  const auto hm = halves(m);
  const auto hn = halves(n);
  PairIntegrals p[2][2];
  const PairIntegrals* ptr[2][2];
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      p[a][b] = pair_integrals(hm[a].triangle, hn[b].triangle, true);
      ptr[a][b] = &p[a][b];
    }
  }
  return combine(m, n, ptr, false, true, false);
}

double MomOperator::mfie_identity_entry(int m, int n) const {
  const auto hm = halves(m);
  const auto hn = halves(n);
  double sum = 0.0;
  for (const auto& a : hm) {
    for (const auto& b : hn) {
      if (a.triangle == b.triangle) {
        sum += 0.5 * a.sign * a.coef * b.sign * b.coef * gram(a.triangle, a.vertex, b.vertex);
      }
    }
  }
  return sum;
}

cplx MomOperator::entry(int m, int n) const {
  if (alpha_ == 1.0) return efie_entry(m, n);
  const auto hm = halves(m);
  const auto hn = halves(n);
  PairIntegrals p[2][2];
  const PairIntegrals* ptr[2][2];
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      p[a][b] = pair_integrals(hm[a].triangle, hn[b].triangle, true);
      ptr[a][b] = &p[a][b];
    }
  }
  return combine(m, n, ptr, alpha_ > 0.0, true);
}

MatrixXc MomOperator::assemble_block(std::span<const int> rows, std::span<const int> cols) const {
  MatrixXc out(rows.size(), cols.size());
  if (rows.empty() || cols.empty()) return out;
  const bool need_mfie = alpha_ < 1.0;
  const bool need_efie = alpha_ > 0.0;

  // Column triangles are shared across all row chunks.
  std::unordered_map<int, int> col_tri;
  std::vector<std::array<int, 2>> col_local(cols.size());
  for (size_t c = 0; c < cols.size(); ++c) {
    const auto h = halves(cols[c]);
    for (int b = 0; b < 2; ++b) {
      auto [it, ins] = col_tri.try_emplace(h[b].triangle, static_cast<int>(col_tri.size()));
      col_local[c][b] = it->second;
    }
  }
  std::vector<int> col_tri_ids(col_tri.size());
  for (auto [tri, idx] : col_tri) col_tri_ids[idx] = tri;

  constexpr size_t kChunk = 96;
  std::vector<PairIntegrals> cache;
  std::vector<char> ready;
  for (size_t r0 = 0; r0 < rows.size(); r0 += kChunk) {
    const size_t r1 = std::min(rows.size(), r0 + kChunk);
    std::unordered_map<int, int> row_tri;
    std::vector<std::array<int, 2>> row_local(r1 - r0);
    for (size_t r = r0; r < r1; ++r) {
      const auto h = halves(rows[r]);
      for (int a = 0; a < 2; ++a) {
        auto [it, ins] = row_tri.try_emplace(h[a].triangle, static_cast<int>(row_tri.size()));
        row_local[r - r0][a] = it->second;
      }
    }
    std::vector<int> row_tri_ids(row_tri.size());
    for (auto [tri, idx] : row_tri) row_tri_ids[idx] = tri;

    const size_t nct = col_tri_ids.size();
    cache.assign(row_tri_ids.size() * nct, PairIntegrals{});
    ready.assign(row_tri_ids.size() * nct, 0);
    for (size_t r = r0; r < r1; ++r) {
      for (size_t c = 0; c < cols.size(); ++c) {
        const PairIntegrals* ptr[2][2];
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            const size_t slot = row_local[r - r0][a] * nct + col_local[c][b];
            if (!ready[slot]) {
              cache[slot] = pair_integrals(row_tri_ids[row_local[r - r0][a]],
                                           col_tri_ids[col_local[c][b]], need_mfie);
              ready[slot] = 1;
            }
            ptr[a][b] = &cache[slot];
          }
        }
        out(r, c) = combine(rows[r], cols[c], ptr, need_efie, need_mfie);
      }
    }
  }
  return out;
}

MatrixXc MomOperator::assemble_dense() const {
  std::vector<int> all(size());
  for (int i = 0; i < size(); ++i) all[i] = i;
  return assemble_block(all, all);
}

VectorXc MomOperator::plane_wave_rhs(double theta, double phi, Polarization pol) const {
  const Vec3 rhat(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                  std::cos(theta));
  const Vec3 theta_hat(std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi),
                       -std::sin(theta));
  const Vec3 phi_hat(-std::sin(phi), std::cos(phi), 0.0);
  const Vec3 khat = -rhat;
  const Vec3 e0 = pol == Polarization::vv ? theta_hat : phi_hat;
  const Vec3 h0 = khat.cross(e0);  // times 1/Z_o
  const double k = medium_.wavenumber;

  VectorXc b(size());
  for (int m = 0; m < size(); ++m) {
    cplx sum = 0.0;
    for (const auto& h : halves(m)) {
      const auto& T = tris_[h.triangle];
      // Z_o (n x H) with H = (k_hat x E)/Z_o
      const Vec3 nh = T.normal.cross(h0);
      for (size_t q = 0; q < T.q7.size(); ++q) {
        const Vec3& x = T.q7[q];
        const cplx phase = std::exp(cplx(0.0, -k * khat.dot(x)));
        const Vec3 f = h.sign * h.coef * (x - T.v[h.vertex]);
        sum += T.w7[q] * phase * (alpha_ * f.dot(e0) + (1.0 - alpha_) * f.dot(nh));
      }
    }
    b(m) = sum;
  }
  return b;
}

}  // namespace psmom
