#include "psmom/postprocess.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "psmom/quadrature.hpp"

namespace psmom {

void PlaneWave::validate() const {
  if (!(theta_deg >= 0.0 && theta_deg <= 180.0)) {
    throw std::invalid_argument("PlaneWave: theta must lie in [0, 180] degrees");
  }
  if (!(phi_deg >= 0.0 && phi_deg < 360.0)) {
    throw std::invalid_argument("PlaneWave: phi must lie in [0, 360) degrees");
  }
}

namespace {

constexpr double kDeg = kPi / 180.0;

struct Frame {
  Vec3 rhat, theta_hat, phi_hat;
};

Frame frame(double theta, double phi) {
  const double st = std::sin(theta), ct = std::cos(theta);
  const double sp = std::sin(phi), cp = std::cos(phi);
  return {Vec3(st * cp, st * sp, ct), Vec3(ct * cp, ct * sp, -st), Vec3(-sp, cp, 0.0)};
}

}  // namespace

FarField radiated_farfield(const VectorXc& currents, const RwgBasisSet& basis,
                           const Medium& medium, double theta, double phi) {
  if (currents.size() != basis.size()) {
    throw DimensionError("radiated_farfield: currents length mismatch");
  }
  const auto& mesh = basis.mesh();
  const auto& rule = triangle_rule(3);
  const Frame f = frame(theta, phi);
  const double k = medium.wavenumber;
  CVec3 integral = CVec3::Zero();
  for (int n = 0; n < basis.size(); ++n) {
    if (currents(n) == cplx(0.0)) continue;
    const auto& fn = basis[n];
    for (int side = 0; side < 2; ++side) {
      const int t = side == 0 ? fn.plus_triangle : fn.minus_triangle;
      const int free_vertex = side == 0 ? fn.plus_vertex : fn.minus_vertex;
      const double sign = side == 0 ? 1.0 : -1.0;
      const auto& tri = mesh.triangles()[t];
      const Vec3& a = mesh.nodes()[tri[0]];
      const Vec3& b = mesh.nodes()[tri[1]];
      const Vec3& c = mesh.nodes()[tri[2]];
      const double area = mesh.area(t);
      const double coef = sign * fn.length / (2.0 * area);
      const Vec3& v = mesh.nodes()[free_vertex];
      for (const auto& q : rule) {
        const Vec3 r = q.b0 * a + q.b1 * b + q.b2 * c;
        const cplx phase = std::exp(cplx(0.0, k * f.rhat.dot(r)));
        integral += (currents(n) * q.weight * area * coef * phase) * (r - v).cast<cplx>();
      }
    }
  }
  const cplx pre = -kJ * k * medium.impedance / (4.0 * kPi);
  FarField out;
  out.e_theta = pre * f.theta_hat.cast<cplx>().dot(integral);
  out.e_phi = pre * f.phi_hat.cast<cplx>().dot(integral);
  return out;
}

RcsCurve bistatic_rcs(const VectorXc& currents, const RwgBasisSet& basis, const Medium& medium,
                      std::span<const double> theta_deg, double phi_deg,
                      const PlaneWave& incident) {
  incident.validate();
  RcsCurve curve;
  curve.mode = "bistatic";
  curve.pol = incident.pol;
  curve.frequency = medium.frequency();
  for (double th : theta_deg) {
    const auto e = radiated_farfield(currents, basis, medium, th * kDeg, phi_deg * kDeg);
    curve.angles_deg.push_back(th);
    curve.sigma_dbsm.push_back(to_dbsm(4.0 * kPi * e.power()));
  }
  return curve;
}

RcsCurve monostatic_rcs(const MomOperator& op, const RhsSolver& solve,
                        std::span<const double> theta_deg, double phi_deg, Polarization pol) {
  RcsCurve curve;
  curve.mode = "monostatic";
  curve.pol = pol;
  curve.frequency = op.medium().frequency();
  for (double th : theta_deg) {
    PlaneWave{th, phi_deg, pol}.validate();
    const VectorXc b = op.plane_wave_rhs(th * kDeg, phi_deg * kDeg, pol);
    const VectorXc x = solve(b, th);
    const auto e = radiated_farfield(x, op.basis(), op.medium(), th * kDeg, phi_deg * kDeg);
    curve.angles_deg.push_back(th);
    curve.sigma_dbsm.push_back(to_dbsm(4.0 * kPi * e.power()));
  }
  return curve;
}

int mie_order(double ka) {
  return static_cast<int>(std::ceil(ka + 4.0 * std::cbrt(ka) + 2.0));
}

namespace {

struct MieCoefficients {
  std::vector<cplx> a, b;  // index n - 1
};

// Riccati-Bessel psi_n(x) = x j_n(x), xi_n(x) = x h2_n(x) = x (j_n - j y_n)
// (outgoing for e^{+j omega t}); PEC limit a_n = psi_n'/xi_n', b_n = psi_n/xi_n.
MieCoefficients mie_coefficients(double x, int order) {
  MieCoefficients c;
  for (int n = 1; n <= order; ++n) {
    const unsigned un = static_cast<unsigned>(n);
    const double jn = std::sph_bessel(un, x), jn1 = std::sph_bessel(un - 1, x);
    const double yn = std::sph_neumann(un, x), yn1 = std::sph_neumann(un - 1, x);
    const cplx xi(x * jn, -x * yn);
    const double psi = x * jn;
    const double dpsi = x * jn1 - n * jn;
    const cplx dxi(x * jn1 - n * jn, -(x * yn1 - n * yn));
    c.a.push_back(dpsi / dxi);
    c.b.push_back(psi / xi);
  }
  return c;
}

}  // namespace

double mie_backscatter(const MieConfig& cfg) {
  if (!(cfg.radius > 0.0 && cfg.wavenumber > 0.0)) {
    throw std::invalid_argument("MieConfig: ka must be positive");
  }
  const double x = cfg.wavenumber * cfg.radius;
  const int order = cfg.order > 0 ? cfg.order : mie_order(x);
  const auto c = mie_coefficients(x, order);
  cplx sum = 0.0;
  for (int n = 1; n <= order; ++n) {
    sum += (2.0 * n + 1.0) * (n % 2 ? -1.0 : 1.0) * (c.a[n - 1] - c.b[n - 1]);
  }
  return kPi * cfg.radius * cfg.radius * std::norm(sum) / (x * x);
}

RcsCurve mie_rcs_pec_sphere(const MieConfig& cfg, std::span<const double> angles_deg,
                            const std::string& mode, Polarization pol) {
  if (!(cfg.radius > 0.0 && cfg.wavenumber > 0.0)) {
    throw std::invalid_argument("MieConfig: ka must be positive");
  }
  RcsCurve curve;
  curve.mode = mode;
  curve.pol = pol;
  curve.geometry = "mie_sphere";
  curve.frequency = cfg.wavenumber * 299792458.0 / (2.0 * kPi);
  const double x = cfg.wavenumber * cfg.radius;
  if (mode == "monostatic") {
    const double s = to_dbsm(mie_backscatter(cfg));
    for (double a : angles_deg) {
      curve.angles_deg.push_back(a);
      curve.sigma_dbsm.push_back(s);
    }
    return curve;
  }
  if (mode != "bistatic") throw std::invalid_argument("mie_rcs_pec_sphere: unknown mode " + mode);
  const int order = cfg.order > 0 ? cfg.order : mie_order(x);
  const auto c = mie_coefficients(x, order);
  const double k = cfg.wavenumber;
  for (double a : angles_deg) {
    // wave travels along -z, so the scattering angle is pi - theta
    const double mu = std::cos(kPi - a * kDeg);
    double pi_prev = 0.0, pi_cur = 1.0;  // pi_0, pi_1
    cplx s1 = 0.0, s2 = 0.0;
    for (int n = 1; n <= order; ++n) {
      const double tau = n * mu * pi_cur - (n + 1) * pi_prev;
      const double w = (2.0 * n + 1.0) / (n * (n + 1.0));
      s1 += w * (c.a[n - 1] * pi_cur + c.b[n - 1] * tau);
      s2 += w * (c.a[n - 1] * tau + c.b[n - 1] * pi_cur);
      const double pi_next = ((2.0 * n + 1.0) * mu * pi_cur - (n + 1.0) * pi_prev) / n;
      pi_prev = pi_cur;
      pi_cur = pi_next;
    }
    const cplx s = pol == Polarization::vv ? s2 : s1;
    curve.angles_deg.push_back(a);
    curve.sigma_dbsm.push_back(to_dbsm(4.0 * kPi * std::norm(s) / (k * k)));
  }
  return curve;
}

CurveComparison compare_curves(const RcsCurve& reference, const RcsCurve& test,
                               double exclude_below_peak_db) {
  if (reference.sigma_dbsm.size() != test.sigma_dbsm.size()) {
    throw DimensionError("compare_curves: curves have different sample counts");
  }
  CurveComparison out;
  if (reference.sigma_dbsm.empty()) return out;
  double peak = reference.sigma_dbsm.front();
  for (double s : reference.sigma_dbsm) peak = std::max(peak, s);
  double sum = 0.0;
  for (size_t i = 0; i < reference.sigma_dbsm.size(); ++i) {
    if (reference.sigma_dbsm[i] < peak - exclude_below_peak_db) continue;
    const double d = std::abs(reference.sigma_dbsm[i] - test.sigma_dbsm[i]);
    sum += d;
    out.max_abs_db = std::max(out.max_abs_db, d);
    ++out.samples;
  }
  if (out.samples) out.mean_abs_db = sum / out.samples;
  return out;
}

void write_rcs_csv(const RcsCurve& curve, std::ostream& os) {
  os << "angle_deg,rcs_dbsm\n";
  os << std::setprecision(6);
  for (size_t i = 0; i < curve.angles_deg.size(); ++i) {
    os << curve.angles_deg[i] << ',' << curve.sigma_dbsm[i] << '\n';
  }
}

void write_rcs_csv(const RcsCurve& curve, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_rcs_csv: cannot open " + path);
  write_rcs_csv(curve, os);
}

std::vector<double> angle_range(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw std::invalid_argument("angle_range: invalid range");
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int i = 0; i <= n; ++i) out.push_back(lo + i * step);
  return out;
}

}  // namespace psmom
