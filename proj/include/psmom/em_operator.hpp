#pragma once

#include <array>
#include <span>
#include <vector>

#include "psmom/geometry.hpp"
#include "psmom/quadrature.hpp"
#include "psmom/types.hpp"

namespace psmom {

/// Lossless homogeneous background. Time convention e^{+j omega t}.
struct Medium {
  double wavenumber = 0.0;   // k, rad/m
  double omega = 0.0;        // rad/s
  double permittivity = 0.0;
  double permeability = 0.0;
  double impedance = 0.0;    // Z_o, ohms

  static Medium free_space(double frequency_hz);
  /// Free-space medium with the given wavenumber.
  static Medium from_wavenumber(double k);
  static Medium from_wavelength(double lambda) { return from_wavenumber(2.0 * kPi / lambda); }

  double wavelength() const { return 2.0 * kPi / wavenumber; }
  double frequency() const { return omega / (2.0 * kPi); }
};

inline constexpr double kEps0 = 8.8541878128e-12;
inline constexpr double kMu0 = 1.25663706212e-6;

enum class Formulation { efie, mfie, cfie };
enum class Polarization { vv, hh };

struct OperatorConfig {
  Formulation formulation = Formulation::cfie;
  double cfie_alpha = 0.5;
  int regular_points = 3;   // well separated triangle pairs
  int near_points = 7;      // centroid distance < near_factor * diameter
  int self_points = 7;      // outer rule on self/touching pairs
  double near_factor = 2.0;
};

/// Raised when a formulation is used on a surface it does not apply to.
class FormulationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Free-space Green's function e^{-jkR} / (4 pi R). Throws std::domain_error
/// at R = 0.
cplx green(const Vec3& r, const Vec3& r_src, double k);

/// Gradient with respect to the source point, (jk + 1/R) G R_hat with
/// R_hat = (r - r_src)/R. Throws std::domain_error at R = 0.
CVec3 grad_green(const Vec3& r, const Vec3& r_src, double k);

/// Closed-form potential integrals of a flat triangle seen from r:
/// scalar = \int 1/R dS', vector = \int (r' - rho)/R dS' where rho is the
/// projection of r on the triangle's plane.
struct PotentialIntegrals {
  double scalar = 0.0;
  Vec3 vector = Vec3::Zero();
};
PotentialIntegrals potential_integrals(const std::array<Vec3, 3>& tri, const Vec3& r);

/// Galerkin RWG discretisation of EFIE / MFIE / CFIE on one mesh.
///
/// Entries follow CFIE = alpha EFIE + Z_o (1 - alpha) MFIE. EFIE pair
/// integrals are evaluated in a canonical (lower triangle id first) order,
/// so the EFIE matrix is complex symmetric to rounding.
class MomOperator {
 public:
  /// Throws FormulationError for MFIE on an open surface. CFIE on an open
  /// surface is reduced to alpha = 1.
  MomOperator(const RwgBasisSet& basis, const Medium& medium, OperatorConfig config = {});

  int size() const { return basis_.size(); }
  const RwgBasisSet& basis() const { return basis_; }
  const Medium& medium() const { return medium_; }
  const OperatorConfig& config() const { return config_; }
  double alpha() const { return alpha_; }
  bool symmetric() const { return alpha_ == 1.0; }
  SurfaceKind surface() const { return surface_; }

  cplx efie_entry(int m, int n) const;
  /// Throws FormulationError on an open surface.
  cplx mfie_entry(int m, int n) const;
  /// Identity term <f_m, f_n / 2> of the MFIE.
  double mfie_identity_entry(int m, int n) const;
  /// Entry of the configured formulation.
  cplx entry(int m, int n) const;

  /// Dense sub-block Z(rows, cols) of the configured formulation.
  MatrixXc assemble_block(std::span<const int> rows, std::span<const int> cols) const;
  MatrixXc assemble_dense() const;

  /// Tested incident field for a unit plane wave arriving from (theta, phi)
  /// (propagation along -r_hat); VV polarised along theta_hat, HH along
  /// phi_hat.
  VectorXc plane_wave_rhs(double theta, double phi, Polarization pol) const;

  /// Counts triangle-pair integrations performed so far.
  long long pair_evaluations() const { return pair_evaluations_; }

  struct PairIntegrals {
    Eigen::Matrix3cd vec;   // \int\int (r - v_i).(r' - v_j) G
    cplx scalar = 0.0;      // \int\int G
    Eigen::Matrix3cd mfie;  // \int\int (r - v_i).[n x ((r' - v_j) x grad' G)]
  };
  /// Test triangle t, source triangle s.
  PairIntegrals pair_integrals(int t, int s, bool with_mfie) const;

 private:
  struct TriangleData {
    std::array<Vec3, 3> v;
    std::array<int, 3> ids;
    Vec3 normal;
    Vec3 centroid;
    double area;
    double diameter;
    std::vector<Vec3> q3, q7, qsub;  // quadrature points
    std::vector<double> w3, w7, wsub;  // weights * area
  };

  // local vertex index of node id in triangle t
  int local_vertex(int t, int node) const;
  bool touching(int t, int s) const;
  void efie_regular(int t, int s, int rule, Eigen::Matrix3cd& vec, cplx& scalar) const;
  void efie_singular(int t, int s, Eigen::Matrix3cd& vec, cplx& scalar) const;
  void mfie_pair(int t, int s, int rule, Eigen::Matrix3cd& out) const;
  int rule_for(int t, int s) const;

  struct Half {
    int triangle;
    int vertex;   // local free-vertex index
    double sign;
    double coef;  // l / (2A)
  };
  const std::array<Half, 2>& halves(int n) const { return halves_[n]; }
  cplx combine(int m, int n, const PairIntegrals* pairs[2][2], bool efie, bool mfie,
               bool weighted = true) const;
  double gram(int t, int i, int j) const;

  RwgBasisSet basis_;
  Medium medium_;
  OperatorConfig config_;
  SurfaceKind surface_;
  double alpha_;
  std::vector<TriangleData> tris_;
  std::vector<std::array<Half, 2>> halves_;
  mutable long long pair_evaluations_ = 0;
};

}  // namespace psmom
