#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "psmom/em_operator.hpp"
#include "psmom/geometry.hpp"
#include "psmom/types.hpp"

namespace psmom {

/// Unit-amplitude plane wave arriving from (theta, phi), in degrees.
struct PlaneWave {
  double theta_deg = 0.0;
  double phi_deg = 0.0;
  Polarization pol = Polarization::vv;

  void validate() const;
};

/// r E_far components along theta_hat / phi_hat.
struct FarField {
  cplx e_theta = 0.0;
  cplx e_phi = 0.0;

  double power() const { return std::norm(e_theta) + std::norm(e_phi); }
};

/// Radiated far field of RWG currents (3-point rule per triangle); angles in
/// radians.
FarField radiated_farfield(const VectorXc& currents, const RwgBasisSet& basis,
                           const Medium& medium, double theta, double phi);

struct RcsCurve {
  std::vector<double> angles_deg;
  std::vector<double> sigma_dbsm;
  double frequency = 0.0;
  std::string geometry;
  std::string mode;  // "bistatic" | "monostatic"
  Polarization pol = Polarization::vv;
};

inline double to_dbsm(double sigma) { return 10.0 * std::log10(sigma); }

/// Observation sweep over theta (degrees) at fixed phi; sigma = 4 pi |r E|^2.
RcsCurve bistatic_rcs(const VectorXc& currents, const RwgBasisSet& basis, const Medium& medium,
                      std::span<const double> theta_deg, double phi_deg, const PlaneWave& incident);

/// Solves one right-hand side; the angle (degrees) is passed for context.
using RhsSolver = std::function<VectorXc(const VectorXc& rhs, double theta_deg)>;

/// Backscatter for each incidence theta (degrees) at fixed phi.
RcsCurve monostatic_rcs(const MomOperator& op, const RhsSolver& solve,
                        std::span<const double> theta_deg, double phi_deg, Polarization pol);

struct MieConfig {
  double radius = 1.0;
  double wavenumber = 1.0;
  int order = 0;  // <= 0: ceil(ka + 4 (ka)^{1/3} + 2)
};

int mie_order(double ka);

/// PEC sphere backscatter cross section, m^2.
double mie_backscatter(const MieConfig& cfg);

/// Bistatic curve for incidence from theta = 0 (propagating along -z):
/// E-plane cut for VV, H-plane cut for HH, observation angles theta in
/// degrees. Monostatic mode returns the constant backscatter value.
RcsCurve mie_rcs_pec_sphere(const MieConfig& cfg, std::span<const double> angles_deg,
                            const std::string& mode = "bistatic",
                            Polarization pol = Polarization::vv);

/// Deviation statistics of `test` against `reference`; reference samples
/// more than `exclude_below_peak_db` below the reference peak are skipped.
struct CurveComparison {
  double mean_abs_db = 0.0;
  double max_abs_db = 0.0;
  int samples = 0;
};
CurveComparison compare_curves(const RcsCurve& reference, const RcsCurve& test,
                               double exclude_below_peak_db = 30.0);

/// `angle_deg,rcs_dbsm` with 6 significant digits.
void write_rcs_csv(const RcsCurve& curve, std::ostream& os);
void write_rcs_csv(const RcsCurve& curve, const std::string& path);

/// Evenly spaced angles lo, lo + step, ..., hi (inclusive when on grid).
std::vector<double> angle_range(double lo, double hi, double step);

}  // namespace psmom
