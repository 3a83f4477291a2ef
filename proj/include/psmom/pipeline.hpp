#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "psmom/cluster_tree.hpp"
#include "psmom/em_operator.hpp"
#include "psmom/geometry.hpp"
#include "psmom/hmatrix.hpp"
#include "psmom/postprocess.hpp"
#include "psmom/power_series.hpp"
#include "psmom/schur_scaling.hpp"

namespace psmom {

/// Invalid or inconsistent run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat run configuration. Lengths in metres; the default frequency makes
/// one wavelength exactly one metre.
struct RunConfig {
  std::string geometry = "sphere";  // sphere | plate | cube | file
  std::string mesh_path;
  double radius = 0.5;
  double side = 1.0;
  double frequency = 299792458.0;
  double density = 10.0;  // elements per wavelength
  Formulation formulation = Formulation::cfie;
  double alpha = 0.5;
  double leaf_factor = 0.5;
  double eta = 1.0;
  double aca_tolerance = 1e-4;
  int n_terms = 2;
  double threshold = 0.1;
  bool adaptive = false;
  int max_terms = 8;
  bool symmetrize_near = false;
  std::string sweep_mode = "bistatic";  // bistatic | monostatic
  double theta_start = 0.0;
  double theta_stop = 180.0;
  double theta_step = 1.0;
  double phi = 0.0;
  double incidence_theta = 0.0;
  double incidence_phi = 0.0;
  Polarization polarization = Polarization::vv;
  std::vector<int> sweep_sizes = {1000, 2000, 4000, 8000, 16000};
  int dense_cap = 8000;
  std::string output_dir = ".";
  std::string hmatrix_dump;  // optional path: save after assembly
  std::string hmatrix_load;  // optional path: reuse a previous dump
  unsigned seed = 1;
  bool deterministic = true;
  int threads = 1;

  /// Applies one `key=value` assignment. Throws ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Cross-field checks. Throws ConfigError.
  void validate() const;
  std::map<std::string, std::string> entries() const;
};

/// Parses `key = value` lines; `#` starts a comment.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

std::string to_string(Formulation f);
std::string to_string(Polarization p);

double wavelength_of(const RunConfig& cfg);
TriangleMesh build_mesh(const RunConfig& cfg);

/// Geodesic sphere with about `target_unknowns` RWG functions, scaled so its
/// mean edge is `edge`.
TriangleMesh sphere_with_unknowns(int target_unknowns, double edge);

struct SolverOptions {
  double leaf_factor = 0.5;
  double eta = 1.0;
  AcaConfig aca;
  SeriesConfig series;
  bool symmetrize_near = false;
};

SolverOptions solver_options(const RunConfig& cfg);
OperatorConfig operator_config(const RunConfig& cfg);

struct SetupTimings {
  double tree = 0.0;
  double near_assembly = 0.0;
  double far_assembly = 0.0;  // ACA + recompression
  double scaling = 0.0;
  double total() const { return tree + near_assembly + far_assembly + scaling; }
};

/// Everything needed to solve many right-hand sides with one operator:
/// tree, H-matrix, near-field scaling. Built once.
class SeriesSolver {
 public:
  SeriesSolver(const MomOperator& op, const SolverOptions& options);
  /// Reuses a previously assembled H-matrix.
  SeriesSolver(const MomOperator& op, HMatrix h, const SolverOptions& options);

  const MomOperator& op() const { return *op_; }
  const HMatrix& hmatrix() const { return h_; }
  const ScalingSet& scaling() const { return scaling_; }
  const ScaledNearField& diagonal() const { return diagonal_; }
  const ScalingDiagnostics& diagnostics() const { return diagnostics_; }
  const std::vector<int>& order() const { return order_; }
  const SetupTimings& timings() const { return timings_; }
  const SolverOptions& options() const { return options_; }

  SeriesResult solve(const VectorXc& b) const;
  SeriesResult solve(const VectorXc& b, const SeriesConfig& series) const;
  GmresResult gmres(const VectorXc& b, double tol = 1e-6) const;

  long long solves() const { return solves_; }
  long long u_applications() const { return u_applications_; }

  /// Complex numbers held by the H-matrix and by the scaling.
  long long memory_entries() const;

  /// Number of SeriesSolver setups performed in this process.
  static long long setup_count();

 private:
  void build_scaling();

  const MomOperator* op_;
  SolverOptions options_;
  HMatrix h_;
  ScalingSet scaling_;
  ScaledNearField diagonal_;
  ScalingDiagnostics diagnostics_;
  std::vector<int> order_;
  SetupTimings timings_;
  mutable long long solves_ = 0;
  mutable long long u_applications_ = 0;
};

/// Operator sampler for H-matrix assembly.
BlockSampler operator_sampler(const MomOperator& op);

/// ||offdiag(L Z_N R)||_F / ||Z_N||_F in tree ordering (dense; small N).
double offdiagonal_mass(const HMatrix& h, const ScalingSet& scaling);

/// Per far block relative Frobenius error against exact assembly.
struct AcaBlockError {
  int row = 0;
  int col = 0;
  int rank = 0;
  double error = 0.0;
  bool rank_capped = false;
};
std::vector<AcaBlockError> aca_block_errors(const HMatrix& h, const MomOperator& op,
                                            long long max_block_entries = 1000000);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace psmom
