#include "psmom/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace psmom {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  if (d != std::floor(d) || std::abs(d) > 2e9) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return static_cast<int>(d);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(Formulation f) {
  switch (f) {
    case Formulation::efie: return "efie";
    case Formulation::mfie: return "mfie";
    case Formulation::cfie: return "cfie";
  }
  return "?";
}

std::string to_string(Polarization p) { return p == Polarization::vv ? "vv" : "hh"; }

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  using Setter = std::function<void()>;
  const std::map<std::string, Setter> setters = {
      {"geometry", [&] { geometry = v; }},
      {"mesh_path", [&] { mesh_path = v; }},
      {"radius", [&] { radius = parse_double(key, v); }},
      {"side", [&] { side = parse_double(key, v); }},
      {"frequency", [&] { frequency = parse_double(key, v); }},
      {"density", [&] { density = parse_double(key, v); }},
      {"formulation",
       [&] {
         if (v == "efie") formulation = Formulation::efie;
         else if (v == "mfie") formulation = Formulation::mfie;
         else if (v == "cfie") formulation = Formulation::cfie;
         else throw ConfigError("config: formulation must be efie, mfie or cfie");
       }},
      {"alpha", [&] { alpha = parse_double(key, v); }},
      {"leaf_factor", [&] { leaf_factor = parse_double(key, v); }},
      {"eta", [&] { eta = parse_double(key, v); }},
      {"aca_tolerance", [&] { aca_tolerance = parse_double(key, v); }},
      {"n_terms", [&] { n_terms = parse_int(key, v); }},
      {"threshold", [&] { threshold = parse_double(key, v); }},
      {"adaptive", [&] { adaptive = parse_bool(key, v); }},
      {"max_terms", [&] { max_terms = parse_int(key, v); }},
      {"symmetrize_near", [&] { symmetrize_near = parse_bool(key, v); }},
      {"sweep_mode", [&] { sweep_mode = v; }},
      {"theta_start", [&] { theta_start = parse_double(key, v); }},
      {"theta_stop", [&] { theta_stop = parse_double(key, v); }},
      {"theta_step", [&] { theta_step = parse_double(key, v); }},
      {"phi", [&] { phi = parse_double(key, v); }},
      {"incidence_theta", [&] { incidence_theta = parse_double(key, v); }},
      {"incidence_phi", [&] { incidence_phi = parse_double(key, v); }},
      {"polarization",
       [&] {
         if (v == "vv" || v == "VV") polarization = Polarization::vv;
         else if (v == "hh" || v == "HH") polarization = Polarization::hh;
         else throw ConfigError("config: polarization must be vv or hh");
       }},
      {"sweep_sizes",
       [&] {
         sweep_sizes.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) {
           if (!trim(item).empty()) sweep_sizes.push_back(parse_int(key, trim(item)));
         }
       }},
      {"dense_cap", [&] { dense_cap = parse_int(key, v); }},
      {"output_dir", [&] { output_dir = v; }},
      {"hmatrix_dump", [&] { hmatrix_dump = v; }},
      {"hmatrix_load", [&] { hmatrix_load = v; }},
      {"seed", [&] { seed = static_cast<unsigned>(parse_int(key, v)); }},
      {"deterministic", [&] { deterministic = parse_bool(key, v); }},
      {"threads", [&] { threads = parse_int(key, v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second();
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  require(geometry == "sphere" || geometry == "plate" || geometry == "cube" || geometry == "file",
          "geometry must be sphere, plate, cube or file");
  require(geometry != "file" || !mesh_path.empty(), "geometry=file needs mesh_path");
  require(radius > 0.0 && side > 0.0, "radius and side must be positive");
  require(frequency > 0.0, "frequency must be positive");
  require(density > 0.0, "density must be positive");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  require(leaf_factor > 0.0, "leaf_factor must be positive");
  require(eta > 0.0, "eta must be positive");
  require(aca_tolerance > 0.0 && aca_tolerance < 1.0, "aca_tolerance must lie in (0, 1)");
  require(n_terms >= 1, "n_terms must be >= 1");
  require(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
  require(max_terms >= 1, "max_terms must be >= 1");
  require(sweep_mode == "bistatic" || sweep_mode == "monostatic",
          "sweep_mode must be bistatic or monostatic");
  require(theta_start >= 0.0 && theta_stop <= 180.0 && theta_start <= theta_stop,
          "theta range must lie in [0, 180] with start <= stop");
  require(theta_step > 0.0, "theta_step must be positive");
  require(phi >= 0.0 && phi < 360.0 && incidence_phi >= 0.0 && incidence_phi < 360.0,
          "phi angles must lie in [0, 360)");
  require(incidence_theta >= 0.0 && incidence_theta <= 180.0,
          "incidence_theta must lie in [0, 180]");
  require(!sweep_sizes.empty() && std::is_sorted(sweep_sizes.begin(), sweep_sizes.end()) &&
              sweep_sizes.front() > 0,
          "sweep_sizes must be a positive ascending list");
  require(dense_cap > 0, "dense_cap must be positive");
  require(threads >= 1, "threads must be >= 1");
  require(!(geometry == "plate" && formulation == Formulation::mfie),
          "MFIE requires a closed surface; the plate is open");
}

std::map<std::string, std::string> RunConfig::entries() const {
  std::string sizes;
  for (size_t i = 0; i < sweep_sizes.size(); ++i) {
    sizes += (i ? "," : "") + std::to_string(sweep_sizes[i]);
  }
  return {{"geometry", geometry},
          {"mesh_path", mesh_path},
          {"radius", fmt(radius)},
          {"side", fmt(side)},
          {"frequency", fmt(frequency)},
          {"density", fmt(density)},
          {"formulation", to_string(formulation)},
          {"alpha", fmt(alpha)},
          {"leaf_factor", fmt(leaf_factor)},
          {"eta", fmt(eta)},
          {"aca_tolerance", fmt(aca_tolerance)},
          {"n_terms", std::to_string(n_terms)},
          {"threshold", fmt(threshold)},
          {"adaptive", adaptive ? "true" : "false"},
          {"max_terms", std::to_string(max_terms)},
          {"symmetrize_near", symmetrize_near ? "true" : "false"},
          {"sweep_mode", sweep_mode},
          {"theta_start", fmt(theta_start)},
          {"theta_stop", fmt(theta_stop)},
          {"theta_step", fmt(theta_step)},
          {"phi", fmt(phi)},
          {"incidence_theta", fmt(incidence_theta)},
          {"incidence_phi", fmt(incidence_phi)},
          {"polarization", to_string(polarization)},
          {"sweep_sizes", sizes},
          {"dense_cap", std::to_string(dense_cap)},
          {"output_dir", output_dir},
          {"seed", std::to_string(seed)},
          {"deterministic", deterministic ? "true" : "false"},
          {"threads", std::to_string(threads)}};
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    base.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

double wavelength_of(const RunConfig& cfg) { return 299792458.0 / cfg.frequency; }

TriangleMesh build_mesh(const RunConfig& cfg) {
  const double edge = wavelength_of(cfg) / cfg.density;
  auto divisions = [&](double side) {
    return std::max(1, static_cast<int>(std::ceil(side / edge - 1e-9)));
  };
  if (cfg.geometry == "sphere") return make_sphere(cfg.radius, edge);
  if (cfg.geometry == "plate") return make_plate(cfg.side, divisions(cfg.side));
  if (cfg.geometry == "cube") return make_cube(cfg.side, divisions(cfg.side));
  if (cfg.geometry == "file") return load_mesh(cfg.mesh_path);
  throw ConfigError("config: unknown geometry '" + cfg.geometry + "'");
}

TriangleMesh sphere_with_unknowns(int target_unknowns, double edge) {
  const int nu = std::max(1, static_cast<int>(std::lround(std::sqrt(target_unknowns / 30.0))));
  const double unit_edge = make_geodesic_sphere(1.0, nu).mean_edge_length();
  return make_geodesic_sphere(edge / unit_edge, nu);
}

SolverOptions solver_options(const RunConfig& cfg) {
  SolverOptions o;
  o.leaf_factor = cfg.leaf_factor;
  o.eta = cfg.eta;
  o.aca.tolerance = cfg.aca_tolerance;
  o.series.n_terms = cfg.n_terms;
  o.series.threshold = cfg.threshold;
  o.series.adaptive = cfg.adaptive;
  o.series.max_terms = cfg.max_terms;
  o.symmetrize_near = cfg.symmetrize_near;
  return o;
}

OperatorConfig operator_config(const RunConfig& cfg) {
  OperatorConfig o;
  o.formulation = cfg.formulation;
  o.cfie_alpha = cfg.alpha;
  return o;
}

BlockSampler operator_sampler(const MomOperator& op) {
  return [&op](std::span<const int> rows, std::span<const int> cols) {
    return op.assemble_block(rows, cols);
  };
}

namespace {

std::atomic<long long> g_setups{0};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

long long SeriesSolver::setup_count() { return g_setups.load(); }

SeriesSolver::SeriesSolver(const MomOperator& op, const SolverOptions& options)
    : op_(&op), options_(options) {
  validate(options_.series);
  ++g_setups;
  auto t0 = std::chrono::steady_clock::now();
  auto tree = build_tree(op.basis().centroids(), op.medium().wavelength(), options_.leaf_factor);
  auto partition = partition_blocks(tree, options_.eta);
  timings_.tree = seconds_since(t0);
  AssemblyStats stats;
  h_ = assemble_hmatrix(operator_sampler(op), tree, partition, options_.aca, op.symmetric(),
                        &stats);
  timings_.near_assembly = stats.near_seconds;
  timings_.far_assembly = stats.far_seconds;
  build_scaling();
}

SeriesSolver::SeriesSolver(const MomOperator& op, HMatrix h, const SolverOptions& options)
    : op_(&op), options_(options), h_(std::move(h)) {
  validate(options_.series);
  if (h_.size() != op.size()) throw DimensionError("SeriesSolver: H-matrix size mismatch");
  ++g_setups;
  build_scaling();
}

void SeriesSolver::build_scaling() {
  auto t0 = std::chrono::steady_clock::now();
  NearPattern pattern = near_pattern(h_);
  order_ = order_leaves(pattern.adjacency);
  bool symmetric = h_.symmetric();
  if (options_.symmetrize_near && !symmetric) {
    const HMatrix* h = &h_;
    pattern.block = [h](int i, int j) -> MatrixXc {
      return 0.5 * (h->near_block(i, j) + h->near_block(j, i).transpose());
    };
    symmetric = true;
  }
  compute_scaling(pattern, order_, symmetric, scaling_, diagonal_, &diagnostics_);
  timings_.scaling = seconds_since(t0);
}

SeriesResult SeriesSolver::solve(const VectorXc& b) const { return solve(b, options_.series); }

SeriesResult SeriesSolver::solve(const VectorXc& b, const SeriesConfig& series) const {
  auto result = solve_system(h_, scaling_, diagonal_, b, series);
  ++solves_;
  u_applications_ += result.report.applications;
  return result;
}

GmresResult SeriesSolver::gmres(const VectorXc& b, double tol) const {
  return gmres_solve(h_, b, tol);
}

long long SeriesSolver::memory_entries() const {
  return h_.near_storage() + h_.far_storage() + diagnostics_.memory_entries;
}

double offdiagonal_mass(const HMatrix& h, const ScalingSet& scaling) {
  // block-sparse: only the near pattern plus elimination fill is ever nonzero
  const auto& tree = h.tree();
  const int L = tree.num_leaves();
  std::vector<std::map<int, MatrixXc>> m(L);
  double z_norm2 = 0.0;
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      if (!h.find_near(i, j)) continue;
      m[i][j] = h.near_block(i, j);
      z_norm2 += m[i][j].squaredNorm();
    }
  }
  auto zero = [&](int i, int j) -> MatrixXc& {
    auto [it, inserted] = m[i].try_emplace(j);
    if (inserted) it->second = MatrixXc::Zero(tree.leaf(i).size(), tree.leaf(j).size());
    return it->second;
  };
  // L Z R = ... L_2 (L_1 Z R_1) R_2 ...: applying both sides of each step
  // together keeps eliminated rows down to their rounding residue
  for (const auto& step : scaling.steps) {
    const int p = step.leaf;
    // column block j += column block p * alpha_pj
    for (int i = 0; i < L; ++i) {
      auto it = m[i].find(p);
      if (it == m[i].end()) continue;
      const MatrixXc& mip = it->second;
      for (size_t c = 0; c < step.neighbors.size(); ++c) {
        zero(i, step.neighbors[c]).noalias() += mip * step.right[c];
      }
    }
    // row block j += alpha'_jp * row block p
    const auto& row_p = m[p];
    for (size_t c = 0; c < step.neighbors.size(); ++c) {
      const int j = step.neighbors[c];
      const MatrixXc a = scaling.symmetric ? MatrixXc(step.right[c].transpose()) : step.left[c];
      for (const auto& [col, blk] : row_p) zero(j, col).noalias() += a * blk;
    }
  }
  double off2 = 0.0;
  for (int i = 0; i < L; ++i) {
    for (const auto& [j, blk] : m[i]) {
      if (j != i) off2 += blk.squaredNorm();
    }
  }
  return std::sqrt(off2 / z_norm2);
}

std::vector<AcaBlockError> aca_block_errors(const HMatrix& h, const MomOperator& op,
                                            long long max_block_entries) {
  std::vector<AcaBlockError> out;
  const auto& tree = h.tree();
  const auto& perm = tree.permutation();
  for (const auto& b : h.far_blocks()) {
    const auto& t = tree.node(b.row);
    const auto& s = tree.node(b.col);
    if (static_cast<long long>(t.size()) * s.size() > max_block_entries) continue;
    const MatrixXc exact =
        op.assemble_block(std::span<const int>(perm.data() + t.begin, t.size()),
                          std::span<const int>(perm.data() + s.begin, s.size()));
    const double err = (exact - b.factors.dense()).norm() / exact.norm();
    out.push_back({b.row, b.col, b.factors.rank(), err, b.factors.rank_capped});
  }
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("loglog_slope: need at least two matching samples");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace psmom
