// psmom: power-series H-matrix MoM solver driver.
//
//   psmom <solve|validate|rcs|sweep|mesh-info> [config-file] [--set key=value]... [-o dir]
//
// Exit codes: 0 ok, 2 configuration / validation error, 3 series divergence,
// 4 numerical failure.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "psmom/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace psmom;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDiverged = 3, kNumericalFailure = 4 };

class Diverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void flatten(const json& j, const std::string& prefix, std::ostream& os) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, os);
    return;
  }
  os << prefix << " = ";
  if (j.is_array()) {
    bool first = true;
    for (const auto& v : j) {
      os << (first ? "" : ",") << (v.is_string() ? v.get<std::string>() : v.dump());
      first = false;
    }
  } else if (j.is_string()) {
    os << j.get<std::string>();
  } else {
    os << j.dump();
  }
  os << '\n';
}

void write_report(const json& report, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir);
  std::ofstream txt(dir / (stem + ".txt"));
  flatten(report, "", txt);
  std::ofstream js(dir / (stem + ".json"));
  js << std::setw(2) << report << '\n';
}

json config_json(const RunConfig& cfg) {
  json j;
  for (const auto& [k, v] : cfg.entries()) j[k] = v;
  return j;
}

json mesh_json(const TriangleMesh& mesh, double wavelength) {
  json j;
  j["nodes"] = mesh.num_nodes();
  j["triangles"] = mesh.num_triangles();
  j["edges"] = mesh.num_edges();
  j["interior_edges"] = mesh.num_interior_edges();
  j["surface"] = classify_surface(mesh) == SurfaceKind::closed ? "closed" : "open";
  j["mean_edge_wavelengths"] = mesh.mean_edge_length() / wavelength;
  j["max_edge_wavelengths"] = mesh.max_edge_length() / wavelength;
  return j;
}

json solver_json(const SeriesSolver& s) {
  const auto& h = s.hmatrix();
  json j;
  j["N"] = h.size();
  j["tree_depth"] = h.tree().depth();
  j["leaves"] = h.tree().num_leaves();
  j["near_blocks"] = h.partition().near.size();
  j["far_blocks"] = h.partition().far.size();
  j["symmetric"] = h.symmetric();
  int rmin = 0, rmax = 0;
  double rsum = 0.0;
  bool first = true;
  for (const auto& b : h.far_blocks()) {
    const int r = b.factors.rank();
    rmin = first ? r : std::min(rmin, r);
    rmax = first ? r : std::max(rmax, r);
    rsum += r;
    first = false;
  }
  j["aca_rank_min"] = rmin;
  j["aca_rank_max"] = rmax;
  j["aca_rank_mean"] = h.far_blocks().empty() ? 0.0 : rsum / h.far_blocks().size();
  j["aca_warnings"] = h.warnings();
  j["compression_ratio"] = h.compression_ratio();
  j["fill_blocks"] = s.diagnostics().fill_blocks;
  j["fill_entries"] = s.diagnostics().fill_entries;
  j["schur_updates"] = s.diagnostics().total_updates;
  const auto& t = s.timings();
  j["timing"]["tree_s"] = t.tree;
  j["timing"]["near_assembly_s"] = t.near_assembly;
  j["timing"]["far_assembly_s"] = t.far_assembly;
  j["timing"]["scaling_s"] = t.scaling;
  j["timing"]["setup_total_s"] = t.total();
  const double bytes = sizeof(cplx);
  j["memory"]["hmatrix_near_bytes"] = h.near_storage() * bytes;
  j["memory"]["hmatrix_far_bytes"] = h.far_storage() * bytes;
  j["memory"]["scaling_bytes"] = s.diagnostics().memory_entries * bytes;
  j["memory"]["total_bytes"] = s.memory_entries() * bytes;
  return j;
}

json series_json(const ConvergenceReport& r) {
  json j;
  j["status"] = r.status == SeriesStatus::converged ? "converged" : "diverging";
  j["applications"] = r.applications;
  j["term_norms"] = r.term_norms;
  j["ratios"] = r.ratios;
  j["max_ratio"] = r.max_ratio();
  if (r.k_nf) j["k_nf"] = *r.k_nf;
  if (r.k_ff) j["k_ff"] = *r.k_ff;
  return j;
}

struct Problem {
  RunConfig cfg;
  TriangleMesh mesh;
  std::unique_ptr<RwgBasisSet> basis;
  Medium medium;
  std::unique_ptr<MomOperator> op;
};

Problem make_problem(const RunConfig& cfg) {
  Problem p;
  p.cfg = cfg;
  try {
    p.mesh = build_mesh(cfg);
    p.basis = std::make_unique<RwgBasisSet>(build_rwg(p.mesh));
  } catch (const MeshError& e) {
    throw ConfigError(std::string("mesh: ") + e.what());
  }
  p.medium = Medium::free_space(cfg.frequency);
  try {
    p.op = std::make_unique<MomOperator>(*p.basis, p.medium, operator_config(cfg));
  } catch (const FormulationError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

std::unique_ptr<SeriesSolver> make_solver(const Problem& p) {
  const auto opts = solver_options(p.cfg);
  if (!p.cfg.hmatrix_load.empty()) {
    auto h = HMatrix::load(p.cfg.hmatrix_load);
    if (h.size() != p.op->size()) throw ConfigError("hmatrix_load: dump does not match the mesh");
    return std::make_unique<SeriesSolver>(*p.op, std::move(h), opts);
  }
  auto s = std::make_unique<SeriesSolver>(*p.op, opts);
  if (!p.cfg.hmatrix_dump.empty()) s->hmatrix().save(p.cfg.hmatrix_dump);
  return s;
}

VectorXc incident_rhs(const Problem& p) {
  constexpr double deg = kPi / 180.0;
  return p.op->plane_wave_rhs(p.cfg.incidence_theta * deg, p.cfg.incidence_phi * deg,
                              p.cfg.polarization);
}

json base_report(const std::string& command, const Problem& p) {
  json r;
  r["command"] = command;
  r["config"] = config_json(p.cfg);
  r["mesh"] = mesh_json(p.mesh, wavelength_of(p.cfg));
  r["formulation"] = to_string(p.op->config().formulation);
  r["alpha_effective"] = p.op->alpha();
  r["threads_used"] = 1;
  return r;
}

int cmd_solve(const RunConfig& cfg) {
  auto p = make_problem(cfg);
  auto solver = make_solver(p);
  const VectorXc b = incident_rhs(p);
  const auto t0 = Clock::now();
  auto result = solver->solve(b);
  const double solve_s = seconds(t0);
  if (p.op->size() <= 2000 && p.cfg.adaptive) {
    condition_diagnostics(solver->hmatrix(), solver->scaling(), solver->diagonal(),
                          result.report);
  }

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  std::ofstream cur(dir / "currents.csv");
  cur << "index,re,im\n" << std::setprecision(10);
  for (int i = 0; i < result.x.size(); ++i) {
    cur << i << ',' << result.x(i).real() << ',' << result.x(i).imag() << '\n';
  }

  json r = base_report("solve", p);
  r["solver"] = solver_json(*solver);
  r["solver"]["timing"]["solve_per_rhs_s"] = solve_s;
  r["series"] = series_json(result.report);
  write_report(r, dir, "report");
  std::cout << "N = " << p.op->size() << ", ratios:";
  for (double x : result.report.ratios) std::cout << ' ' << x;
  std::cout << ", status "
            << (result.report.status == SeriesStatus::converged ? "converged" : "diverging")
            << '\n';
  return result.report.status == SeriesStatus::converged ? kOk : kDiverged;
}

int cmd_validate(const RunConfig& cfg) {
  auto p = make_problem(cfg);
  if (p.op->size() > cfg.dense_cap) {
    throw ConfigError("validate: N = " + std::to_string(p.op->size()) + " exceeds dense_cap " +
                      std::to_string(cfg.dense_cap));
  }
  auto solver = make_solver(p);
  const VectorXc b = incident_rhs(p);
  auto ps = solver->solve(b);
  const MatrixXc z = p.op->assemble_dense();
  const VectorXc x_dir = dense_direct_solve(z, b);
  const double err = (x_dir - ps.x).norm() / x_dir.norm();

  double aca_max = 0.0;
  const auto block_errors = aca_block_errors(solver->hmatrix(), *p.op);
  for (const auto& e : block_errors) aca_max = std::max(aca_max, e.error);

  json r = base_report("validate", p);
  r["solver"] = solver_json(*solver);
  r["series"] = series_json(ps.report);
  r["validation"]["solution_error"] = err;
  r["validation"]["aca_blocks_checked"] = block_errors.size();
  r["validation"]["aca_max_block_error"] = aca_max;
  r["validation"]["offdiagonal_mass"] = offdiagonal_mass(solver->hmatrix(), solver->scaling());
  r["validation"]["hmatrix_relative_error"] =
      (solver->hmatrix().materialize_dense() - z).norm() / z.norm();
  write_report(r, cfg.output_dir, "validate");
  std::cout << "|SOL_dir - SOL_ps| / |SOL_dir| = " << err << '\n';
  return ps.report.status == SeriesStatus::converged ? kOk : kDiverged;
}

int cmd_rcs(const RunConfig& cfg) {
  auto p = make_problem(cfg);
  auto solver = make_solver(p);
  const auto angles = angle_range(cfg.theta_start, cfg.theta_stop, cfg.theta_step);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  json r = base_report("rcs", p);
  const auto t0 = Clock::now();
  RcsCurve curve;
  std::vector<double> worst_ratio;
  if (cfg.sweep_mode == "bistatic") {
    const auto result = solver->solve(incident_rhs(p));
    r["series"] = series_json(result.report);
    if (result.report.status == SeriesStatus::diverging) {
      throw Diverged("rcs: series diverging for the incident wave (max ratio " +
                     std::to_string(result.report.max_ratio()) + ")");
    }
    curve = bistatic_rcs(result.x, *p.basis, p.medium, angles, cfg.phi,
                         PlaneWave{cfg.incidence_theta, cfg.incidence_phi, cfg.polarization});
  } else {
    double max_ratio = 0.0;
    curve = monostatic_rcs(
        *p.op,
        [&](const VectorXc& rhs, double theta) {
          auto res = solver->solve(rhs);
          max_ratio = std::max(max_ratio, res.report.max_ratio());
          if (res.report.status == SeriesStatus::diverging) {
            throw Diverged("rcs: series diverging at incidence theta = " + std::to_string(theta) +
                           " deg (max ratio " + std::to_string(res.report.max_ratio()) + ")");
          }
          return res.x;
        },
        angles, cfg.phi, cfg.polarization);
    r["series"]["max_ratio"] = max_ratio;
  }
  curve.geometry = cfg.geometry;
  write_rcs_csv(curve, (dir / "rcs.csv").string());
  r["rcs"]["mode"] = cfg.sweep_mode;
  r["rcs"]["samples"] = curve.angles_deg.size();
  r["rcs"]["rhs_solved"] = solver->solves();
  r["rcs"]["setups"] = SeriesSolver::setup_count();
  r["rcs"]["sweep_s"] = seconds(t0);
  if (cfg.geometry == "sphere") {
    const bool axial = cfg.incidence_theta == 0.0 && cfg.incidence_phi == 0.0;
    if (cfg.sweep_mode == "monostatic" || axial) {
      auto mie = mie_rcs_pec_sphere(MieConfig{cfg.radius, p.medium.wavenumber}, angles,
                                    cfg.sweep_mode, cfg.polarization);
      write_rcs_csv(mie, (dir / "mie.csv").string());
      const auto cmp = compare_curves(mie, curve);
      r["rcs"]["mie_mean_abs_db"] = cmp.mean_abs_db;
      r["rcs"]["mie_max_abs_db"] = cmp.max_abs_db;
    } else {
      r["rcs"]["mie_overlay"] = "skipped: bistatic overlay needs incidence from theta = 0";
    }
  }
  r["solver"] = solver_json(*solver);
  write_report(r, dir, "rcs_report");
  std::cout << "wrote " << (dir / "rcs.csv").string() << " (" << curve.angles_deg.size()
            << " samples)\n";
  return kOk;
}

int cmd_sweep(const RunConfig& cfg) {
  const double edge = wavelength_of(cfg) / cfg.density;
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  std::ofstream csv(dir / "sweep.csv");
  csv << "N,leaves,setup_s,scaling_s,solve_s,memory_bytes,scaling_bytes,fill_blocks,max_ratio\n";
  std::vector<double> ns, setup, scaling, solve, memory;
  json r;
  r["command"] = "sweep";
  r["config"] = config_json(cfg);
  r["runs"] = json::array();
  for (int target : cfg.sweep_sizes) {
    const auto mesh = sphere_with_unknowns(target, edge);
    const auto basis = build_rwg(mesh);
    const auto medium = Medium::free_space(cfg.frequency);
    MomOperator op(basis, medium, operator_config(cfg));
    SeriesSolver solver(op, solver_options(cfg));
    const VectorXc b = op.plane_wave_rhs(0.0, 0.0, cfg.polarization);
    const int repeats = 3;
    const auto t0 = Clock::now();
    SeriesResult res;
    for (int k = 0; k < repeats; ++k) res = solver.solve(b);
    const double solve_s = seconds(t0) / repeats;
    const auto& t = solver.timings();
    const double mem = solver.memory_entries() * double(sizeof(cplx));
    const double scal_mem = solver.diagnostics().memory_entries * double(sizeof(cplx));
    csv << op.size() << ',' << solver.hmatrix().tree().num_leaves() << ',' << t.total() << ','
        << t.scaling << ',' << solve_s << ',' << mem << ',' << scal_mem << ','
        << solver.diagnostics().fill_blocks << ',' << res.report.max_ratio() << '\n';
    csv.flush();
    ns.push_back(op.size());
    setup.push_back(t.total());
    scaling.push_back(t.scaling);
    solve.push_back(solve_s);
    memory.push_back(scal_mem);
    json run = solver_json(solver);
    run["timing"]["solve_per_rhs_s"] = solve_s;
    run["series"] = series_json(res.report);
    r["runs"].push_back(run);
    std::cout << "N = " << op.size() << ": setup " << t.total() << " s (scaling " << t.scaling
              << " s), solve " << solve_s << " s" << std::endl;
  }
  if (ns.size() >= 2) {
    r["slopes"]["setup_total"] = loglog_slope(ns, setup);
    r["slopes"]["scaling_setup"] = loglog_slope(ns, scaling);
    r["slopes"]["solve_per_rhs"] = loglog_slope(ns, solve);
    r["slopes"]["scaling_memory"] = loglog_slope(ns, memory);
  }
  write_report(r, dir, "sweep_report");
  return kOk;
}

int cmd_mesh_info(const RunConfig& cfg) {
  TriangleMesh mesh;
  try {
    mesh = build_mesh(cfg);
  } catch (const MeshError& e) {
    throw ConfigError(std::string("mesh: ") + e.what());
  }
  json r;
  r["command"] = "mesh-info";
  r["config"] = config_json(cfg);
  r["mesh"] = mesh_json(mesh, wavelength_of(cfg));
  r["unknowns"] = mesh.num_interior_edges();
  std::ostringstream os;
  flatten(r["mesh"], "", os);
  std::cout << os.str() << "unknowns = " << mesh.num_interior_edges() << '\n';
  write_report(r, cfg.output_dir, "mesh_info");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power-series H-matrix method-of-moments solver"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "key = value configuration file");
    sub->add_option("--set", overrides, "override a configuration key (key=value)");
    sub->add_option("-o,--output-dir", output_dir, "directory for reports and CSV files");
  };
  auto* solve = app.add_subcommand("solve", "solve one plane-wave excitation");
  auto* validate = app.add_subcommand("validate", "compare against the dense LU solution");
  auto* rcs = app.add_subcommand("rcs", "bistatic or monostatic RCS sweep");
  auto* sweep = app.add_subcommand("sweep", "setup / solve scaling sweep over sphere sizes");
  auto* info = app.add_subcommand("mesh-info", "mesh statistics");
  for (auto* sub : {solve, validate, rcs, sweep, info}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
      cfg.set(o.substr(0, eq), o.substr(eq + 1));
    }
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    cfg.validate();

    if (*solve) return cmd_solve(cfg);
    if (*validate) return cmd_validate(cfg);
    if (*rcs) return cmd_rcs(cfg);
    if (*sweep) return cmd_sweep(cfg);
    if (*info) return cmd_mesh_info(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const Diverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const SingularMatrixError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kNumericalFailure;
  }
  return kOk;
}
