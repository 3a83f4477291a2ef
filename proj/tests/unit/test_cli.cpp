#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "psmom/pipeline.hpp"

using namespace psmom;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("psmom_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Run cli(const std::string& args, const fs::path& dir) {
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(PSMOM_CLI) + " " + args + " -o " + dir.string() + " > " +
                          (dir / "stdout.txt").string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  std::ifstream is(err);
  std::stringstream ss;
  ss << is.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string read(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int data_rows(const fs::path& csv) {
  std::ifstream is(csv);
  std::string line;
  int rows = -1;  // header
  while (std::getline(is, line)) ++rows;
  return rows;
}

nlohmann::json json_of(const fs::path& p) { return nlohmann::json::parse(read(p)); }

}  // namespace

TEST_CASE("configuration parsing") {
  const auto cfg = parse_config(
      "# comment\ngeometry = cube\nside=2.5  # trailing\n\nsweep_sizes = 10, 20,40\nadaptive = true\n"
      "polarization = hh\n");
  CHECK(cfg.geometry == "cube");
  CHECK(cfg.side == 2.5);
  CHECK(cfg.sweep_sizes == std::vector<int>{10, 20, 40});
  CHECK(cfg.adaptive);
  CHECK(cfg.polarization == Polarization::hh);
  CHECK_THROWS_AS(parse_config("nonsense = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("radius = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("radius 3\n"), ConfigError);

  RunConfig bad;
  bad.geometry = "plate";
  bad.formulation = Formulation::mfie;
  try {
    bad.validate();
    FAIL("MFIE on a plate must be rejected");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("closed surface") != std::string::npos);
  }
  RunConfig t;
  t.threshold = 1.5;
  CHECK_THROWS_AS(t.validate(), ConfigError);

  // entries round trip through the parser
  RunConfig a;
  a.radius = 0.75;
  a.formulation = Formulation::efie;
  std::string text;
  for (const auto& [k, v] : a.entries()) text += k + " = " + v + "\n";
  const auto b = parse_config(text);
  CHECK(b.entries() == a.entries());
}

TEST_CASE("log-log slope") {
  CHECK(loglog_slope({1000, 4000}, {2.0, 8.0}) == doctest::Approx(1.0));
  CHECK(loglog_slope({1000, 4000}, {2.0, 32.0}) == doctest::Approx(2.0));
  CHECK(loglog_slope({1, 2, 4, 8}, {3, 3, 3, 3}) == doctest::Approx(0.0));
}

TEST_CASE("mesh building from configuration") {
  RunConfig cfg;
  cfg.geometry = "plate";
  cfg.side = 1.0;
  cfg.density = 1.0;
  CHECK(build_rwg(build_mesh(cfg)).size() == 1);
  cfg.geometry = "cube";
  CHECK(build_rwg(build_mesh(cfg)).size() == 18);
  cfg.geometry = "file";
  cfg.mesh_path = "/nonexistent.tri";
  CHECK_THROWS_AS(build_mesh(cfg), MeshError);
  const auto s = sphere_with_unknowns(2000, 0.1);
  const int n = build_rwg(s).size();
  CHECK(n >= 1500);
  CHECK(n <= 2500);
  CHECK(s.mean_edge_length() == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("cli: trivial plate solve, reports and exit codes") {
  const auto dir = scratch("plate");
  const auto r = cli("solve --set geometry=plate --set side=1 --set density=1", dir);
  REQUIRE(r.code == 0);
  CHECK(data_rows(dir / "currents.csv") == 1);
  const auto rep = json_of(dir / "report.json");
  CHECK(rep["solver"]["N"] == 1);
  for (const char* key : {"tree_depth", "near_blocks", "far_blocks", "aca_rank_min", "aca_rank_max",
                          "aca_rank_mean", "fill_blocks", "timing", "memory"}) {
    CHECK(rep["solver"].contains(key));
  }
  CHECK(rep["series"].contains("ratios"));
  CHECK(read(dir / "report.txt").find("solver.N = 1") != std::string::npos);

  const auto bad = cli("solve --set geometry=plate --set formulation=mfie", scratch("mfie"));
  CHECK(bad.code == 2);
  CHECK(bad.err.find("closed surface") != std::string::npos);
  CHECK(cli("solve --set unknown_key=3", scratch("unknown")).code == 2);
  CHECK(cli("frobnicate", scratch("sub")).code == 2);

  // configuration file plus override
  const auto cdir = scratch("cfgfile");
  std::ofstream(cdir / "run.cfg") << "geometry = cube\nside = 1\ndensity = 1\nformulation = efie\n";
  const auto c = cli("mesh-info " + (cdir / "run.cfg").string() + " --set side=2", cdir);
  REQUIRE(c.code == 0);
  const auto info = json_of(cdir / "mesh_info.json");
  CHECK(info["unknowns"] == 18 * 4);
  CHECK(info["mesh"]["surface"] == "closed");
}

TEST_CASE("cli: validate on a tiny system and the dense cap") {
  const auto dir = scratch("validate");
  REQUIRE(cli("validate --set geometry=plate --set side=1 --set density=2", dir).code == 0);
  const auto rep = json_of(dir / "validate.json");
  CHECK(rep["validation"]["solution_error"].get<double>() < 1e-12);
  CHECK(rep["validation"].contains("aca_max_block_error"));
  CHECK(rep["validation"]["offdiagonal_mass"].get<double>() <= 1e-10);

  const auto capped = cli("validate --set radius=0.3 --set dense_cap=10", scratch("cap"));
  CHECK(capped.code == 2);
  CHECK(capped.err.find("dense_cap") != std::string::npos);
}

TEST_CASE("cli: bistatic sphere RCS with Mie overlay, deterministic output") {
  const auto a = scratch("rcs_a");
  const auto b = scratch("rcs_b");
  const std::string args = "rcs --set radius=0.2 --set theta_step=1";
  REQUIRE(cli(args, a).code == 0);
  REQUIRE(cli(args, b).code == 0);
  CHECK(data_rows(a / "rcs.csv") == 181);
  CHECK(data_rows(a / "mie.csv") == 181);
  CHECK(read(a / "rcs.csv") == read(b / "rcs.csv"));
  const auto rep = json_of(a / "rcs_report.json");
  CHECK(rep["rcs"]["mie_mean_abs_db"].get<double>() < 1.5);
}

TEST_CASE("cli: monostatic plate sweep solves every angle with one setup") {
  const auto dir = scratch("mono");
  REQUIRE(cli("rcs --set geometry=plate --set side=0.6 --set sweep_mode=monostatic "
              "--set theta_start=0 --set theta_stop=180 --set theta_step=1",
              dir)
              .code == 0);
  CHECK(data_rows(dir / "rcs.csv") == 181);
  const auto rep = json_of(dir / "rcs_report.json");
  CHECK(rep["rcs"]["rhs_solved"] == 181);
  CHECK(rep["rcs"]["setups"] == 1);
}

TEST_CASE("cli: diverging series exits with 3") {
  const auto dir = scratch("diverge");
  const auto r = cli("solve --set radius=0.5 --set leaf_factor=0.25 --set threshold=1e-6", dir);
  CHECK(r.code == 3);
  CHECK(json_of(dir / "report.json")["series"]["status"] == "diverging");
}

TEST_CASE("cli: H-matrix dump and reload give identical currents") {
  const auto a = scratch("dump");
  const auto b = scratch("load");
  const auto h = (a / "h.bin").string();
  const std::string base = "solve --set radius=0.3 --set leaf_factor=0.25 ";
  REQUIRE(cli(base + "--set hmatrix_dump=" + h, a).code == 0);
  REQUIRE(cli(base + "--set hmatrix_load=" + h, b).code == 0);
  CHECK(read(a / "currents.csv") == read(b / "currents.csv"));
  CHECK(cli("solve --set radius=0.4 --set hmatrix_load=" + h, scratch("mismatch")).code == 2);
}

TEST_CASE("cli: scaling sweep reports per-size rows and slopes") {
  const auto dir = scratch("sweep");
  REQUIRE(cli("sweep --set sweep_sizes=120,480", dir).code == 0);
  CHECK(data_rows(dir / "sweep.csv") == 2);
  const auto rep = json_of(dir / "sweep_report.json");
  CHECK(rep["runs"].size() == 2);
  CHECK(rep["slopes"].contains("scaling_setup"));
  CHECK(rep["slopes"].contains("solve_per_rhs"));
}
