#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "geohj/io.hpp"

using namespace geohj;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("geohj_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct CliRun {
  int code;
  std::string out;
};

CliRun run(const std::string& args) {
  fs::path log = scratch() / "stdout.txt";
  std::string cmd = std::string("\"") + GEOHJ_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

fs::path write(const std::string& name, const json& j) {
  fs::path p = scratch() / name;
  std::ofstream(p) << j.dump(1);
  return p;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json cost_manifest() {
  return json::parse(R"({
    "name": "ct", "seed": 3, "output_dir": "ct_out",
    "chart": {"kind": "flat_torus", "periods": [1.0]},
    "lagrangian": {"kind": "p_norm", "p": 2.0},
    "cost_table": {"x": [[0.0], [0.2]], "y": [[0.3], [0.45]],
                   "schedule": {"first": 1.0, "last": 0.125, "ratio": 0.5},
                   "action": {"nodes": 64, "refine": false}}
  })");
}

}  // namespace

TEST(Descriptors, Charts) {
  EXPECT_EQ(io::chart_from_json(json::parse(R"({"kind":"flat_torus","periods":[1.0]})")), Chart::flat_torus({1.0}));
  EXPECT_EQ(io::chart_from_json(json::parse(R"({"kind":"euclidean","dim":2})")), Chart::euclidean(2));
  EXPECT_EQ(io::chart_from_json(json::parse(R"({"kind":"sphere2","radius":2.0})")), Chart::sphere2(2.0));
  EXPECT_THROW(io::chart_from_json(json::parse(R"({"kind":"hyperbolic"})")), ConfigError);
  EXPECT_THROW(io::chart_from_json(json::parse(R"({"kind":"flat_torus","periods":[-1.0]})")), ConfigError);
  EXPECT_THROW(io::chart_from_json(json::parse(R"({"kind":"euclidean","dim":"two"})")), ConfigError);
  EXPECT_THROW(io::chart_from_json(json::parse(R"([1,2])")), ConfigError);
}

TEST(Descriptors, LagrangiansMeasuresAndSchedules) {
  auto t = Chart::flat_torus({1.0});
  auto L = io::lagrangian_from_json(json::parse(R"({"kind":"perturbed_p_norm","p":3,"amplitude":0.2})"), t);
  EXPECT_EQ(L.kind(), LagrangianKind::PerturbedPNorm);
  EXPECT_EQ(io::lagrangian_to_json(L)["amplitude"], 0.2);
  EXPECT_THROW(io::lagrangian_from_json(json::parse(R"({"kind":"p_norm","p":1.0})"), t), ConfigError);
  EXPECT_THROW(io::lagrangian_from_json(json::parse(R"({"kind":"perturbed_p_norm","p":2,"amplitude":1.5})"), t), ConfigError);

  auto mu = io::measure_from_json(json::parse(R"({"atoms":[[0.0],[0.5]],"weights":[0.5,0.5]})"), t);
  EXPECT_EQ(mu.size(), 2u);
  EXPECT_THROW(io::measure_from_json(json::parse(R"({"atoms":[[0.0],[0.5]],"weights":[0.7,0.5]})"), t), ConfigError);
  EXPECT_THROW(io::measure_from_json(json::parse(R"({"atoms":[]})"), t), ConfigError);
  EXPECT_THROW(io::measure_from_json(json::parse(R"({"atoms":[[0.0, 1.0]]})"), t), ConfigError);

  EXPECT_EQ(io::schedule_from_json("default"), default_schedule());
  EXPECT_EQ(io::schedule_from_json(json::parse("[1.0, 0.5, 0.1]")).size(), 3u);
  EXPECT_EQ(io::schedule_from_json(json::parse(R"({"first":1,"last":0.25,"ratio":0.5})")).size(), 3u);
  EXPECT_THROW(io::schedule_from_json(json::parse("[1.0, 0.5]")), ConfigError);
  EXPECT_THROW(io::schedule_from_json(json::parse("[1.0, 2.0, 0.5]")), ConfigError);
  EXPECT_THROW(io::schedule_from_json("fast"), ConfigError);
}

TEST(Descriptors, PotentialsAndFunctionals) {
  auto t = Chart::flat_torus({1.0});
  auto f = io::potential_from_json(json::parse(R"({"constant":1,"modes":[{"k":[1],"cos":0.5}]})"), t);
  EXPECT_NEAR(f.value(t.point({0.0})), 1.5, 1e-15);
  EXPECT_NEAR(f.value(t.point({0.5})), 0.5, 1e-15);
  EXPECT_THROW(io::potential_from_json(json::parse(R"({"amplitude":1})"), t), ConfigError);
  auto L = Lagrangian::p_norm(t, 2.0);
  auto U = io::functional_from_json(
      json::parse(R"([{"kind":"linear","potential":{"constant":2}},{"kind":"moment","center":[0.0],"coefficient":3}])"), L);
  DiscreteMeasure mu({t.point({0.25})}, {1.0});
  EXPECT_NEAR(U(t, mu), 2.0 + 3.0 * 0.0625, 1e-15);
  EXPECT_THROW(io::functional_from_json(json::parse(R"({"kind":"entropy"})"), L), ConfigError);
}

TEST(Descriptors, ManifestRequiresSeed) {
  json j = cost_manifest();
  EXPECT_NO_THROW(io::manifest_from_json(j));
  j.erase("seed");
  EXPECT_THROW(io::manifest_from_json(j), ConfigError);
  j = cost_manifest();
  j["seed"] = -1;
  EXPECT_THROW(io::manifest_from_json(j), ConfigError);
  EXPECT_THROW(io::load_manifest(scratch() / "does_not_exist.json"), ConfigError);
}

TEST(Cli, VerifyExitCodes) {
  EXPECT_EQ(run("verify manifold").code, 0);
  CliRun r = run("verify lagrangian --mutate legendre_sign");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
  fs::path bad = scratch() / "bad_tol.json";
  std::ofstream(bad) << "{\"algebraic\": -1";
  EXPECT_EQ(run("verify manifold --tolerances \"" + bad.string() + "\"").code, 2);
  std::ofstream(bad) << "{\"algebraic\": -1}";
  EXPECT_EQ(run("verify manifold --tolerances \"" + bad.string() + "\"").code, 2);
  std::ofstream(bad) << "{\"no_such_key\": 1e-9}";
  EXPECT_EQ(run("verify manifold --tolerances \"" + bad.string() + "\"").code, 2);
  EXPECT_EQ(run("verify nonsense").code, 2);
  EXPECT_EQ(run("verify manifold --mutate nonsense").code, 2);
  EXPECT_EQ(run("").code, 2);
}

TEST(Cli, CostTableMatchesClosedFormAndIsDeterministic) {
  fs::path m = write("ct.json", cost_manifest());
  ASSERT_EQ(run("cost-table \"" + m.string() + "\"").code, 0);
  fs::path csv = scratch() / "ct_out" / "ct.cost_table.csv";
  std::string first = slurp(csv);
  EXPECT_EQ(first.rfind("# units:", 0), 0u);
  auto rows = read_csv(csv);
  ASSERT_EQ(rows.size(), 1u + 4u * 4u);
  EXPECT_EQ(rows[0][2], "eps");
  for (std::size_t k = 1; k < rows.size(); ++k) {
    EXPECT_LE(std::stod(rows[k][7]), 1e-3);
    EXPECT_EQ(rows[k][4], "1");
    if ((k - 1) % 4 != 0) {
      EXPECT_LT(std::stod(rows[k][2]), std::stod(rows[k - 1][2]));
      EXPECT_GT(std::stod(rows[k][3]), std::stod(rows[k - 1][3]));
    }
  }
  ASSERT_EQ(run("cost-table \"" + m.string() + "\"").code, 0);
  EXPECT_EQ(slurp(csv), first);
}

TEST(Cli, ConfigurationErrors) {
  json j = cost_manifest();
  j["cost_table"]["x"] = json::array();
  EXPECT_EQ(run("cost-table \"" + write("empty.json", j).string() + "\"").code, 2);
  EXPECT_EQ(run("cost-table \"" + (scratch() / "missing.json").string() + "\"").code, 2);
  std::ofstream(scratch() / "corrupt.json") << "{ not json";
  EXPECT_EQ(run("cost-table \"" + (scratch() / "corrupt.json").string() + "\"").code, 2);

  json d = io::load_manifest(fs::path(GEOHJ_MANIFEST_DIR) / "doubling_manifold_action.json").body;
  d["doubling"]["F0"] = {{"file", "no_such_grid.csv"}};
  EXPECT_EQ(run("doubling \"" + write("missing_input.json", d).string() + "\"").code, 2);
  d["doubling"]["F0"] = {{"potential", {{"constant", 0.0}}}};
  d["doubling"]["resolution"] = json::array({0});
  EXPECT_EQ(run("doubling \"" + write("empty_grid.json", d).string() + "\"").code, 2);
}

TEST(Cli, GridInputFromFile) {
  json h = io::load_manifest(fs::path(GEOHJ_MANIFEST_DIR) / "hj_solve_circle.json").body;
  h["output_dir"] = (scratch() / "hj_out").string();
  h["hj"]["resolution"] = json::array({32});
  ASSERT_EQ(run("hj-solve \"" + write("hj.json", h).string() + "\"").code, 0);
  fs::path u = scratch() / "hj_out" / "hj_solve_circle.u.csv";
  ASSERT_TRUE(fs::exists(u));
  // strip the units line so the grid reader sees a header row first
  std::string text = slurp(u);
  std::ofstream(scratch() / "u_grid.csv") << text.substr(text.find('\n') + 1);
  h["hj"]["F"] = {{"file", "u_grid.csv"}};
  EXPECT_EQ(run("hj-solve \"" + write("hj_file.json", h).string() + "\"").code, 0);
  EXPECT_EQ(run("hj-solve \"" + write("hj_file.json", h).string() + "\" --resolution 16").code, 2);
}

TEST(Cli, ShippedDoublingManifests) {
  fs::path out = scratch() / "doubling";
  CliRun r = run("doubling \"" + (fs::path(GEOHJ_MANIFEST_DIR) / "doubling_manifold_action.json").string() +
              "\" --output-dir \"" + out.string() + "\"");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find(" <= max(F0 - F1)"), std::string::npos);
  json trace = json::parse(slurp(out / "doubling_manifold_action.trace.json"));
  EXPECT_LE(trace["max_u_diff"].get<double>(), trace["max_F_diff"].get<double>());
  EXPECT_TRUE(trace["verification"]["ok"].get<bool>());

  r = run("doubling \"" + (fs::path(GEOHJ_MANIFEST_DIR) / "doubling_wasserstein.json").string() + "\" --output-dir \"" +
          out.string() + "\"");
  ASSERT_EQ(r.code, 0) << r.out;
  auto rows = read_csv(out / "doubling_wasserstein.trace.csv");
  ASSERT_GT(rows.size(), 3u);
  std::size_t col = 0;
  while (col < rows[0].size() && rows[0][col] != "M_monotone") ++col;
  ASSERT_LT(col, rows[0].size());
  for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_EQ(rows[k][col], "true");
}

TEST(Cli, TransportAndDuality) {
  fs::path out = scratch() / "misc";
  CliRun r = run("transport \"" + (fs::path(GEOHJ_MANIFEST_DIR) / "transport_perturbed.json").string() + "\" --output-dir \"" +
              out.string() + "\"");
  ASSERT_EQ(r.code, 0) << r.out;
  auto rows = read_csv(out / "transport_perturbed.coupling.csv");
  ASSERT_EQ(rows.size(), 1u + 3u * 2u);
  double mass = 0.0;
  for (std::size_t k = 1; k < rows.size(); ++k) mass += std::stod(rows[k][2]);
  EXPECT_NEAR(mass, 1.0, 1e-12);
  r = run("duality \"" + (fs::path(GEOHJ_MANIFEST_DIR) / "duality_sphere.json").string() + "\" --output-dir \"" +
          out.string() + "\"");
  EXPECT_EQ(r.code, 0) << r.out;
}
