// geohj: batch experiment runner and verification front end.
//
// Exit codes: 0 success, 1 a check or verification failed, 2 configuration
// error (malformed manifest, missing file, bad tolerances).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "geohj/geohj.hpp"

namespace fs = std::filesystem;
using geohj::io::json;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kConfig = 2;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Csv {
 public:
  Csv(const fs::path& path, const std::string& units, const std::vector<std::string>& header) : path_(path) {
    fs::create_directories(path.parent_path());
    out_.open(path);
    if (!out_) throw geohj::ConfigError("cannot write '" + path.string() + "'");
    out_ << "# units: " << units << "\n";
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ofstream out_;
};

void coords(std::vector<std::string>& row, const geohj::Point& x) {
  for (int i = 0; i < x.coords.size(); ++i) row.push_back(fmt(x.coords[i]));
}

std::vector<std::string> coord_headers(const char* prefix, int n) {
  std::vector<std::string> h;
  for (int i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
  return h;
}

geohj::ActionOptions action_options(const json& section) {
  geohj::ActionOptions o;
  o.throw_on_failure = false;
  if (auto it = section.find("action"); it != section.end()) {
    if (!it->is_object()) throw geohj::ConfigError("action: expected an object");
    for (auto kv = it->begin(); kv != it->end(); ++kv) {
      const std::string& k = kv.key();
      if (k == "nodes") o.nodes = geohj::io::detail::integer(*kv, "action.nodes");
      else if (k == "refine" && kv->is_boolean()) o.refine = kv->get<bool>();
      else if (k == "max_nodes") o.max_nodes = geohj::io::detail::integer(*kv, "action.max_nodes");
      else throw geohj::ConfigError("action: bad key '" + k + "'");
    }
    if (o.nodes < 2 || o.max_nodes < o.nodes) throw geohj::ConfigError("action: bad node counts");
  }
  return o;
}

fs::path output_path(const geohj::io::Manifest& m, const std::string& override_dir, const std::string& suffix) {
  fs::path dir = override_dir.empty() ? m.output_dir : fs::path(override_dir);
  return dir / (m.name + "." + suffix);
}

// ---------------------------------------------------------------------------

int cmd_verify(const std::string& suite, const std::vector<std::string>& mutations, const std::string& tol_file,
               std::uint64_t seed, int jobs) {
  geohj::VerifyContext ctx;
  ctx.seed = seed;
  ctx.jobs = jobs;
  if (!tol_file.empty()) ctx.tol = geohj::io::load_tolerances(tol_file);
  unsigned mask = 0;
  for (const auto& m : mutations) {
    try {
      mask |= static_cast<unsigned>(geohj::fixture::parse_mutation(m));
    } catch (const std::invalid_argument& e) {
      throw geohj::ConfigError(e.what());
    }
  }
  geohj::fixture::ScopedMutation guard(static_cast<geohj::fixture::Mutation>(mask));
  auto results = geohj::run_suite(suite, ctx);
  geohj::print_table(std::cout, results);
  bool ok = geohj::all_passed(results);
  std::cout << (ok ? "all properties pass" : "property failures detected") << "\n";
  return ok ? kOk : kFailed;
}

int cmd_cost_table(const geohj::io::Manifest& m, const std::string& out_dir) {
  const json& s = m.section("cost_table");
  const geohj::Lagrangian& L = m.L();
  const geohj::Chart& c = m.chart;
  auto read_points = [&](const char* key) {
    std::vector<geohj::Point> pts;
    auto it = s.find(key);
    if (it == s.end()) return pts;
    if (!it->is_array()) throw geohj::ConfigError(std::string("cost_table.") + key + ": expected an array");
    for (const auto& p : *it) pts.push_back(geohj::io::point_from_json(p, c, std::string("cost_table.") + key));
    return pts;
  };
  std::vector<geohj::Point> xs = read_points("x"), ys = read_points("y");
  if (ys.empty()) ys = xs;
  if (xs.empty()) throw geohj::ConfigError("cost_table: empty grid");
  std::vector<double> schedule =
      s.contains("schedule") ? geohj::io::schedule_from_json(s["schedule"]) : geohj::default_schedule();
  geohj::ActionOptions o = action_options(s);

  struct Entry {
    std::size_t i, j;
    double eps;
    geohj::ActionResult r;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j)
      for (double eps : schedule) entries.push_back({i, j, eps, {}});
  geohj::parallel_for(entries.size(), [&](std::size_t k) {
    entries[k].r = geohj::minimal_action(L, entries[k].eps, xs[entries[k].i], ys[entries[k].j], o);
  });

  auto header = coord_headers("x", c.coord_dim());
  for (auto& h : coord_headers("y", c.coord_dim())) header.push_back(h);
  for (const char* h : {"eps", "D", "converged", "energy_spread", "closed_form", "rel_error"}) header.push_back(h);
  Csv csv(output_path(m, out_dir, "cost_table.csv"),
          "eps time horizon; D minimal action D(eps,x,y); energy_spread relative dual-energy spread; closed_form "
          "d^p/(p eps^(p-1)) for p_norm",
          header);
  int failures = 0;
  double worst = 0.0;
  for (const auto& e : entries) {
    std::vector<std::string> row;
    coords(row, xs[e.i]);
    coords(row, ys[e.j]);
    double closed = std::numeric_limits<double>::quiet_NaN(), rel = closed;
    if (L.kind() == geohj::LagrangianKind::PNorm) {
      closed = std::pow(c.distance(xs[e.i], ys[e.j]), L.p()) / (L.p() * std::pow(e.eps, L.p() - 1.0));
      rel = closed > 0.0 ? std::abs(e.r.value - closed) / closed : std::abs(e.r.value);
      worst = std::max(worst, rel);
    }
    if (!e.r.converged) ++failures;
    for (const auto& v : {fmt(e.eps), fmt(e.r.value), std::string(e.r.converged ? "1" : "0"), fmt(e.r.energy_spread()),
                          fmt(closed), fmt(rel)})
      row.push_back(v);
    csv.row(row);
  }
  std::cout << "entries " << entries.size() << ", unconverged " << failures;
  if (L.kind() == geohj::LagrangianKind::PNorm) std::cout << ", max rel error vs closed form " << fmt(worst);
  std::cout << "\nwrote " << csv.path().string() << "\n";
  return failures == static_cast<int>(entries.size()) ? kFailed : kOk;
}

int cmd_transport(const geohj::io::Manifest& m, const std::string& out_dir) {
  const json& s = m.section("transport");
  const geohj::Lagrangian& L = m.L();
  double eps = geohj::io::detail::number(geohj::io::detail::field(s, "eps", "transport"), "transport.eps");
  if (!(eps > 0.0)) throw geohj::ConfigError("transport: eps must be positive");
  auto mu = geohj::io::measure_from_json(geohj::io::detail::field(s, "mu", "transport"), m.chart, "transport.mu");
  auto nu = geohj::io::measure_from_json(geohj::io::detail::field(s, "nu", "transport"), m.chart, "transport.nu");
  geohj::TransportOptions o;
  o.action = action_options(s);
  if (s.value("entropic", false)) o.entropic = true;
  geohj::TransportResult r = geohj::lagrangian_ot(L, eps, mu, nu, o);
  Csv csv(output_path(m, out_dir, "coupling.csv"), "mass: coupling mass; cost: minimal action D(eps,x_i,y_j)",
          {"i", "j", "mass", "cost", "converged"});
  for (int i = 0; i < r.coupling.plan.rows(); ++i)
    for (int j = 0; j < r.coupling.plan.cols(); ++j)
      csv.row({std::to_string(i), std::to_string(j), fmt(r.coupling.plan(i, j)), fmt(r.table.values(i, j)),
               std::to_string(r.table.status(i, j))});
  std::cout << "D_M(eps=" << fmt(eps) << ") = " << fmt(r.value) << ", marginal error " << fmt(r.coupling.marginal_error())
            << (r.table.from_cache ? " (cached costs)" : "") << "\nwrote " << csv.path().string() << "\n";
  return r.table.status.minCoeff() > 0 ? kOk : kFailed;
}

int cmd_duality(const geohj::io::Manifest& m, const std::string& out_dir) {
  const json& s = m.section("duality");
  const geohj::Lagrangian& L = m.L();
  auto g = geohj::io::cotangent_measure_from_json(geohj::io::detail::field(s, "gamma", "duality"), m.chart, "duality.gamma");
  int trials = s.contains("trials") ? geohj::io::detail::integer(s["trials"], "duality.trials") : 10000;
  if (trials < 0) throw geohj::ConfigError("duality: trials must be nonnegative");
  std::mt19937_64 rng(m.seed);
  geohj::FenchelReport r = geohj::check_fenchel_duality(L, g, trials, rng);
  Csv csv(output_path(m, out_dir, "duality.csv"),
          "hamiltonian relaxed H(gamma); graph_value pairing minus relaxed L on the graph plan; max_excess over "
          "random admissible plans",
          {"hamiltonian", "graph_value", "best_gap", "max_excess", "trials", "ok"});
  csv.row({fmt(r.hamiltonian), fmt(r.graph_value), fmt(r.best_gap), fmt(r.max_excess), std::to_string(r.trials),
           r.ok() ? "1" : "0"});
  std::cout << "H(gamma) = " << fmt(r.hamiltonian) << ", graph gap " << fmt(r.best_gap) << ", worst random excess "
            << fmt(r.max_excess) << "\nwrote " << csv.path().string() << "\n";
  return r.ok() ? kOk : kFailed;
}

struct HjFlags {
  std::vector<int> resolution;
  double tolerance = 0.0;
  double vmax_multiplier = 0.0;
};

int cmd_hj_solve(const geohj::io::Manifest& m, const std::string& out_dir, const HjFlags& flags) {
  const json& s = m.section("hj");
  const geohj::Lagrangian& L = m.L();
  if (m.chart.kind() != geohj::ChartKind::FlatTorus) throw geohj::ConfigError("hj: the grid solver needs a flat torus");
  std::vector<int> res = flags.resolution.empty()
                             ? geohj::io::resolution_from_json(geohj::io::detail::field(s, "resolution", "hj"), m.chart)
                             : geohj::io::resolution_from_json(json(flags.resolution), m.chart);
  geohj::GridFunction F = geohj::io::grid_from_json(geohj::io::detail::field(s, "F", "hj"), m.chart, res, m.base_dir, "hj.F");
  geohj::SolveOptions o;
  o.tolerance = geohj::io::detail::optional_number(s, "tolerance", o.tolerance, "hj");
  o.vmax_multiplier = geohj::io::detail::optional_number(s, "vmax_multiplier", o.vmax_multiplier, "hj");
  if (flags.tolerance > 0.0) o.tolerance = flags.tolerance;
  if (flags.vmax_multiplier > 0.0) o.vmax_multiplier = flags.vmax_multiplier;
  if (!(o.tolerance > 0.0) || !(o.vmax_multiplier >= 1.0)) throw geohj::ConfigError("hj: bad tolerance or multiplier");
  o.jobs = geohj::default_jobs().load();
  geohj::SolveResult r = geohj::solve_stationary(L, F, o);

  fs::path path = output_path(m, out_dir, "u.csv");
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw geohj::ConfigError("cannot write '" + path.string() + "'");
  out << "# units: value of the discrete solution of u + H(x, du) = F\n";
  r.u.write_csv(out);
  std::cout << "iterations " << r.report.iterations << ", fixed-point bound " << fmt(r.report.error_bound) << ", vmax "
            << fmt(r.report.vmax) << ", velocity-range check " << fmt(r.report.vmax_check) << "\nwrote " << path.string()
            << "\n";
  bool ok = r.report.error_bound <= o.tolerance && (r.report.vmax_check < 0 || r.report.vmax_check <= 1e-8);
  return ok ? kOk : kFailed;
}

geohj::GridFunction solve_or_read(const json& s, const char* ukey, const json& F_desc, const geohj::Lagrangian& L,
                                  const geohj::GridFunction& F, const geohj::SolveOptions& so,
                                  const geohj::io::Manifest& m, const std::vector<int>& res) {
  if (auto it = s.find(ukey); it != s.end()) return geohj::io::grid_from_json(*it, m.chart, res, m.base_dir, std::string("doubling.") + ukey);
  (void)F_desc;
  return geohj::solve_stationary(L, F, so).u;
}

json path_json(const geohj::PenalizationPath& p) {
  using geohj::io::point_to_json;
  auto v = [](const geohj::Vec& x) { return std::vector<double>(x.data(), x.data() + x.size()); };
  return {{"row", p.row},
          {"col", p.col},
          {"weight", p.weight},
          {"value", p.value},
          {"distance", p.distance},
          {"x", point_to_json(p.start.base)},
          {"y", point_to_json(p.reversed.base)},
          {"initial_velocity", v(p.start.vec)},
          {"reversed_velocity", v(p.reversed.vec)},
          {"p0", v(p.p0.covec)},
          {"q1", v(p.q1.covec)},
          {"energy_start", p.energy_start},
          {"energy_end", p.energy_end},
          {"converged", p.converged}};
}

int cmd_doubling(const geohj::io::Manifest& m, const std::string& out_dir) {
  const json& s = m.section("doubling");
  const geohj::Lagrangian& L = m.L();
  const geohj::Chart& c = m.chart;
  geohj::Penalization P = geohj::io::penalization_from_json(geohj::io::detail::field(s, "penalization", "doubling"), c, L);
  geohj::DoublingConfig cfg;
  cfg.schedule = s.contains("schedule") ? geohj::io::schedule_from_json(s["schedule"]) : geohj::default_schedule();
  cfg.jobs = geohj::default_jobs().load();
  std::string mode = s.value("mode", std::string("manifold"));
  int samples = s.contains("verify_samples") ? geohj::io::detail::integer(s["verify_samples"], "doubling.verify_samples") : 100;
  if (samples < 1) throw geohj::ConfigError("doubling: verify_samples must be positive");

  std::optional<geohj::DoublingTrace> trace;
  if (mode == "manifold") {
    if (c.kind() != geohj::ChartKind::FlatTorus) throw geohj::ConfigError("doubling: manifold mode needs a flat torus grid");
    auto res = geohj::io::resolution_from_json(geohj::io::detail::field(s, "resolution", "doubling"), c);
    const json& f0 = geohj::io::detail::field(s, "F0", "doubling");
    const json& f1 = geohj::io::detail::field(s, "F1", "doubling");
    auto F0 = geohj::io::grid_from_json(f0, c, res, m.base_dir, "doubling.F0");
    auto F1 = geohj::io::grid_from_json(f1, c, res, m.base_dir, "doubling.F1");
    geohj::SolveOptions so = geohj::common_options(L, F0, F1);
    so.self_check = false;
    so.jobs = cfg.jobs;
    auto u0 = solve_or_read(s, "u0", f0, L, F0, so, m, res);
    auto u1 = solve_or_read(s, "u1", f1, L, F1, so, m, res);
    trace.emplace(geohj::run_manifold_doubling(P, u0, u1, F0, F1, cfg));
  } else if (mode == "wasserstein") {
    const json& fam = geohj::io::detail::field(s, "family", "doubling");
    std::vector<geohj::DiscreteMeasure> family;
    if (auto it = fam.find("measures"); it != fam.end()) {
      if (!it->is_array() || it->empty()) throw geohj::ConfigError("doubling.family.measures: expected a nonempty array");
      for (const auto& mu : *it) family.push_back(geohj::io::measure_from_json(mu, c, "doubling.family"));
    } else {
      auto get = [&](const char* k) { return geohj::io::detail::integer(geohj::io::detail::field(fam, k, "doubling.family"), std::string("doubling.family.") + k); };
      family = geohj::io::detail::wrap("doubling.family", [&] { return geohj::simplex_family(c, get("nodes"), get("max_atoms"), get("levels")); });
    }
    if (family.size() > 200) throw geohj::ConfigError("doubling.family: more than 200 members");
    auto U0 = geohj::io::functional_from_json(geohj::io::detail::field(s, "U0", "doubling"), L, "doubling.U0");
    auto U1 = geohj::io::functional_from_json(geohj::io::detail::field(s, "U1", "doubling"), L, "doubling.U1");
    trace.emplace(geohj::run_wasserstein_doubling(P, U0, U1, family, cfg));
  } else {
    throw geohj::ConfigError("doubling: unknown mode '" + mode + "'");
  }
  const geohj::DoublingTrace& t = *trace;
  geohj::DoublingVerification v = geohj::verify_doubling(t, samples, m.seed);

  Csv csv(output_path(m, out_dir, "trace.csv"),
          "eps time horizon; M max of u0(x)-u1(y)-penalization; penalization at the maximizer; distance d(x,y) or "
          "W_p(mu,nu); delta_h relative dual-energy change along the penalization paths",
          {"eps", "M", "penalization", "distance", "first", "second", "u0", "u1", "F0", "F1", "delta_h", "lyapunov_gap",
           "M_monotone", "unconverged", "evaluations"});
  bool monotone = true;
  for (std::size_t k = 0; k < t.records.size(); ++k) {
    const auto& r = t.records[k];
    if (k > 0 && r.phi - t.records[k - 1].phi > 1e-10 * (1.0 + std::abs(t.records[k - 1].phi))) monotone = false;
    double scale = r.energy_scale();
    double dh = scale > 0 ? std::abs(r.delta_h()) / scale : std::abs(r.delta_h());
    double lyap = t.mode == geohj::DoublingMode::Manifold ? r.lyapunov() : std::numeric_limits<double>::quiet_NaN();
    csv.row({fmt(r.eps), fmt(r.phi), fmt(r.penalization), fmt(r.distance), std::to_string(r.first), std::to_string(r.second),
             fmt(r.u0), fmt(r.u1), fmt(r.F0), fmt(r.F1), fmt(dh), fmt(lyap), monotone ? "true" : "false",
             std::to_string(r.unconverged), std::to_string(r.evaluations)});
  }

  json j{{"name", m.name},
         {"seed", m.seed},
         {"mode", mode},
         {"penalization", t.penalization.name()},
         {"chart", geohj::io::chart_to_json(c)},
         {"lagrangian", geohj::io::lagrangian_to_json(L)},
         {"max_u_diff", t.max_u_diff},
         {"max_F_diff", std::isnan(t.max_F_diff) ? json(nullptr) : json(t.max_F_diff)}};
  json recs = json::array();
  for (const auto& r : t.records) {
    json paths = json::array();
    for (const auto& p : r.paths) paths.push_back(path_json(p));
    json rec{{"eps", r.eps}, {"M", r.phi}, {"penalization", r.penalization}, {"distance", r.distance},
             {"first", r.first}, {"second", r.second}, {"u0", r.u0}, {"u1", r.u1}, {"paths", paths}};
    if (t.mode == geohj::DoublingMode::Wasserstein) {
      rec["mu"] = geohj::io::measure_to_json(t.family[r.first]);
      rec["nu"] = geohj::io::measure_to_json(t.family[r.second]);
    }
    recs.push_back(rec);
  }
  j["records"] = recs;
  j["verification"] = {{"membership_worst_excess", v.membership.worst_excess},
                       {"membership_asserted", v.membership_asserted},
                       {"worst_relative_delta_h", v.worst_relative_delta_h},
                       {"max_speed_mismatch", v.max_speed_mismatch},
                       {"lyapunov_violations", v.lyapunov.violations},
                       {"M_monotone", v.vanishing.monotone_M},
                       {"final_penalization", v.vanishing.final_penalization},
                       {"diagonal_ok", v.diagonal_ok},
                       {"ok", v.ok()}};
  fs::path jpath = output_path(m, out_dir, "trace.json");
  std::ofstream(jpath) << j.dump(1) << "\n";

  bool comparison = true;
  if (t.mode == geohj::DoublingMode::Manifold) {
    comparison = t.max_u_diff <= t.max_F_diff + 1e-9;
    std::cout << "summary: max(u0 - u1) = " << fmt(t.max_u_diff) << (comparison ? " <= " : " > ") << "max(F0 - F1) = "
              << fmt(t.max_F_diff) << "\n";
  } else {
    std::cout << "summary: max over the family of U0 - U1 = " << fmt(t.max_u_diff) << ", M_eps monotone "
              << (v.vanishing.monotone_M ? "true" : "false") << "\n";
  }
  std::cout << "verification: membership " << fmt(v.membership.worst_excess)
            << (v.membership_asserted ? "" : " (not asserted)") << ", delta_h " << fmt(v.worst_relative_delta_h)
            << ", lyapunov violations " << v.lyapunov.violations << ", final penalization "
            << fmt(v.vanishing.final_penalization) << " -> " << (v.ok() ? "ok" : "FAILED") << "\n";
  std::cout << "wrote " << csv.path().string() << " and " << jpath.string() << "\n";
  return v.ok() && comparison ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geohj: Hamilton-Jacobi comparison toolkit on manifolds and Wasserstein spaces"};
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("--jobs", jobs, "worker threads (0: hardware concurrency)")->check(CLI::NonNegativeNumber);

  auto* verify = app.add_subcommand("verify", "run a property suite with default instances");
  std::string suite = "all", tol_file;
  std::vector<std::string> mutations;
  std::uint64_t seed = geohj::VerifyContext{}.seed;
  verify->add_option("suite", suite, "manifold, lagrangian, action, transport, duality, hj, doubling or all");
  verify->add_option("--mutate", mutations, "inject a fault: legendre_sign, supergradient_sign, drop_reversal");
  verify->add_option("--tolerances", tol_file, "JSON tolerance overrides");
  verify->add_option("--seed", seed, "sampling seed");

  std::string manifest_path, out_dir;
  auto manifest_cmd = [&](const char* name, const char* help) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("manifest", manifest_path, "experiment manifest (JSON)")->required();
    sc->add_option("--output-dir", out_dir, "override the manifest output directory");
    return sc;
  };
  auto* cost = manifest_cmd("cost-table", "tabulate D(eps, x, y) over points and a schedule");
  auto* transport = manifest_cmd("transport", "solve the Lagrangian optimal transport problem");
  auto* duality = manifest_cmd("duality", "check the relaxed Fenchel duality on a cotangent measure");
  auto* hj = manifest_cmd("hj-solve", "solve u + H(x, du) = F on a periodic grid");
  HjFlags hflags;
  hj->add_option("--resolution", hflags.resolution, "grid nodes per dimension");
  hj->add_option("--tolerance", hflags.tolerance, "a posteriori fixed-point tolerance");
  hj->add_option("--vmax-multiplier", hflags.vmax_multiplier, "velocity range multiplier");
  auto* doubling = manifest_cmd("doubling", "run the doubling-of-variables sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    geohj::default_jobs().store(jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    if (verify->parsed()) return cmd_verify(suite, mutations, tol_file, seed, jobs);
    geohj::io::Manifest m = geohj::io::load_manifest(manifest_path);
    if (cost->parsed()) return cmd_cost_table(m, out_dir);
    if (transport->parsed()) return cmd_transport(m, out_dir);
    if (duality->parsed()) return cmd_duality(m, out_dir);
    if (hj->parsed()) return cmd_hj_solve(m, out_dir, hflags);
    if (doubling->parsed()) return cmd_doubling(m, out_dir);
  } catch (const geohj::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kConfig;
}
