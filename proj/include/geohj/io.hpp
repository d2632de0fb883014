#pragma once

// JSON descriptors for charts, Lagrangians, measures, potentials, measure
// functionals, grid inputs and schedules, plus the experiment manifest.
// Every malformed record raises ConfigError.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geohj/config.hpp"
#include "geohj/doubling.hpp"
#include "geohj/error.hpp"
#include "geohj/functionals.hpp"
#include "geohj/hj_grid.hpp"

namespace geohj::io {

using nlohmann::json;

namespace detail {

inline const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(where + ": missing '" + key + "'");
  return *it;
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + ": expected a finite number");
  return v;
}

inline int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<int>();
}

inline std::vector<double> numbers(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : j) out.push_back(number(x, where));
  return out;
}

inline Vec vec_of(const json& j, int dim, const std::string& where) {
  auto v = numbers(j, where);
  if (static_cast<int>(v.size()) != dim) throw ConfigError(where + ": expected " + std::to_string(dim) + " coordinates");
  Vec out(dim);
  for (int i = 0; i < dim; ++i) out[i] = v[i];
  return out;
}

inline double optional_number(const json& j, const char* key, double fallback, const std::string& where) {
  auto it = j.find(key);
  return it == j.end() ? fallback : number(*it, where + "." + key);
}

template <class F>
auto wrap(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace detail

inline Chart chart_from_json(const json& j) {
  const std::string w = "chart";
  std::string kind = detail::field(j, "kind", w).get<std::string>();
  return detail::wrap(w, [&] {
    if (kind == "flat_torus") return Chart::flat_torus(detail::numbers(detail::field(j, "periods", w), w + ".periods"));
    if (kind == "euclidean") return Chart::euclidean(detail::integer(detail::field(j, "dim", w), w + ".dim"));
    if (kind == "sphere2") return Chart::sphere2(detail::optional_number(j, "radius", 1.0, w));
    throw ConfigError("chart: unknown kind '" + kind + "'");
  });
}

inline json chart_to_json(const Chart& c) {
  switch (c.kind()) {
    case ChartKind::FlatTorus:
      return {{"kind", "flat_torus"}, {"periods", c.periods()}};
    case ChartKind::Euclidean:
      return {{"kind", "euclidean"}, {"dim", c.dim()}};
    case ChartKind::Sphere2:
      return {{"kind", "sphere2"}, {"radius", c.radius()}};
  }
  return {};
}

inline Lagrangian lagrangian_from_json(const json& j, const Chart& c) {
  const std::string w = "lagrangian";
  std::string kind = detail::field(j, "kind", w).get<std::string>();
  double p = detail::number(detail::field(j, "p", w), w + ".p");
  return detail::wrap(w, [&] {
    if (kind == "p_norm") return Lagrangian::p_norm(c, p);
    if (kind == "perturbed_p_norm")
      return Lagrangian::perturbed_p_norm(c, p, detail::number(detail::field(j, "amplitude", w), w + ".amplitude"));
    throw ConfigError("lagrangian: unknown kind '" + kind + "'");
  });
}

inline json lagrangian_to_json(const Lagrangian& L) {
  json j{{"kind", L.kind() == LagrangianKind::PNorm ? "p_norm" : "perturbed_p_norm"}, {"p", L.p()}};
  if (L.kind() != LagrangianKind::PNorm) j["amplitude"] = L.multiplier().amplitude();
  return j;
}

inline Point point_from_json(const json& j, const Chart& c, const std::string& where) {
  Vec v = detail::vec_of(j, c.coord_dim(), where);
  return detail::wrap(where, [&] { return c.point(v); });
}

inline json point_to_json(const Point& x) { return std::vector<double>(x.coords.data(), x.coords.data() + x.coords.size()); }

inline std::vector<double> weights_from_json(const json& j, std::size_t n, const std::string& w) {
  auto it = j.find("weights");
  if (it == j.end()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  return detail::numbers(*it, w + ".weights");
}

inline DiscreteMeasure measure_from_json(const json& j, const Chart& c, const std::string& w = "measure") {
  const json& atoms = detail::field(j, "atoms", w);
  if (!atoms.is_array() || atoms.empty()) throw ConfigError(w + ": atoms must be a nonempty array");
  std::vector<Point> a;
  for (const auto& x : atoms) a.push_back(point_from_json(x, c, w + ".atoms"));
  auto wt = weights_from_json(j, a.size(), w);
  return detail::wrap(w, [&] { return DiscreteMeasure(std::move(a), std::move(wt)); });
}

inline json measure_to_json(const DiscreteMeasure& m) {
  json a = json::array();
  for (const auto& x : m.atoms) a.push_back(point_to_json(x));
  return {{"atoms", a}, {"weights", m.weights}};
}

inline CotangentMeasure cotangent_measure_from_json(const json& j, const Chart& c, const std::string& w = "gamma") {
  const json& atoms = detail::field(j, "atoms", w);
  if (!atoms.is_array() || atoms.empty()) throw ConfigError(w + ": atoms must be a nonempty array");
  CotangentMeasure g;
  for (const auto& a : atoms) {
    Point x = point_from_json(detail::field(a, "base", w), c, w + ".base");
    Vec z = detail::vec_of(detail::field(a, "covec", w), c.coord_dim(), w + ".covec");
    g.atoms.push_back({x, c.project_tangent(x, z)});
  }
  g.weights = weights_from_json(j, g.atoms.size(), w);
  detail::wrap(w, [&] {
    geohj::detail::check_weights(g.weights, g.atoms.size(), "gamma");
    return 0;
  });
  return g;
}

inline Potential potential_from_json(const json& j, const Chart& c, const std::string& w = "potential") {
  if (!j.is_object()) throw ConfigError(w + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "constant" && it.key() != "linear" && it.key() != "modes")
      throw ConfigError(w + ": unknown key '" + it.key() + "'");
  Potential f(c, detail::optional_number(j, "constant", 0.0, w));
  if (auto it = j.find("linear"); it != j.end()) f.set_linear(detail::vec_of(*it, c.coord_dim(), w + ".linear"));
  if (auto it = j.find("modes"); it != j.end()) {
    if (!it->is_array()) throw ConfigError(w + ".modes: expected an array");
    for (const auto& m : *it) {
      const json& k = detail::field(m, "k", w + ".modes");
      if (!k.is_array()) throw ConfigError(w + ".modes.k: expected an array of integers");
      std::vector<int> freq;
      for (const auto& x : k) freq.push_back(detail::integer(x, w + ".modes.k"));
      detail::wrap(w, [&] {
        f.add_mode(freq, detail::optional_number(m, "cos", 0.0, w), detail::optional_number(m, "sin", 0.0, w));
        return 0;
      });
    }
  }
  return f;
}

inline json potential_to_json(const Potential& f) {
  json modes = json::array();
  for (const auto& m : f.modes()) modes.push_back({{"k", m.frequency}, {"cos", m.cos_coef}, {"sin", m.sin_coef}});
  return {{"constant", f.constant()},
          {"linear", std::vector<double>(f.linear().data(), f.linear().data() + f.linear().size())},
          {"modes", modes}};
}

/// A functional is one term object or an array of terms:
/// {"kind":"linear","potential":{...}}, {"kind":"moment","center":[..],"exponent":2},
/// {"kind":"max_of_linears","potentials":[...]}, {"kind":"hamiltonian_of","potential":{...}};
/// each term takes an optional "coefficient".
inline MeasureFunctional functional_from_json(const json& j, const Lagrangian& L, const std::string& w = "functional") {
  const Chart& c = L.chart();
  if (j.is_array()) {
    if (j.empty()) throw ConfigError(w + ": empty term list");
    MeasureFunctional f;
    for (const auto& t : j) f += functional_from_json(t, L, w);
    return f;
  }
  std::string kind = detail::field(j, "kind", w).get<std::string>();
  double k = detail::optional_number(j, "coefficient", 1.0, w);
  return detail::wrap(w, [&] {
    if (kind == "linear") return MeasureFunctional::linear(potential_from_json(detail::field(j, "potential", w), c), k);
    if (kind == "moment")
      return MeasureFunctional::moment(point_from_json(detail::field(j, "center", w), c, w + ".center"),
                                       detail::optional_number(j, "exponent", 2.0, w), k);
    if (kind == "max_of_linears") {
      const json& ps = detail::field(j, "potentials", w);
      if (!ps.is_array()) throw ConfigError(w + ".potentials: expected an array");
      std::vector<Potential> phis;
      for (const auto& p : ps) phis.push_back(potential_from_json(p, c));
      return MeasureFunctional::max_of_linears(std::move(phis), k);
    }
    if (kind == "hamiltonian_of")
      return MeasureFunctional::hamiltonian_of(L, potential_from_json(detail::field(j, "potential", w), c), k);
    throw ConfigError(w + ": unknown kind '" + kind + "'");
  });
}

inline std::vector<int> resolution_from_json(const json& j, const Chart& c, const std::string& w = "resolution") {
  std::vector<int> r;
  if (j.is_number_integer()) r.assign(static_cast<std::size_t>(c.dim()), j.get<int>());
  else if (j.is_array())
    for (const auto& x : j) r.push_back(detail::integer(x, w));
  else throw ConfigError(w + ": expected an integer or an array of integers");
  if (static_cast<int>(r.size()) != c.dim()) throw ConfigError(w + ": one entry per dimension is required");
  for (int n : r)
    if (n < 1) throw ConfigError(w + ": empty grid");
  return r;
}

/// {"potential":{...}} sampled on the grid, or {"file":"path"} holding a
/// grid CSV or binary grid function. Relative paths resolve against base.
inline GridFunction grid_from_json(const json& j, const Chart& c, const std::vector<int>& res,
                                   const std::filesystem::path& base, const std::string& w) {
  if (auto it = j.find("potential"); it != j.end()) {
    Potential f = potential_from_json(*it, c, w + ".potential");
    return detail::wrap(w, [&] { return GridFunction::sample(c, res, [&](const Point& x) { return f.value(x); }); });
  }
  if (auto it = j.find("file"); it != j.end()) {
    std::filesystem::path p = it->get<std::string>();
    if (p.is_relative()) p = base / p;
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError(w + ": cannot open '" + p.string() + "'");
    char magic[8] = {};
    in.read(magic, 8);
    in.clear();
    in.seekg(0);
    GridFunction g = std::string(magic, 8) == "GEOHJGF1" ? GridFunction::read_binary(in)
                                                         : detail::wrap(w, [&] { return GridFunction::read_csv(in, c, res); });
    if (!(g.chart() == c) || g.resolution() != res) throw ConfigError(w + ": file grid does not match the manifest grid");
    return g;
  }
  throw ConfigError(w + ": expected 'potential' or 'file'");
}

/// "default", an explicit array, or {"first","last","ratio"}.
inline std::vector<double> schedule_from_json(const json& j) {
  const std::string w = "schedule";
  std::vector<double> s;
  if (j.is_string()) {
    if (j.get<std::string>() != "default") throw ConfigError("schedule: unknown name '" + j.get<std::string>() + "'");
    s = default_schedule();
  } else if (j.is_array()) {
    s = detail::numbers(j, w);
  } else {
    s = detail::wrap(w, [&] {
      return geometric_schedule(detail::number(detail::field(j, "first", w), w + ".first"),
                                detail::number(detail::field(j, "last", w), w + ".last"),
                                detail::number(detail::field(j, "ratio", w), w + ".ratio"));
    });
  }
  DoublingConfig cfg;
  cfg.schedule = s;
  detail::wrap(w, [&] {
    cfg.validate();
    return 0;
  });
  return s;
}

inline Penalization penalization_from_json(const json& j, const Chart& c, const Lagrangian& L) {
  const std::string w = "penalization";
  std::string kind = detail::field(j, "kind", w).get<std::string>();
  return detail::wrap(w, [&] {
    if (kind == "lagrangian_action") return Penalization::lagrangian_action(L);
    if (kind == "wasserstein_power")
      return Penalization::wasserstein_power(c, detail::optional_number(j, "p", L.p(), w));
    throw ConfigError("penalization: unknown kind '" + kind + "'");
  });
}

struct Manifest {
  std::string name;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::filesystem::path base_dir;  // directory of the manifest file
  Chart chart = Chart::flat_torus({1.0});
  std::optional<Lagrangian> lagrangian;
  json body;  // the full document, for command-specific sections

  const Lagrangian& L() const {
    if (!lagrangian) throw ConfigError("manifest: missing 'lagrangian'");
    return *lagrangian;
  }

  const json& section(const char* key) const { return detail::field(body, key, "manifest"); }
};

inline Manifest manifest_from_json(const json& j, const std::filesystem::path& base_dir = ".") {
  if (!j.is_object()) throw ConfigError("manifest: expected an object");
  Manifest m;
  m.body = j;
  m.base_dir = base_dir;
  const json& seed = detail::field(j, "seed", "manifest");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0))
    throw ConfigError("manifest: seed must be a nonnegative integer");
  m.seed = seed.get<std::uint64_t>();
  m.name = j.value("name", std::string("experiment"));
  if (m.name.empty() || m.name.find('/') != std::string::npos) throw ConfigError("manifest: bad name");
  std::filesystem::path out = j.value("output_dir", std::string("out"));
  m.output_dir = out.is_relative() ? base_dir / out : out;
  m.chart = chart_from_json(detail::field(j, "chart", "manifest"));
  if (auto it = j.find("lagrangian"); it != j.end()) m.lagrangian = lagrangian_from_json(*it, m.chart);
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("manifest '" + path.string() + "': " + e.what());
  }
  try {
    return manifest_from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
}

inline Tolerances load_tolerances(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open tolerance file '" + path.string() + "'");
  try {
    return tolerances_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError("tolerance file '" + path.string() + "': " + e.what());
  }
}

}  // namespace geohj::io
