#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "model.hpp"
#include "rational.hpp"

namespace fh {

// Everything a pipeline run depends on. Numbers that may sit on exact thresholds
// (gamma0, gamma1) are kept as text and parsed exactly where they are used.
struct RunConfig {
  std::string model = "fhn";

  std::string gamma0 = "4";  // rational/decimal text or "auto"
  int branch = 1;
  std::vector<double> alpha0;  // generic models, original scale
  double c0 = 0.0;

  std::string gamma1 = "1";
  std::vector<double> alpha1;
  double c1 = 0.0;

  std::vector<double> eps{0.005, 0.01, 0.02, 0.04};
  int samples = 1024;

  std::optional<std::vector<double>> spectrum_eps;  // unset: every orbit
  double radius_factor = 0.5;
  int nodes = 64;
  int bloch_points = 9;

  std::optional<std::vector<double>> bounds_eps;
  int suite_size = 100;
  int bound_n = 0;  // 0: smallest admissible n
  std::vector<int> kato_n{2, 3, 5};

  std::optional<double> simulate_eps = 0.02;  // unset: no simulation
  int cells = 512;
  double t_end = 60.0;
  double snapshot_every = 0.5;
  double amplitude = 1e-6;
  double dt_fraction = 0.8;
  std::string perturbation = "eigenfunction";
  bool grid_check = true;
  int csv_stride = 10;

  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string out = "fh_out";

  bool is_fhn() const { return model == "fhn"; }
};

namespace cfgdetail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_number(trim(v)).value;
  } catch (const ConfigError&) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
}

inline long long to_int(const std::string& key, const std::string& v) {
  const auto r = parse_rational(trim(v));
  if (!r || r->den != 1) throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return r->num;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "no" || t == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

// Comma or whitespace separated; empty text is an empty list.
inline std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::string s = v;
  for (char& ch : s)
    if (ch == ',') ch = ' ';
  std::istringstream in(s);
  std::vector<double> out;
  for (std::string tok; in >> tok;) out.push_back(to_double(key, tok));
  return out;
}

inline std::string number_text(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "auto") return t;
  const ExactNumber n = [&] {
    try {
      return parse_number(t);
    } catch (const ConfigError&) {
      throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
    }
  }();
  return n.exact ? to_string(*n.exact) : fmt_double(n.value);
}

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
  return s;
}

}  // namespace cfgdetail

// Sets one "section.key" from its text form. Unknown keys are errors.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace cfgdetail;
  auto I = [&] { return to_int(key, value); };
  auto D = [&] { return to_double(key, value); };
  if (key == "model.name") c.model = trim(value);
  else if (key == "foldhopf.gamma0") c.gamma0 = number_text(key, value);
  else if (key == "foldhopf.branch") c.branch = static_cast<int>(I());
  else if (key == "foldhopf.alpha0") c.alpha0 = to_list(key, value);
  else if (key == "foldhopf.c0") c.c0 = D();
  else if (key == "unfolding.gamma1") c.gamma1 = number_text(key, value);
  else if (key == "unfolding.alpha1") c.alpha1 = to_list(key, value);
  else if (key == "unfolding.c1") c.c1 = D();
  else if (key == "orbit.eps") c.eps = to_list(key, value);
  else if (key == "orbit.samples") c.samples = static_cast<int>(I());
  else if (key == "spectrum.eps") {
    if (trim(value) == "all") c.spectrum_eps.reset();
    else c.spectrum_eps = to_list(key, value);
  } else if (key == "spectrum.radius_factor") c.radius_factor = D();
  else if (key == "spectrum.nodes") c.nodes = static_cast<int>(I());
  else if (key == "spectrum.bloch_points") c.bloch_points = static_cast<int>(I());
  else if (key == "bounds.eps") {
    if (trim(value) == "all") c.bounds_eps.reset();
    else c.bounds_eps = to_list(key, value);
  } else if (key == "bounds.suite_size") c.suite_size = static_cast<int>(I());
  else if (key == "bounds.n") c.bound_n = static_cast<int>(I());
  else if (key == "bounds.kato_n") {
    c.kato_n.clear();
    for (double x : to_list(key, value)) c.kato_n.push_back(static_cast<int>(to_int(key, fmt_double(x))));
  } else if (key == "simulate.eps") {
    const std::string t = trim(value);
    if (t.empty() || t == "none") c.simulate_eps.reset();
    else c.simulate_eps = D();
  } else if (key == "simulate.cells") c.cells = static_cast<int>(I());
  else if (key == "simulate.t_end") c.t_end = D();
  else if (key == "simulate.snapshot_every") c.snapshot_every = D();
  else if (key == "simulate.amplitude") c.amplitude = D();
  else if (key == "simulate.dt_fraction") c.dt_fraction = D();
  else if (key == "simulate.perturbation") c.perturbation = trim(value);
  else if (key == "simulate.grid_check") c.grid_check = to_bool(key, value);
  else if (key == "simulate.csv_stride") c.csv_stride = static_cast<int>(I());
  else if (key == "run.seed") {
    const long long s = I();
    if (s < 0) throw ConfigError("config key 'run.seed': must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (key == "run.workers") {
    const long long w = I();
    if (w < 1 || w > 1024) throw ConfigError("config key 'run.workers': must be in [1, 1024]");
    c.workers = static_cast<unsigned>(w);
  } else if (key == "run.out") c.out = trim(value);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!model_registry().count(c.model)) fail("unknown model '" + c.model + "'");
  auto check_eps = [&](const std::vector<double>& v, const std::string& key) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] > 0)) fail(key + ": eps values must be positive");
      if (i && !(v[i] > v[i - 1])) fail(key + ": eps values must be sorted and distinct");
    }
  };
  check_eps(c.eps, "orbit.eps");
  if (c.spectrum_eps) check_eps(*c.spectrum_eps, "spectrum.eps");
  if (c.bounds_eps) check_eps(*c.bounds_eps, "bounds.eps");
  if (c.simulate_eps && !(*c.simulate_eps > 0)) fail("simulate.eps must be positive");
  if (c.is_fhn()) {
    if (c.gamma0 != "auto" && !(parse_number(c.gamma0).value > 0)) fail("foldhopf.gamma0 must be positive");
    if (c.gamma1 == "auto") fail("unfolding.gamma1 cannot be auto");
    if (c.branch != 1 && c.branch != 2) fail("foldhopf.branch must be 1 or 2");
  } else {
    const ModelDefinition m = make_model(c.model);
    if (c.alpha0.size() != m.param_dim())
      fail("foldhopf.alpha0 needs " + std::to_string(m.param_dim()) + " values for model '" + c.model + "'");
    if (c.c0 == 0.0) fail("foldhopf.c0 must be nonzero");
    if (!c.alpha1.empty() && c.alpha1.size() != m.param_dim())
      fail("unfolding.alpha1 needs " + std::to_string(m.param_dim()) + " values");
    if (c.branch < 1) fail("foldhopf.branch must be >= 1");
  }
  if (c.samples < 16) fail("orbit.samples must be >= 16");
  if (!(c.radius_factor > 0 && c.radius_factor < 1)) fail("spectrum.radius_factor must be in (0, 1)");
  if (c.nodes < 8) fail("spectrum.nodes must be >= 8");
  if (c.bloch_points < 1) fail("spectrum.bloch_points must be >= 1");
  if (c.suite_size < 1) fail("bounds.suite_size must be >= 1");
  if (c.bound_n < 0) fail("bounds.n must be >= 0");
  for (int n : c.kato_n)
    if (n < 2) fail("bounds.kato_n entries must be >= 2");
  if (c.cells < 64 || (c.cells & (c.cells - 1))) fail("simulate.cells must be a power of two >= 64");
  if (!(c.t_end > 0) || !(c.snapshot_every > 0)) fail("simulate.t_end and snapshot_every must be positive");
  if (!(c.amplitude > 0)) fail("simulate.amplitude must be positive");
  if (!(c.dt_fraction > 0 && c.dt_fraction <= 1)) fail("simulate.dt_fraction must be in (0, 1]");
  if (c.perturbation != "eigenfunction" && c.perturbation != "noise")
    fail("simulate.perturbation must be 'eigenfunction' or 'noise'");
  if (c.csv_stride < 1) fail("simulate.csv_stride must be >= 1");
  if (c.out.empty()) fail("run.out must not be empty");
}

inline RunConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig c;
  for (const auto& [section, body] : pt) {
    if (body.empty() && !body.data().empty())
      throw ConfigError(origin + ": key '" + section + "' is outside any [section]");
    for (const auto& [key, value] : body) set_config_value(c, section + "." + key, value.data());
  }
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

// Fixed-order "section.key = value" lines for every setting that can change results
// (the output directory and worker count cannot).
inline std::vector<std::pair<std::string, std::string>> canonical_entries(const RunConfig& c) {
  using namespace cfgdetail;
  std::vector<std::pair<std::string, std::string>> e{
      {"model.name", c.model},
      {"foldhopf.gamma0", c.gamma0},
      {"foldhopf.branch", std::to_string(c.branch)},
      {"foldhopf.alpha0", join(c.alpha0)},
      {"foldhopf.c0", fmt_double(c.c0)},
      {"unfolding.gamma1", c.gamma1},
      {"unfolding.alpha1", join(c.alpha1)},
      {"unfolding.c1", fmt_double(c.c1)},
      {"orbit.eps", join(c.eps)},
      {"orbit.samples", std::to_string(c.samples)},
      {"spectrum.eps", c.spectrum_eps ? join(*c.spectrum_eps) : "all"},
      {"spectrum.radius_factor", fmt_double(c.radius_factor)},
      {"spectrum.nodes", std::to_string(c.nodes)},
      {"spectrum.bloch_points", std::to_string(c.bloch_points)},
      {"bounds.eps", c.bounds_eps ? join(*c.bounds_eps) : "all"},
      {"bounds.suite_size", std::to_string(c.suite_size)},
      {"bounds.n", std::to_string(c.bound_n)},
  };
  std::string kn;
  for (std::size_t i = 0; i < c.kato_n.size(); ++i) kn += (i ? "," : "") + std::to_string(c.kato_n[i]);
  e.emplace_back("bounds.kato_n", kn);
  e.emplace_back("simulate.eps", c.simulate_eps ? fmt_double(*c.simulate_eps) : "none");
  e.emplace_back("simulate.cells", std::to_string(c.cells));
  e.emplace_back("simulate.t_end", fmt_double(c.t_end));
  e.emplace_back("simulate.snapshot_every", fmt_double(c.snapshot_every));
  e.emplace_back("simulate.amplitude", fmt_double(c.amplitude));
  e.emplace_back("simulate.dt_fraction", fmt_double(c.dt_fraction));
  e.emplace_back("simulate.perturbation", c.perturbation);
  e.emplace_back("simulate.grid_check", c.grid_check ? "true" : "false");
  e.emplace_back("simulate.csv_stride", std::to_string(c.csv_stride));
  e.emplace_back("run.seed", std::to_string(c.seed));
  return e;
}

inline std::string canonical_text(const RunConfig& c) {
  std::string s;
  for (const auto& [k, v] : canonical_entries(c)) s += k + " = " + v + "\n";
  return s;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(c))));
  return buf;
}

// Command-line settings layered over the file.
struct ConfigOverrides {
  std::optional<std::string> out, eps, gamma0, gamma1;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
};

inline void apply_overrides(RunConfig& c, const ConfigOverrides& o) {
  if (o.out) c.out = *o.out;
  if (o.eps) set_config_value(c, "orbit.eps", *o.eps);
  if (o.gamma0) set_config_value(c, "foldhopf.gamma0", *o.gamma0);
  if (o.gamma1) set_config_value(c, "unfolding.gamma1", *o.gamma1);
  if (o.seed) c.seed = *o.seed;
  if (o.workers) {
    if (*o.workers < 1) throw ConfigError("--workers must be >= 1");
    c.workers = *o.workers;
  }
  validate(c);
}

}  // namespace fh
