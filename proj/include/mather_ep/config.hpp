#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <toml.hpp>

#include "mather_ep/core.hpp"

namespace mep {

struct ProblemConfig {
  std::string kind = "quadratic";  // quadratic | shifted_quadratic | pendulum | separable
  int dimension = 1;
  std::vector<double> omega;
  double mass = 1.0;
  std::string potential = "cosine";  // cosine | tabulated
  double amplitude = 1.0;
  std::vector<double> samples;       // tabulated potential, M^N values
  int samples_per_axis = 0;
};

struct GridConfig {
  int M = 128;
  int Mv = 257;
  std::optional<double> R;  // empty: resolved from the probed velocity bound
};

struct ScheduleConfig {
  std::vector<double> epsilon;                      // fixed-h schedule
  std::optional<double> h;
  std::vector<std::pair<double, double>> coupled;  // (eps, h) pairs for joint limits
};

struct ToleranceConfig {
  double solver = 1e-10;
  int max_iterations = 50000;
  double hard_bellman = 1e-9;
  double aubry = 1e-4;
};

struct OutputConfig {
  std::string directory = "mather-ep-out";
  bool csv = true;
  bool json = true;
  bool svg = true;
};

struct Expectation {
  std::string metric;
  double value = 0.0;
  std::optional<double> abs;
  std::optional<double> rel;
};

struct AnalysisConfig {
  std::string id;
  std::string type;
  toml::table params;
  std::vector<Expectation> expect;
};

struct RunConfig {
  ProblemConfig problem;
  GridConfig grids;
  ScheduleConfig schedules;
  ToleranceConfig tolerances;
  OutputConfig output;
  std::vector<AnalysisConfig> analyses;
};

inline const std::set<std::string>& analysis_types() {
  static const std::set<std::string> types{"hypotheses", "solve",  "measure",  "continuation", "rates",
                                           "ldp",        "varadhan", "free_energy", "critical_value", "discrete"};
  return types;
}

namespace detail {

[[noreturn]] inline void config_fail(const std::string& msg) { throw Error(ErrorCode::config_error, msg); }

inline double as_double(const toml::node& n, const std::string& where) {
  if (auto v = n.value<double>()) return *v;
  config_fail(where + " must be a number");
}

inline std::vector<double> as_doubles(const toml::node& n, const std::string& where) {
  const auto* arr = n.as_array();
  if (!arr) config_fail(where + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : *arr) out.push_back(as_double(e, where));
  return out;
}

inline const toml::table* sub_table(const toml::table& t, const char* key) {
  const auto* n = t.get(key);
  if (!n) return nullptr;
  if (!n->is_table()) config_fail(std::string("[") + key + "] must be a table");
  return n->as_table();
}

inline std::vector<double> read_samples(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) config_fail("cannot read potential samples from " + file.string());
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    try {
      out.push_back(std::stod(line));
    } catch (const std::exception&) {
      config_fail("bad sample line '" + line + "' in " + file.string());
    }
  }
  return out;
}

inline void require_decreasing(const std::vector<double>& eps, const std::string& where) {
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0)) config_fail(where + ": epsilon values must be positive");
    if (i > 0 && !(eps[i] < eps[i - 1])) config_fail(where + ": schedule must decrease");
  }
}

}  // namespace detail

/// Numeric parameter of an analysis block, with optional default.
inline double param_double(const AnalysisConfig& a, const char* key, std::optional<double> fallback = {}) {
  if (const auto* n = a.params.get(key)) return detail::as_double(*n, a.id + "." + key);
  if (fallback) return *fallback;
  detail::config_fail("analysis '" + a.id + "' needs '" + key + "'");
}

inline std::vector<double> param_doubles(const AnalysisConfig& a, const char* key,
                                         std::optional<std::vector<double>> fallback = {}) {
  if (const auto* n = a.params.get(key)) return detail::as_doubles(*n, a.id + "." + key);
  if (fallback) return *fallback;
  detail::config_fail("analysis '" + a.id + "' needs '" + key + "'");
}

inline std::string param_string(const AnalysisConfig& a, const char* key, std::optional<std::string> fallback = {}) {
  if (const auto* n = a.params.get(key)) {
    if (auto s = n->value<std::string>()) return *s;
    detail::config_fail(a.id + "." + key + " must be a string");
  }
  if (fallback) return *fallback;
  detail::config_fail("analysis '" + a.id + "' needs '" + key + "'");
}

inline bool param_bool(const AnalysisConfig& a, const char* key, bool fallback) {
  if (const auto* n = a.params.get(key)) {
    if (auto b = n->value<bool>()) return *b;
    detail::config_fail(a.id + "." + key + " must be a boolean");
  }
  return fallback;
}

/// Array of number arrays, e.g. [[x, v], ...] or [[lo, hi], ...].
inline std::vector<std::vector<double>> param_rows(const AnalysisConfig& a, const char* key) {
  const auto* n = a.params.get(key);
  if (!n) detail::config_fail("analysis '" + a.id + "' needs '" + key + "'");
  const auto* arr = n->as_array();
  if (!arr) detail::config_fail(a.id + "." + key + " must be an array of arrays");
  std::vector<std::vector<double>> rows;
  for (const auto& e : *arr) rows.push_back(detail::as_doubles(e, a.id + "." + key));
  return rows;
}

inline std::string schedule_kind(const AnalysisConfig& a) {
  const auto mode = param_string(a, "mode", "fixed_h");
  if (mode != "fixed_h" && mode != "joint") detail::config_fail(a.id + ".mode must be 'fixed_h' or 'joint'");
  return mode;
}

/// Parses and validates a run configuration; all failures are ConfigError.
inline RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".") {
  using detail::config_fail;
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    config_fail(os.str());
  }
  RunConfig cfg;

  const auto* prob = detail::sub_table(root, "problem");
  if (!prob) config_fail("missing [problem] block");
  cfg.problem.kind = prob->get("kind") ? prob->get("kind")->value<std::string>().value_or("") : "";
  cfg.problem.dimension = static_cast<int>(prob->get("dimension") ? prob->get("dimension")->value<std::int64_t>().value_or(0) : 1);
  if (cfg.problem.dimension != 1 && cfg.problem.dimension != 2) config_fail("problem.dimension must be 1 or 2");
  const std::set<std::string> kinds{"quadratic", "shifted_quadratic", "pendulum", "separable"};
  if (!kinds.count(cfg.problem.kind))
    config_fail("problem.kind must be one of quadratic, shifted_quadratic, pendulum, separable");
  if (cfg.problem.kind == "shifted_quadratic") {
    if (!prob->get("omega")) config_fail("shifted_quadratic needs problem.omega");
    cfg.problem.omega = detail::as_doubles(*prob->get("omega"), "problem.omega");
    if (static_cast<int>(cfg.problem.omega.size()) != cfg.problem.dimension)
      config_fail("problem.omega must have one entry per dimension");
  }
  if (cfg.problem.kind == "separable") {
    if (const auto* m = prob->get("mass")) cfg.problem.mass = detail::as_double(*m, "problem.mass");
    if (!(cfg.problem.mass > 0.0)) config_fail("problem.mass must be positive");
    const auto* pot = detail::sub_table(*prob, "potential");
    if (!pot) config_fail("separable problems need a [problem.potential] block");
    cfg.problem.potential = pot->get("type") ? pot->get("type")->value<std::string>().value_or("") : "cosine";
    if (cfg.problem.potential == "cosine") {
      if (const auto* a = pot->get("amplitude")) cfg.problem.amplitude = detail::as_double(*a, "problem.potential.amplitude");
    } else if (cfg.problem.potential == "tabulated") {
      if (const auto* s = pot->get("samples")) {
        cfg.problem.samples = detail::as_doubles(*s, "problem.potential.samples");
      } else if (const auto* f = pot->get("file")) {
        const auto name = f->value<std::string>();
        if (!name) config_fail("problem.potential.file must be a string");
        cfg.problem.samples = detail::read_samples(base_dir / *name);
      } else {
        config_fail("tabulated potential needs 'samples' or 'file'");
      }
      const double root_m = std::round(std::pow(static_cast<double>(cfg.problem.samples.size()), 1.0 / cfg.problem.dimension));
      cfg.problem.samples_per_axis = static_cast<int>(root_m);
      if (ipow(static_cast<std::size_t>(root_m), cfg.problem.dimension) != cfg.problem.samples.size() || root_m < 4)
        config_fail("tabulated potential needs M^N samples with M >= 4");
    } else {
      config_fail("problem.potential.type must be 'cosine' or 'tabulated'");
    }
  }

  if (const auto* g = detail::sub_table(root, "grids")) {
    if (const auto* m = g->get("M")) cfg.grids.M = static_cast<int>(m->value<std::int64_t>().value_or(0));
    if (const auto* m = g->get("Mv")) cfg.grids.Mv = static_cast<int>(m->value<std::int64_t>().value_or(0));
    if (const auto* r = g->get("R")) {
      if (auto s = r->value<std::string>()) {
        if (*s != "auto") config_fail("grids.R must be a number or \"auto\"");
      } else {
        cfg.grids.R = detail::as_double(*r, "grids.R");
        if (!(*cfg.grids.R > 0.0)) config_fail("grids.R must be positive");
      }
    }
  }
  if (cfg.grids.M < 4) config_fail("grids.M must be an integer >= 4");
  if (cfg.grids.Mv < 3 || cfg.grids.Mv % 2 == 0) config_fail("grids.Mv must be an odd integer >= 3");

  if (const auto* s = detail::sub_table(root, "schedules")) {
    if (const auto* e = s->get("epsilon")) cfg.schedules.epsilon = detail::as_doubles(*e, "schedules.epsilon");
    if (const auto* h = s->get("h")) cfg.schedules.h = detail::as_double(*h, "schedules.h");
    if (const auto* c = s->get("coupled")) {
      const auto* arr = c->as_array();
      if (!arr) config_fail("schedules.coupled must be an array of [epsilon, h] pairs");
      for (const auto& e : *arr) {
        const auto pair = detail::as_doubles(e, "schedules.coupled");
        if (pair.size() != 2) config_fail("schedules.coupled entries must be [epsilon, h]");
        cfg.schedules.coupled.emplace_back(pair[0], pair[1]);
      }
    } else if (const auto* je = s->get("joint_epsilon")) {
      const auto eps = detail::as_doubles(*je, "schedules.joint_epsilon");
      double ratio = 2.0;
      if (const auto* r = s->get("joint_ratio")) ratio = detail::as_double(*r, "schedules.joint_ratio");
      for (double e : eps) cfg.schedules.coupled.emplace_back(e, ratio * e);
    }
  }
  detail::require_decreasing(cfg.schedules.epsilon, "schedules.epsilon");
  if (cfg.schedules.h && !(*cfg.schedules.h > 0.0)) config_fail("schedules.h must be positive");
  {
    std::vector<double> eps;
    for (const auto& [e, h] : cfg.schedules.coupled) {
      if (h < e) config_fail("schedules.coupled: h must be at least epsilon");
      eps.push_back(e);
    }
    detail::require_decreasing(eps, "schedules.coupled");
  }

  if (const auto* t = detail::sub_table(root, "tolerances")) {
    if (const auto* v = t->get("solver")) cfg.tolerances.solver = detail::as_double(*v, "tolerances.solver");
    if (const auto* v = t->get("max_iterations"))
      cfg.tolerances.max_iterations = static_cast<int>(v->value<std::int64_t>().value_or(0));
    if (const auto* v = t->get("hard_bellman")) cfg.tolerances.hard_bellman = detail::as_double(*v, "tolerances.hard_bellman");
    if (const auto* v = t->get("aubry")) cfg.tolerances.aubry = detail::as_double(*v, "tolerances.aubry");
  }
  if (!(cfg.tolerances.solver > 0.0) || cfg.tolerances.max_iterations < 1)
    config_fail("tolerances.solver must be positive and tolerances.max_iterations >= 1");

  if (const auto* o = detail::sub_table(root, "output")) {
    if (const auto* d = o->get("directory")) {
      const auto s = d->value<std::string>();
      if (!s || s->empty()) config_fail("output.directory must be a nonempty string");
      cfg.output.directory = *s;
    }
    if (const auto* f = o->get("formats")) {
      const auto* arr = f->as_array();
      if (!arr) config_fail("output.formats must be an array of strings");
      cfg.output.csv = cfg.output.json = cfg.output.svg = false;
      for (const auto& e : *arr) {
        const auto s = e.value<std::string>().value_or("");
        if (s == "csv") cfg.output.csv = true;
        else if (s == "json") cfg.output.json = true;
        else if (s == "svg") cfg.output.svg = true;
        else config_fail("output.formats entries must be csv, json or svg");
      }
    }
  }

  const auto* list = root.get("analysis");
  if (!list) config_fail("no [[analysis]] blocks");
  const auto* arr = list->as_array();
  if (!arr) config_fail("[[analysis]] must be an array of tables");
  std::set<std::string> ids;
  for (const auto& node : *arr) {
    const auto* t = node.as_table();
    if (!t) config_fail("[[analysis]] entries must be tables");
    AnalysisConfig a;
    a.params = *t;
    a.id = t->get("id") ? t->get("id")->value<std::string>().value_or("") : "";
    a.type = t->get("type") ? t->get("type")->value<std::string>().value_or("") : "";
    if (a.id.empty()) config_fail("every analysis needs a string id");
    for (char c : a.id)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
        config_fail("analysis id '" + a.id + "' may only use letters, digits, '_' and '-'");
    if (!ids.insert(a.id).second) config_fail("duplicate analysis id '" + a.id + "'");
    if (!analysis_types().count(a.type)) config_fail("analysis '" + a.id + "' has unknown type '" + a.type + "'");
    if (const auto* ex = t->get("expect")) {
      const auto* et = ex->as_table();
      if (!et) config_fail(a.id + ".expect must be a table");
      for (const auto& [key, val] : *et) {
        const auto* vt = val.as_table();
        if (!vt || !vt->get("value")) config_fail(a.id + ".expect." + std::string(key.str()) + " needs a value");
        Expectation e;
        e.metric = std::string(key.str());
        e.value = detail::as_double(*vt->get("value"), a.id + ".expect");
        if (const auto* v = vt->get("abs")) e.abs = detail::as_double(*v, a.id + ".expect");
        if (const auto* v = vt->get("rel")) e.rel = detail::as_double(*v, a.id + ".expect");
        if (!e.abs && !e.rel) config_fail(a.id + ".expect." + e.metric + " needs 'abs' or 'rel'");
        a.expect.push_back(e);
      }
    }
    // type-specific requirements
    const bool needs_fixed = a.type == "critical_value" ||
                             ((a.type == "continuation" || a.type == "ldp") && schedule_kind(a) == "fixed_h");
    const bool needs_joint = a.type == "rates" || a.type == "free_energy" ||
                             ((a.type == "continuation" || a.type == "ldp") && schedule_kind(a) == "joint");
    if (needs_fixed && (cfg.schedules.epsilon.size() < 3 || !cfg.schedules.h))
      config_fail("analysis '" + a.id + "' needs schedules.epsilon (>= 3 values) and schedules.h");
    if (needs_joint && cfg.schedules.coupled.size() < 3)
      config_fail("analysis '" + a.id + "' needs a coupled schedule with >= 3 points");
    if (a.type == "varadhan" && cfg.schedules.epsilon.size() < 3)
      config_fail("analysis '" + a.id + "' needs schedules.epsilon (>= 3 values)");
    if (a.type == "solve" || a.type == "measure") {
      if (!(param_double(a, "epsilon") > 0.0) || !(param_double(a, "h") > 0.0))
        config_fail("analysis '" + a.id + "' needs positive epsilon and h");
    }
    if (a.type == "ldp") {
      const auto regime = param_string(a, "regime", "fixed_h");
      if (regime != "fixed_h" && regime != "joint" && regime != "away")
        config_fail(a.id + ".regime must be fixed_h, joint or away");
      if ((regime == "joint" || regime == "away") && cfg.schedules.coupled.size() < 3)
        config_fail("analysis '" + a.id + "' needs a coupled schedule with >= 3 points");
      for (const char* key : {"x", "v"}) {
        const auto rows = param_rows(a, key);
        if (static_cast<int>(rows.size()) != cfg.problem.dimension)
          config_fail(a.id + "." + key + " needs one [lo, hi] interval per dimension");
        for (const auto& r : rows)
          if (r.size() != 2 || !(r[0] < r[1])) config_fail(a.id + "." + key + " intervals must be [lo, hi] with lo < hi");
      }
    }
    if (a.type == "varadhan" || a.type == "free_energy") {
      if (static_cast<int>(param_doubles(a, "p").size()) != cfg.problem.dimension)
        config_fail(a.id + ".p must have one entry per dimension");
    }
    if (a.type == "free_energy" && static_cast<int>(param_doubles(a, "x").size()) != cfg.problem.dimension)
      config_fail(a.id + ".x must have one entry per dimension");
    if (a.type == "discrete" || a.type == "critical_value") {
      const double h = a.type == "discrete" ? param_double(a, "h") : param_double(a, "h", cfg.schedules.h);
      if (!(h > 0.0)) config_fail(a.id + ".h must be positive");
    }
    cfg.analyses.push_back(std::move(a));
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config_error, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace mep
