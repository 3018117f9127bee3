#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mather_ep/config.hpp"
#include "mather_ep/core.hpp"
#include "mather_ep/discrete_am.hpp"
#include "mather_ep/ep_solver.hpp"
#include "mather_ep/field_io.hpp"
#include "mather_ep/ldp.hpp"
#include "mather_ep/limits.hpp"
#include "mather_ep/measure.hpp"
#include "mather_ep/problem.hpp"
#include "mather_ep/svg.hpp"

namespace mep {

inline constexpr int kSummaryVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutputDirEnv = "MATHER_EP_OUTPUT_DIR";

/// 64-bit FNV-1a, used for content-addressed cache file names.
inline std::string content_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <int N>
LagrangianSpec<N> make_lagrangian(const ProblemConfig& p) {
  if (p.kind == "quadratic") return LagrangianSpec<N>::quadratic();
  if (p.kind == "pendulum") return LagrangianSpec<N>::pendulum();
  if (p.kind == "shifted_quadratic") {
    Vec<N> w{};
    for (int d = 0; d < N; ++d) w[d] = p.omega.at(d);
    return LagrangianSpec<N>::shifted_quadratic(w);
  }
  if (p.potential == "tabulated")
    return LagrangianSpec<N>::separable(PeriodicPotential<N>::tabulated(TorusGrid<N>(p.samples_per_axis), p.samples),
                                        p.mass);
  return LagrangianSpec<N>::separable(PeriodicPotential<N>::cosine(p.amplitude), p.mass);
}

/// Largest epsilon any analysis will request; sizes the automatic cutoff.
inline double largest_epsilon(const RunConfig& cfg) {
  double e = 0.0;
  for (double x : cfg.schedules.epsilon) e = std::max(e, x);
  for (const auto& [x, h] : cfg.schedules.coupled) e = std::max(e, x);
  for (const auto& a : cfg.analyses)
    if (const auto* n = a.params.get("epsilon")) e = std::max(e, n->value<double>().value_or(0.0));
  return e > 0.0 ? e : 0.1;
}

/// In-memory and on-disk cache of EpSolutions keyed by problem, grids,
/// (eps, h) and solver tolerances.
template <int N>
class SolutionStore {
 public:
  SolutionStore(std::string identity, std::filesystem::path dir) : identity_(std::move(identity)), dir_(std::move(dir)) {}

  template <class Lag>
  EpSolution<N> get(const Lag& lag, double eps, double h, const TorusGrid<N>& tg, const VelocityGrid<N>& vg,
                    const SolverConfig& cfg, const EpSolution<N>* warm) {
    const std::string key = identity_ + "|eps=" + format_double(eps) + "|h=" + format_double(h);
    const std::string hash = content_hash(key);
    if (auto it = memory_.find(hash); it != memory_.end()) {
      ++hits_;
      return it->second;
    }
    const auto stem = (dir_ / hash).string();
    EpSolution<N> sol;
    if (!dir_.empty() && std::filesystem::exists(stem + ".json")) {
      sol = read_solution<N>(stem);
      ++hits_;
    } else {
      sol = solve_pair(lag, eps, h, tg, vg, cfg, warm);
      ++solves_;
      if (!dir_.empty()) {
        std::filesystem::create_directories(dir_);
        write_solution(stem, sol);
      }
    }
    memory_.emplace(hash, sol);
    return sol;
  }

  [[nodiscard]] int hits() const { return hits_; }
  [[nodiscard]] int solves() const { return solves_; }

 private:
  std::string identity_;
  std::filesystem::path dir_;
  std::map<std::string, EpSolution<N>> memory_;
  int hits_ = 0;
  int solves_ = 0;
};

/// Artifact writer honouring the configured formats; records file names.
class OutputSink {
 public:
  OutputSink(std::filesystem::path dir, OutputConfig formats) : dir_(std::move(dir)), formats_(formats) {
    std::filesystem::create_directories(dir_);
  }

  [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }
  [[nodiscard]] const OutputConfig& formats() const { return formats_; }

  void text(const std::string& name, const std::string& body, std::vector<std::string>& artifacts) {
    write_text((dir_ / name).string(), body);
    artifacts.push_back(name);
  }
  void csv(const std::string& name, const std::string& body, std::vector<std::string>& artifacts) {
    if (formats_.csv) text(name, body, artifacts);
  }
  void svg(const std::string& name, const std::string& body, std::vector<std::string>& artifacts) {
    if (formats_.svg) text(name, body, artifacts);
  }
  void json(const std::string& name, const nlohmann::json& body, std::vector<std::string>& artifacts) {
    if (formats_.json) text(name, body.dump(2) + "\n", artifacts);
  }

 private:
  std::filesystem::path dir_;
  OutputConfig formats_;
};

template <int N>
nlohmann::json field_json(const ScalarField<N>& f) {
  nlohmann::json values = nlohmann::json::array();
  for (double v : f.values()) values.push_back(json_number(v));
  return {{"N", N}, {"M", f.grid().points_per_axis()}, {"values", values}};
}

inline nlohmann::json numbers(const std::vector<double>& xs) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : xs) a.push_back(json_number(x));
  return a;
}

inline nlohmann::json fit_json(const ExtrapolationFit& f) {
  return {{"model", f.model},
          {"limit", json_number(f.limit)},
          {"coefficients", numbers(f.coefficients)},
          {"residual", json_number(f.residual)},
          {"points_used", f.points_used}};
}

/// One analysis outcome: metrics, verdict inputs and artifacts.
struct AnalysisOutcome {
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json data = nlohmann::json::object();  // per-analysis report only
  bool intrinsic_pass = true;
  std::vector<std::string> artifacts;
};

template <int N>
class Pipeline {
 public:
  Pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log)
      : cfg_(cfg),
        lag_(make_lagrangian<N>(cfg.problem)),
        tg_(cfg.grids.M),
        hyp_(probe_hypotheses<N>(lag_)),
        vg_(cfg.grids.R ? *cfg.grids.R : default_cutoff(hyp_.velocity_bound, largest_epsilon(cfg)), cfg.grids.Mv),
        sink_(out_dir, cfg.output),
        store_(identity(), out_dir / "cache"),
        log_(log) {
    scfg_.tolerance = cfg.tolerances.solver;
    scfg_.max_iterations = cfg.tolerances.max_iterations;
  }

  /// Runs every analysis in dependency order; returns the summary document.
  nlohmann::json run() {
    static const std::map<std::string, int> stage{{"hypotheses", 0},   {"solve", 1},       {"measure", 2},
                                                  {"continuation", 3}, {"critical_value", 3}, {"rates", 3},
                                                  {"varadhan", 3},     {"free_energy", 3}, {"ldp", 4},
                                                  {"discrete", 4}};
    std::vector<std::size_t> order(cfg_.analyses.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return stage.at(cfg_.analyses[a].type) < stage.at(cfg_.analyses[b].type);
    });
    std::vector<nlohmann::json> entries(cfg_.analyses.size());
    for (std::size_t i : order) entries[i] = run_one(cfg_.analyses[i]);

    nlohmann::json summary;
    summary["schema"] = "mather-ep/summary";
    summary["schema_version"] = kSummaryVersion;
    summary["tool_version"] = kToolVersion;
    summary["problem"] = lag_.describe();
    summary["grids"] = {{"N", N},
                        {"M", tg_.points_per_axis()},
                        {"Mv", vg_.points_per_axis()},
                        {"R", json_number(vg_.cutoff())},
                        {"R_auto", !cfg_.grids.R.has_value()}};
    summary["analyses"] = entries;
    bool pass = true;
    bool errors = false;
    for (const auto& e : entries) {
      pass = pass && e["pass"].get<bool>();
      errors = errors || e["status"] == "error";
    }
    summary["pass"] = pass;
    summary["errors"] = errors;
    write_json((sink_.dir() / "summary.json").string(), summary);
    log_ << "solutions computed " << store_.solves() << ", cache hits " << store_.hits() << "\n";
    return summary;
  }

 private:
  std::string identity() const {
    return "mather-ep-cache-v1|" + lag_.describe() + "|M=" + std::to_string(tg_.points_per_axis()) +
           "|Mv=" + std::to_string(vg_.points_per_axis()) + "|R=" + format_double(vg_.cutoff()) +
           "|tol=" + format_double(scfg_.tolerance) + "|maxit=" + std::to_string(scfg_.max_iterations);
  }

  SolveHook<N> hook() {
    return [this](double eps, double h, const EpSolution<N>* warm) {
      return store_.get(lag_, eps, h, tg_, vg_, scfg_, warm);
    };
  }

  const ContinuationResult<N>& fixed() {
    if (!fixed_) fixed_ = continue_in_epsilon<N>(lag_, *cfg_.schedules.h, cfg_.schedules.epsilon, tg_, vg_, scfg_, hook());
    return *fixed_;
  }

  const ContinuationResult<N>& joint() {
    if (!joint_) {
      joint_ = continue_in_h<N>(lag_, cfg_.schedules.coupled, tg_, vg_, scfg_, hook());
      grad_ = grad_phi0(joint_->phi, default_kink_threshold<N>(hyp_, tg_));
      aubry_ = aubry_projection(joint_->phi, joint_->phi_bar, cfg_.tolerances.aubry);
    }
    return *joint_;
  }

  nlohmann::json run_one(const AnalysisConfig& a) {
    const auto t0 = std::chrono::steady_clock::now();
    nlohmann::json entry;
    entry["id"] = a.id;
    entry["type"] = a.type;
    AnalysisOutcome out;
    try {
      dispatch(a, out);
      entry["status"] = "ok";
    } catch (const Error& e) {
      entry["status"] = "error";
      entry["error"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
      out.intrinsic_pass = false;
    } catch (const std::exception& e) {
      entry["status"] = "error";
      entry["error"] = {{"code", "InternalError"}, {"message", e.what()}};
      out.intrinsic_pass = false;
    }
    entry["metrics"] = out.metrics;
    nlohmann::json checks = nlohmann::json::array();
    bool pass = out.intrinsic_pass;
    for (const auto& ex : a.expect) {
      nlohmann::json c{{"metric", ex.metric}, {"expected", json_number(ex.value)}};
      if (ex.abs) c["abs"] = json_number(*ex.abs);
      if (ex.rel) c["rel"] = json_number(*ex.rel);
      bool ok = false;
      if (out.metrics.contains(ex.metric) && out.metrics[ex.metric].is_number()) {
        const double obs = out.metrics[ex.metric].get<double>();
        const double tol = std::max(ex.abs.value_or(0.0), ex.rel.value_or(0.0) * std::abs(ex.value));
        ok = std::abs(obs - ex.value) <= tol;
        c["observed"] = json_number(obs);
      } else {
        c["observed"] = nullptr;
      }
      c["pass"] = ok;
      pass = pass && ok;
      checks.push_back(c);
    }
    entry["checks"] = checks;
    entry["pass"] = pass;
    std::sort(out.artifacts.begin(), out.artifacts.end());
    entry["artifacts"] = out.artifacts;
    nlohmann::json report = entry;
    for (auto it = out.data.begin(); it != out.data.end(); ++it) report[it.key()] = it.value();
    std::vector<std::string> ignored;
    sink_.json(a.id + ".json", report, ignored);
    if (cfg_.output.json) entry["artifacts"].push_back(a.id + ".json");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_ << "analysis " << a.id << " (" << a.type << "): " << entry["status"].get<std::string>()
         << (pass ? ", pass" : ", fail") << ", " << secs << " s";
    if (entry.contains("error")) log_ << ", " << entry["error"]["message"].get<std::string>();
    log_ << "\n";
    return entry;
  }

  void dispatch(const AnalysisConfig& a, AnalysisOutcome& out) {
    if (a.type == "hypotheses") return hypotheses(out);
    if (a.type == "solve") return solve(a, out);
    if (a.type == "measure") return measure(a, out);
    if (a.type == "continuation") return continuation(a, out);
    if (a.type == "rates") return rates(a, out);
    if (a.type == "ldp") return ldp(a, out);
    if (a.type == "varadhan") return varadhan(a, out);
    if (a.type == "free_energy") return free_energy_analysis(a, out);
    if (a.type == "critical_value") return critical_value(a, out);
    if (a.type == "discrete") return discrete(a, out);
    throw Error(ErrorCode::config_error, "unknown analysis type " + a.type);
  }

  void hypotheses(AnalysisOutcome& out) {
    out.metrics = {{"superlinearity_ok", hyp_.superlinearity_ok ? 1 : 0},
                   {"convexity_min_second_difference", json_number(hyp_.convexity_min_second_difference)},
                   {"C", json_number(hyp_.C)},
                   {"Gamma", json_number(hyp_.Gamma)},
                   {"velocity_bound", json_number(hyp_.velocity_bound)},
                   {"lx_lipschitz_in_v", json_number(hyp_.lx_lipschitz_in_v)},
                   {"cutoff", json_number(vg_.cutoff())}};
  }

  void solve(const AnalysisConfig& a, AnalysisOutcome& out) {
    const double eps = param_double(a, "epsilon");
    const double h = param_double(a, "h");
    const auto sol = store_.get(lag_, eps, h, tg_, vg_, scfg_, nullptr);
    const auto theta = marginal_theta(sol);
    double dev = 0.0;
    for (double t : theta.values()) dev = std::max(dev, std::abs(t - 1.0));
    out.metrics = {{"epsilon", json_number(eps)},
                   {"h", json_number(h)},
                   {"lambda", json_number(sol.lambda)},
                   {"lambda_bar", json_number(sol.lambda_bar)},
                   {"lambda_over_h", json_number(sol.lambda / h)},
                   {"iterations", sol.iterations},
                   {"final_residual", json_number(sol.final_residual)},
                   {"theta_max_deviation", json_number(dev)}};
    if (param_bool(a, "perron", false)) {
      const auto pr = perron_eigenvalue(lag_, eps, h, tg_, vg_);
      const double log_solver = -sol.lambda / (eps * h);
      out.metrics["perron_lambda"] = json_number(pr.lambda);
      out.metrics["perron_log_eigenvalue"] = json_number(pr.log_eigenvalue);
      out.metrics["perron_relative_gap"] = json_number(std::abs(std::expm1(log_solver - pr.log_eigenvalue)));
    }
    write_text((sink_.dir() / (a.id + ".phi.bin")).string(), field_binary(sol.phi));
    write_text((sink_.dir() / (a.id + ".phi_bar.bin")).string(), field_binary(sol.phi_bar));
    out.artifacts.push_back(a.id + ".phi.bin");
    out.artifacts.push_back(a.id + ".phi_bar.bin");
    sink_.json(a.id + ".solution.json", solution_sidecar(sol), out.artifacts);
    sink_.csv(a.id + ".phi.csv", field_csv(sol.phi), out.artifacts);
    sink_.svg(a.id + ".phi.svg", svg_field("phi at eps=" + detail::num(eps) + ", h=" + detail::num(h), sol.phi),
              out.artifacts);
    out.data["field"] = field_json(sol.phi);
  }

  void measure(const AnalysisConfig& a, AnalysisOutcome& out) {
    const double eps = param_double(a, "epsilon");
    const double h = param_double(a, "h");
    const int kmax = static_cast<int>(param_double(a, "k_max", 5.0));
    const auto sol = store_.get(lag_, eps, h, tg_, vg_, scfg_, nullptr);
    const auto rep = measure_report(sol, lag_, vg_, kmax);
    out.metrics = {{"epsilon", json_number(eps)},
                   {"h", json_number(h)},
                   {"lambda", json_number(rep.lambda)},
                   {"action", json_number(rep.action)},
                   {"entropy", json_number(rep.entropy)},
                   {"effective_H", json_number(rep.effective_H)},
                   {"identity_gap", json_number(rep.identity_gap)},
                   {"mass", json_number(rep.mass)},
                   {"theta_fixed_point_residual", json_number(rep.theta_fixed_point_residual)},
                   {"holonomy_max", json_number(max_holonomy_residual(rep.holonomy_residuals))}};
    nlohmann::json hol = nlohmann::json::array();
    for (const auto& r : rep.holonomy_residuals) {
      std::vector<int> k(r.mode.begin(), r.mode.end());
      hol.push_back({{"mode", k}, {"real", json_number(r.real)}, {"imag", json_number(r.imag)}});
    }
    out.data["holonomy_residuals"] = hol;
    const auto mu = build_density(sol, lag_, vg_);
    write_text((sink_.dir() / (a.id + ".density.bin")).string(), density_binary(mu));
    out.artifacts.push_back(a.id + ".density.bin");
    if (param_bool(a, "density_csv", false)) sink_.csv(a.id + ".density.csv", density_csv(mu), out.artifacts);
    sink_.csv(a.id + ".marginal.csv", field_csv(mu.marginal()), out.artifacts);
    sink_.svg(a.id + ".marginal.svg", svg_field("x-marginal of mu", mu.marginal()), out.artifacts);
    out.data["field"] = field_json(mu.marginal());
  }

  void continuation_artifacts(const std::string& id, const ContinuationResult<N>& c, AnalysisOutcome& out,
                              std::optional<double> rule = {}) {
    std::string csv = "epsilon,h,lambda,lambda_over_h,iterations,final_residual\n";
    for (const auto& p : c.schedule)
      csv += format_double(p.epsilon) + "," + format_double(p.h) + "," + format_double(p.lambda) + "," +
             format_double(p.lambda_over_h) + "," + std::to_string(p.iterations) + "," + format_double(p.final_residual) +
             "\n";
    sink_.csv(id + ".csv", csv, out.artifacts);
    PlotSeries s{c.epsilons(), c.lambda_over_h(), "lambda/h"};
    sink_.svg(id + ".svg", svg_line_plot("lambda/h along the schedule", "epsilon", "lambda/h", {s}, rule, true),
              out.artifacts);
    out.data["epsilons"] = numbers(c.epsilons());
    std::vector<double> hs;
    for (const auto& p : c.schedule) hs.push_back(p.h);
    out.data["hs"] = numbers(hs);
    out.data["lambda_over_h"] = numbers(c.lambda_over_h());
    out.data["limit"] = json_number(c.H_limit);
    if (rule) out.data["reference"] = json_number(*rule);
    out.data["fit"] = fit_json(c.fit);
  }

  void continuation(const AnalysisConfig& a, AnalysisOutcome& out) {
    const bool is_joint = schedule_kind(a) == "joint";
    const auto& c = is_joint ? joint() : fixed();
    out.metrics = {{"H_limit", json_number(c.H_limit)},
                   {"fit_residual", json_number(c.fit.residual)},
                   {"points", static_cast<int>(c.schedule.size())},
                   {"last_lambda_over_h", json_number(c.schedule.back().lambda_over_h)}};
    continuation_artifacts(a.id, c, out);
    write_text((sink_.dir() / (a.id + ".phi.bin")).string(), field_binary(c.phi));
    write_text((sink_.dir() / (a.id + ".phi_bar.bin")).string(), field_binary(c.phi_bar));
    out.artifacts.push_back(a.id + ".phi.bin");
    out.artifacts.push_back(a.id + ".phi_bar.bin");
    sink_.csv(a.id + ".phi.csv", field_csv(c.phi), out.artifacts);
    sink_.csv(a.id + ".phi_bar.csv", field_csv(c.phi_bar), out.artifacts);
    out.data["field"] = field_json(c.phi);
    if (is_joint) {
      std::size_t kinks = 0;
      for (bool k : grad_->kink) kinks += k ? 1 : 0;
      out.metrics["aubry_size"] = static_cast<int>(aubry_.size());
      out.metrics["kink_count"] = static_cast<int>(kinks);
      std::string csv;
      for (int d = 0; d < N; ++d) csv += "i" + std::to_string(d) + ",";
      for (int d = 0; d < N; ++d) csv += "grad" + std::to_string(d) + ",";
      csv += "kink\n";
      for (std::size_t i = 0; i < tg_.size(); ++i) {
        const auto idx = tg_.indices(i);
        for (int d = 0; d < N; ++d) csv += std::to_string(idx[d]) + ",";
        for (int d = 0; d < N; ++d) csv += format_double(grad_->gradient[i][d]) + ",";
        csv += grad_->kink[i] ? "1\n" : "0\n";
      }
      sink_.csv(a.id + ".gradient.csv", csv, out.artifacts);
      out.data["aubry_nodes"] = aubry_;
    }
  }

  void rates(const AnalysisConfig& a, AnalysisOutcome& out) {
    const auto& c = joint();
    out.metrics["H_limit"] = json_number(c.H_limit);
    if (a.params.get("points")) {
      int k = 0;
      for (const auto& row : param_rows(a, "points")) {
        if (static_cast<int>(row.size()) != 2 * N)
          throw Error(ErrorCode::config_error, a.id + ".points rows must be [x..., v...]");
        Vec<N> x{}, v{};
        for (int d = 0; d < N; ++d) x[d] = row[d], v[d] = row[N + d];
        out.metrics["I_" + std::to_string(k++)] = json_number(rate_I<N>(lag_, *grad_, c.H_limit, tg_.nearest(x), v));
      }
    }
    if (a.params.get("gradient_at")) {
      int k = 0;
      for (const auto& row : param_rows(a, "gradient_at")) {
        if (static_cast<int>(row.size()) != N) throw Error(ErrorCode::config_error, a.id + ".gradient_at rows need N entries");
        Vec<N> x{};
        for (int d = 0; d < N; ++d) x[d] = row[d];
        const auto node = tg_.nearest(x);
        out.metrics["grad_norm_" + std::to_string(k++)] =
            grad_->kink[node] ? json_number(kInf) : json_number(norm<N>(grad_->gradient[node]));
      }
    }
    // max |I - L| = max |grad phi0 . v - Hbar0| over smooth nodes, |v| <= 1
    double dev = 0.0;
    for (std::size_t i = 0; i < tg_.size(); ++i) {
      if (grad_->kink[i]) continue;
      for (std::size_t j = 0; j < vg_.size(); ++j) {
        const Vec<N> v = vg_.node(j);
        if (norm<N>(v) > 1.0) continue;
        dev = std::max(dev, std::abs(rate_I<N>(lag_, *grad_, c.H_limit, i, v) - lag_(tg_.node(i), v)));
      }
    }
    out.metrics["max_abs_I_minus_L"] = json_number(dev);
    std::size_t kinks = 0;
    for (bool k : grad_->kink) kinks += k ? 1 : 0;
    out.metrics["kink_count"] = static_cast<int>(kinks);
    out.metrics["aubry_size"] = static_cast<int>(aubry_.size());
    out.data["aubry_nodes"] = aubry_;
  }

  PhaseBox<N> box_of(const AnalysisConfig& a) const {
    PhaseBox<N> b;
    const auto xs = param_rows(a, "x");
    const auto vs = param_rows(a, "v");
    for (int d = 0; d < N; ++d) {
      b.x[d] = {xs[d][0], xs[d][1]};
      b.v[d] = {vs[d][0], vs[d][1]};
    }
    b.closed = param_bool(a, "closed", true);
    return b;
  }

  void ldp(const AnalysisConfig& a, AnalysisOutcome& out) {
    const auto regime = param_string(a, "regime", "fixed_h");
    const auto box = box_of(a);
    const double tol = param_double(a, "tolerance", 0.01);
    LdpReport<N> rep;
    if (regime == "fixed_h") {
      rep = ldp_fixed_h<N>(lag_, fixed(), vg_, box, tol);
    } else if (regime == "joint") {
      const auto& c = joint();
      rep = ldp_joint<N>(lag_, c, vg_, box, aubry_, *grad_, tol, param_double(a, "support_distance", 0.05));
    } else {
      const auto& c = joint();
      rep = ldp_away<N>(lag_, c, vg_, box, aubry_, tol);
      Vec<N> centre{};
      for (int d = 0; d < N; ++d) centre[d] = 0.5 * (box.x[d][0] + box.x[d][1]);
      ScalarField<N> s(tg_);
      for (std::size_t i = 0; i < tg_.size(); ++i) s[i] = c.phi[i] + c.phi_bar[i];
      s += -s.min();
      out.metrics["barrier_at_centre"] = json_number(s.at(centre));
    }
    out.intrinsic_pass = rep.pass && rep.sandwich;
    out.metrics["limit"] = json_number(rep.limit);
    out.metrics["bound"] = json_number(rep.bound);
    out.metrics["lower_bound"] = json_number(rep.lower_bound);
    out.metrics["tolerance"] = json_number(rep.tolerance);
    out.metrics["fit_residual"] = json_number(rep.fit.residual);
    out.data["regime"] = std::string(to_string(rep.regime));
    out.data["closed"] = rep.box.closed;
    out.data["epsilons"] = numbers(rep.epsilons);
    out.data["hs"] = numbers(rep.hs);
    out.data["scaled_log_masses"] = numbers(rep.scaled_log_masses);
    out.data["dropped_epsilons"] = numbers(rep.dropped_epsilons);
    out.data["limit"] = json_number(rep.limit);
    out.data["bound"] = json_number(rep.bound);
    out.data["verdict"] = {{"limit", json_number(rep.limit)},
                           {"bound", json_number(rep.bound)},
                           {"regime", std::string(to_string(rep.regime))},
                           {"pass", rep.pass},
                           {"sandwich", rep.sandwich}};
    out.data["fit"] = fit_json(rep.fit);
    std::string csv = "epsilon,h,scaled_log_mass\n";
    for (std::size_t i = 0; i < rep.epsilons.size(); ++i)
      csv += format_double(rep.epsilons[i]) + "," + format_double(rep.hs[i]) + "," +
             format_double(rep.scaled_log_masses[i]) + "\n";
    sink_.csv(a.id + ".csv", csv, out.artifacts);
    sink_.svg(a.id + ".svg", ldp_plot(out.data), out.artifacts);
  }

  void varadhan(const AnalysisConfig& a, AnalysisOutcome& out) {
    const auto pv = param_doubles(a, "p");
    Vec<N> p{};
    for (int d = 0; d < N; ++d) p[d] = pv[d];
    const auto& c = fixed();
    const auto res = varadhan_check<N>(lag_, c.solutions, vg_, p, c.H_limit);
    const double tol = param_double(a, "tolerance", 0.02);
    out.intrinsic_pass = std::abs(res.limit - res.expected) <= tol;
    out.metrics = {{"limit", json_number(res.limit)},
                   {"expected", json_number(res.expected)},
                   {"difference", json_number(res.limit - res.expected)}};
    out.data["epsilons"] = numbers(res.epsilons);
    out.data["values"] = numbers(res.values);
    out.data["fit"] = fit_json(res.fit);
  }

  void free_energy_analysis(const AnalysisConfig& a, AnalysisOutcome& out) {
    const auto pv = param_doubles(a, "p");
    const auto xv = param_doubles(a, "x");
    Vec<N> p{}, x{};
    for (int d = 0; d < N; ++d) p[d] = pv[d], x[d] = xv[d];
    const auto& c = joint();
    const auto res = free_energy<N>(lag_, c.solutions, vg_, p, tg_.nearest(x), *grad_, c.H_limit);
    const double tol = param_double(a, "tolerance", 0.05);
    out.intrinsic_pass = std::abs(res.limit - res.expected) <= tol;
    out.metrics = {{"limit", json_number(res.limit)},
                   {"expected", json_number(res.expected)},
                   {"difference", json_number(res.limit - res.expected)}};
    out.data["epsilons"] = numbers(res.epsilons);
    out.data["values"] = numbers(res.values);
    out.data["fit"] = fit_json(res.fit);
  }

  void critical_value(const AnalysisConfig& a, AnalysisOutcome& out) {
    const double h = param_double(a, "h", cfg_.schedules.h);
    const auto lattice = VelocityGrid<N>::lattice(tg_, h, vg_.cutoff());
    const PathGraph<N> graph(lag_, h, tg_, lattice);
    const double oracle = min_mean_cycle(graph);
    std::optional<ContinuationResult<N>> own;
    if (h != *cfg_.schedules.h) own = continue_in_epsilon<N>(lag_, h, cfg_.schedules.epsilon, tg_, vg_, scfg_, hook());
    const auto& c = own ? *own : fixed();
    const auto y = c.lambda_over_h();
    bool monotone = true;
    for (std::size_t i = 1; i < y.size(); ++i)
      if ((y[i] - y[i - 1]) * (y[1] - y[0]) < 0.0) monotone = false;
    const double tol = param_double(a, "tolerance", 5e-2);
    out.intrinsic_pass = std::abs(c.H_limit - oracle) <= tol;
    out.metrics = {{"oracle", json_number(oracle)},
                   {"extrapolated", json_number(c.H_limit)},
                   {"difference", json_number(c.H_limit - oracle)},
                   {"monotone", monotone ? 1 : 0},
                   {"lattice_Mv", lattice.points_per_axis()}};
    continuation_artifacts(a.id, c, out, oracle);
  }

  void discrete(const AnalysisConfig& a, AnalysisOutcome& out) {
    const double h = param_double(a, "h");
    const double tol = param_double(a, "tolerance", 1e-6);
    const auto lattice = VelocityGrid<N>::lattice(tg_, h, param_double(a, "cutoff", vg_.cutoff()));
    const PathGraph<N> g(lag_, h, tg_, lattice);
    const double hbar = min_mean_cycle(g);
    const auto all = mane_all_pairs(g, hbar);
    const std::size_t n = g.size();
    const auto omega = nonwandering_set(all, n, tol);
    double min_diag = kInf;
    for (std::size_t x = 0; x < n; ++x) min_diag = std::min(min_diag, all[x * n + x]);
    const std::size_t source = a.params.get("source") ? static_cast<std::size_t>(param_double(a, "source")) : omega.at(0);
    const int k_max = static_cast<int>(param_double(a, "k_max", 0.0));
    const int window = static_cast<int>(param_double(a, "window", 0.0));
    const auto table = mane_S(g, source, hbar, k_max, window);
    const auto cal = calibrated_from_barrier(g, source, hbar, k_max, window, tol);
    out.metrics = {{"hbar", json_number(hbar)},
                   {"omega_size", static_cast<int>(omega.size())},
                   {"min_diagonal", json_number(min_diag)},
                   {"source", static_cast<int>(source)},
                   {"k_max", table.k_max},
                   {"window", table.window},
                   {"calibration_residual", json_number(cal.residual)},
                   {"representation", json_number(representation_check(cal.u, all, omega))},
                   {"gradient_check",
                    json_number(graph_gradient_check(g, lag_, cal, default_kink_threshold<N>(hyp_, tg_)))}};
    try {
      const auto hb = hard_bellman<N>(lag_, h, tg_, lattice, hbar, {cfg_.tolerances.hard_bellman, 200000, source});
      double lo = kInf, hi = -kInf;
      for (std::size_t x = 0; x < n; ++x) {
        lo = std::min(lo, cal.u[x] - hb.phi[x]);
        hi = std::max(hi, cal.u[x] - hb.phi[x]);
      }
      out.metrics["hard_bellman_spread"] = json_number(hi - lo);
    } catch (const Error& e) {
      out.data["hard_bellman_error"] = e.what();
    }
    const auto sep = separating_subaction(g, hbar, all, omega, param_double(a, "separation_tolerance", 1e-9));
    double off = kInf, on = 0.0;
    std::vector<bool> in_omega(n, false);
    for (auto p : omega) in_omega[p] = true;
    for (std::size_t x = 0; x < n; ++x) {
      if (in_omega[x]) on = std::max(on, std::abs(sep.gaps[x]));
      else off = std::min(off, sep.gaps[x]);
    }
    out.metrics["omega_is_everything"] = sep.omega_is_everything ? 1 : 0;
    out.metrics["separation_centres"] = static_cast<int>(sep.centers.size());
    out.metrics["separation_min_gap_off_omega"] = json_number(off);
    out.metrics["separation_max_gap_on_omega"] = json_number(on);
    out.metrics["separation_lipschitz"] = json_number(sep.lipschitz);
    out.data["omega"] = omega;
    out.data["field"] = field_json(cal.u);
    std::string csv = "node,S_to_source,S_from_source,peierls\n";
    for (std::size_t x = 0; x < n; ++x)
      csv += std::to_string(x) + "," + format_double(table.to_source[x]) + "," + format_double(table.from_source[x]) +
             "," + format_double(table.peierls[x]) + "\n";
    sink_.csv(a.id + ".mane.csv", csv, out.artifacts);
    write_text((sink_.dir() / (a.id + ".calibrated.bin")).string(), field_binary(cal.u));
    write_text((sink_.dir() / (a.id + ".separating.bin")).string(), field_binary(sep.u));
    out.artifacts.push_back(a.id + ".calibrated.bin");
    out.artifacts.push_back(a.id + ".separating.bin");
    sink_.csv(a.id + ".calibrated.csv", field_csv(cal.u), out.artifacts);
    sink_.csv(a.id + ".separating.csv", field_csv(sep.u), out.artifacts);
    sink_.svg(a.id + ".calibrated.svg", svg_field("calibrated subaction", cal.u), out.artifacts);
  }

 public:
  static std::string ldp_plot(const nlohmann::json& report) {
    PlotSeries s;
    for (const auto& e : report.at("epsilons")) s.x.push_back(e.get<double>());
    for (const auto& e : report.at("scaled_log_masses")) s.y.push_back(e.get<double>());
    s.label = "scaled log-mass";
    const auto& b = report.at("bound");
    return svg_line_plot("scaled log-mass against epsilon", "epsilon", "scaled log-mass", {s},
                         b.is_number() ? std::optional<double>(b.get<double>()) : std::nullopt, true);
  }

 private:
  const RunConfig& cfg_;
  LagrangianSpec<N> lag_;
  TorusGrid<N> tg_;
  HypothesisReport hyp_;
  VelocityGrid<N> vg_;
  SolverConfig scfg_;
  OutputSink sink_;
  SolutionStore<N> store_;
  std::ostream& log_;
  std::optional<ContinuationResult<N>> fixed_;
  std::optional<ContinuationResult<N>> joint_;
  std::optional<GradientField<N>> grad_;
  std::vector<std::size_t> aubry_;
};

/// SVG for a written report: ldp (scaled log-mass vs eps with the bound as a
/// rule), continuation (lambda/h vs eps) or field (the report's field block).
inline std::string emit_plot(const nlohmann::json& report, const std::string& kind) {
  try {
    if (kind == "ldp" && report.contains("scaled_log_masses")) return Pipeline<1>::ldp_plot(report);
    if (kind == "continuation" && report.contains("lambda_over_h")) {
      PlotSeries s;
      for (const auto& e : report.at("epsilons")) s.x.push_back(e.get<double>());
      for (const auto& e : report.at("lambda_over_h")) s.y.push_back(e.get<double>());
      s.label = "lambda/h";
      std::optional<double> rule;
      if (report.contains("reference") && report["reference"].is_number()) rule = report["reference"].get<double>();
      return svg_line_plot("lambda/h along the schedule", "epsilon", "lambda/h", {s}, rule, true);
    }
    if (kind == "field" && report.contains("field")) {
      const auto& f = report.at("field");
      const int n = f.at("N").get<int>();
      const int m = f.at("M").get<int>();
      std::vector<double> values;
      for (const auto& v : f.at("values")) values.push_back(v.is_number() ? v.get<double>() : kInf);
      if (n == 1) return svg_field("field", ScalarField<1>(TorusGrid<1>(m), values));
      if (n == 2) return svg_heatmap("field", m, values);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::unknown_report_kind, std::string("malformed report: ") + e.what());
  }
  throw Error(ErrorCode::unknown_report_kind, "report does not support plot kind '" + kind + "'");
}

/// Output directory: the environment override wins over the config.
inline std::filesystem::path output_directory(const RunConfig& cfg) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return cfg.output.directory;
}

/// Full run: returns the process exit code (0 ok, 2 analysis errors).
inline int run_config(const RunConfig& cfg, std::ostream& console) {
  const auto dir = output_directory(cfg);
  std::filesystem::create_directories(dir);
  std::ofstream log(dir / "run.log");
  nlohmann::json summary;
  try {
    if (cfg.problem.dimension == 1) summary = Pipeline<1>(cfg, dir, log).run();
    else summary = Pipeline<2>(cfg, dir, log).run();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config_error) throw;
    summary = {{"schema", "mather-ep/summary"},
               {"schema_version", kSummaryVersion},
               {"tool_version", kToolVersion},
               {"analyses", nlohmann::json::array()},
               {"pass", false},
               {"errors", true},
               {"error", {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}}};
    write_json((dir / "summary.json").string(), summary);
    log << "setup failed: " << e.what() << "\n";
    console << "setup failed: " << e.what() << "\n";
    return 2;
  }
  for (const auto& a : summary["analyses"]) {
    console << (a["pass"].get<bool>() ? "PASS " : "FAIL ") << a["id"].get<std::string>() << " ("
            << a["type"].get<std::string>() << ")";
    if (a.contains("error")) console << ": " << a["error"]["message"].get<std::string>();
    console << "\n";
  }
  console << "summary written to " << (dir / "summary.json").string() << "\n";
  return summary["errors"].get<bool>() ? 2 : 0;
}

}  // namespace mep
