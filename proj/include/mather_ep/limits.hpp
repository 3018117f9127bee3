#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mather_ep/core.hpp"
#include "mather_ep/ep_solver.hpp"
#include "mather_ep/problem.hpp"
#include "mather_ep/torus_grid.hpp"

namespace mep {

struct ExtrapolationFit {
  std::string model;
  double limit = 0.0;
  std::vector<double> coefficients;  // limit first
  double residual = 0.0;             // max |fit - data| over the points used
  std::size_t points_used = 0;
};

namespace detail {

inline ExtrapolationFit least_squares(const std::vector<std::vector<double>>& columns, const std::vector<double>& y,
                                      std::string model) {
  const auto rows = static_cast<Eigen::Index>(y.size());
  const auto cols = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd a(rows, cols);
  Eigen::VectorXd b(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    b(r) = y[r];
    for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = columns[c][r];
  }
  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  ExtrapolationFit fit;
  fit.model = std::move(model);
  fit.limit = x(0);
  fit.coefficients.assign(x.data(), x.data() + x.size());
  fit.residual = (a * x - b).cwiseAbs().maxCoeff();
  fit.points_used = y.size();
  return fit;
}

inline std::pair<std::vector<double>, std::vector<double>> tail(const std::vector<double>& eps,
                                                                const std::vector<double>& y, std::size_t n) {
  const std::size_t k = std::min(n, eps.size());
  return {std::vector<double>(eps.end() - k, eps.end()), std::vector<double>(y.end() - k, y.end())};
}

}  // namespace detail

/// Fit y = limit + a eps ln(1/eps) + b eps on the last three points (fewer
/// points drop the trailing terms).
inline ExtrapolationFit fit_entropic(const std::vector<double>& eps, const std::vector<double>& y) {
  if (eps.empty() || eps.size() != y.size()) throw Error(ErrorCode::precondition_failed, "empty schedule");
  auto [e, v] = detail::tail(eps, y, 3);
  std::vector<std::vector<double>> cols(1, std::vector<double>(e.size(), 1.0));
  if (e.size() >= 2) {
    cols.emplace_back();
    for (double x : e) cols.back().push_back(x * std::log(1.0 / x));
  }
  if (e.size() >= 3) cols.push_back(e);
  return detail::least_squares(cols, v, "limit + a*eps*ln(1/eps) + b*eps");
}

/// Least-squares fit y = limit + a eps on the last three points.
inline ExtrapolationFit fit_affine(const std::vector<double>& eps, const std::vector<double>& y) {
  if (eps.empty() || eps.size() != y.size()) throw Error(ErrorCode::precondition_failed, "empty schedule");
  auto [e, v] = detail::tail(eps, y, 3);
  std::vector<std::vector<double>> cols(1, std::vector<double>(e.size(), 1.0));
  if (e.size() >= 2) cols.push_back(e);
  return detail::least_squares(cols, v, "limit + a*eps");
}

/// Successive gaps must eventually shrink: the last gap has to be smaller than
/// the largest earlier one.
inline void check_cauchy(const std::vector<double>& values) {
  if (values.size() < 3) return;
  double largest = 0.0;
  for (std::size_t i = 1; i + 1 < values.size(); ++i) largest = std::max(largest, std::abs(values[i] - values[i - 1]));
  const double last = std::abs(values.back() - values[values.size() - 2]);
  if (last > 1e-12 && last >= largest)
    throw Error(ErrorCode::not_cauchy, "lambda/h gaps do not shrink along the schedule (last gap " +
                                           std::to_string(last) + ")");
}

struct SchedulePoint {
  double epsilon = 0.0;
  double h = 0.0;
  double lambda = 0.0;
  double lambda_over_h = 0.0;
  int iterations = 0;
  double final_residual = 0.0;
};

template <int N>
struct ContinuationResult {
  bool joint = false;  // false: eps -> 0 at fixed h; true: (eps, h) -> 0
  std::vector<SchedulePoint> schedule;
  std::vector<EpSolution<N>> solutions;
  ScalarField<N> phi;       // terminal phi_h or phi_0
  ScalarField<N> phi_bar;   // terminal phibar_h or phibar_0
  double H_limit = 0.0;     // Hbar_h or Hbar_0
  ExtrapolationFit fit;

  [[nodiscard]] std::vector<double> epsilons() const {
    std::vector<double> e;
    for (const auto& p : schedule) e.push_back(p.epsilon);
    return e;
  }
  [[nodiscard]] std::vector<double> lambda_over_h() const {
    std::vector<double> e;
    for (const auto& p : schedule) e.push_back(p.lambda_over_h);
    return e;
  }
};

/// Replacement for solve_pair inside a schedule, e.g. a caching front end.
template <int N>
using SolveHook = std::function<EpSolution<N>(double eps, double h, const EpSolution<N>* warm)>;

namespace detail {

template <int N, class Lag>
ContinuationResult<N> run_schedule(const Lag& lag, const std::vector<std::pair<double, double>>& points,
                                   const TorusGrid<N>& tgrid, const VelocityGrid<N>& vgrid, const SolverConfig& cfg,
                                   bool joint, const SolveHook<N>& hook) {
  ContinuationResult<N> res;
  res.joint = joint;
  for (const auto& [eps, h] : points) {
    const EpSolution<N>* warm = res.solutions.empty() ? nullptr : &res.solutions.back();
    res.solutions.push_back(hook ? hook(eps, h, warm) : solve_pair(lag, eps, h, tgrid, vgrid, cfg, warm));
    const auto& s = res.solutions.back();
    res.schedule.push_back({eps, h, s.lambda, s.lambda / h, s.iterations, s.final_residual});
  }
  check_cauchy(res.lambda_over_h());
  res.fit = fit_entropic(res.epsilons(), res.lambda_over_h());
  res.H_limit = res.fit.limit;
  res.phi = res.solutions.back().phi;
  res.phi_bar = res.solutions.back().phi_bar;
  return res;
}

inline void require_decreasing(const std::vector<double>& eps) {
  if (eps.empty()) throw Error(ErrorCode::precondition_failed, "empty schedule");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0)) throw Error(ErrorCode::precondition_failed, "epsilon must be positive");
    if (i > 0 && !(eps[i] < eps[i - 1]))
      throw Error(ErrorCode::precondition_failed, "epsilon schedule must be strictly decreasing");
  }
}

}  // namespace detail

/// eps -> 0 at fixed h with warm starts.
template <int N, class Lag>
ContinuationResult<N> continue_in_epsilon(const Lag& lag, double h, const std::vector<double>& eps_schedule,
                                          const TorusGrid<N>& tgrid, const VelocityGrid<N>& vgrid,
                                          const SolverConfig& cfg = {}, const SolveHook<N>& hook = {}) {
  detail::require_decreasing(eps_schedule);
  std::vector<std::pair<double, double>> pts;
  for (double e : eps_schedule) pts.emplace_back(e, h);
  return detail::run_schedule(lag, pts, tgrid, vgrid, cfg, false, hook);
}

/// Coupled schedule (eps_n, h_n) -> 0 with h_n >= eps_n.
template <int N, class Lag>
ContinuationResult<N> continue_in_h(const Lag& lag, const std::vector<std::pair<double, double>>& schedule,
                                    const TorusGrid<N>& tgrid, const VelocityGrid<N>& vgrid,
                                    const SolverConfig& cfg = {}, const SolveHook<N>& hook = {}) {
  std::vector<double> eps;
  for (const auto& [e, h] : schedule) {
    if (h < e) throw Error(ErrorCode::precondition_failed, "coupled schedule needs h_n >= eps_n");
    eps.push_back(e);
  }
  detail::require_decreasing(eps);
  return detail::run_schedule(lag, schedule, tgrid, vgrid, cfg, true, hook);
}

/// Coupled schedule h_n = ratio * eps_n.
inline std::vector<std::pair<double, double>> coupled_schedule(const std::vector<double>& eps, double ratio = 2.0) {
  std::vector<std::pair<double, double>> s;
  for (double e : eps) s.emplace_back(e, ratio * e);
  return s;
}

template <int N>
struct HardBellmanResult {
  ScalarField<N> phi;
  ScalarField<N> phi_bar;
  int iterations = 0;
  double residual = 0.0;  // last sup-norm update of the gauge-fixed iteration
  double drift = 0.0;     // per-sweep constant removed by the gauge; 0 for the right Hbar
  std::vector<std::size_t> argmin;  // forward minimising velocity per node
};

struct HardBellmanConfig {
  double tolerance = 1e-9;
  int max_iterations = 200000;
  std::size_t reference_node = 0;
};

namespace detail {

template <int N>
ScalarField<N> min_plus_fixed_point(const BellmanKernel<N>& kernel, double hbar, const HardBellmanConfig& cfg,
                                    int& iterations, double& residual, double& drift,
                                    std::vector<std::size_t>& argmin) {
  const std::size_t ref = cfg.reference_node;
  const double shift = kernel.h() * hbar;
  ScalarField<N> phi(kernel.torus());
  bool converged = false;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    ScalarField<N> next = kernel.apply_hard(phi);
    next += -shift;
    drift = next[ref] - phi[ref];
    next += -next[ref];
    residual = max_abs_difference(next.values(), phi.values());
    phi = std::move(next);
    iterations = it;
    if (residual <= cfg.tolerance) {
      converged = true;
      break;
    }
  }
  ScalarField<N> t = kernel.apply_hard(phi, &argmin);
  drift = t[ref] - shift - phi[ref];
  if (!converged)
    throw Error(ErrorCode::no_convergence, "min-plus iteration did not settle; drift per sweep " + std::to_string(drift));
  if (std::abs(drift) > cfg.tolerance)
    throw Error(ErrorCode::no_convergence,
                "min-plus iteration drifts by " + std::to_string(drift) + " per sweep; Hbar is not the critical value");
  for (std::size_t i = 0; i < argmin.size(); ++i)
    if (kernel.velocity().on_boundary(argmin[i]))
      throw Error(ErrorCode::cutoff_too_small, "min-plus minimiser on the velocity boundary");
  return phi;
}

}  // namespace detail

/// Calibrated sub-actions of the eps = 0 problem:
///   phi(x)    = min_v phi(x+hv) + h L(x,v) - h Hbar
///   phibar(x) = min_v phibar(x-hv) + h L(x-hv,v) - h Hbar
/// gauge: phi(ref) = 0 and min(phi + phibar) = 0.
template <int N, class Lag>
HardBellmanResult<N> hard_bellman(const Lag& lag, double h, const TorusGrid<N>& tgrid, const VelocityGrid<N>& vgrid,
                                  double hbar, const HardBellmanConfig& cfg = {}) {
  HardBellmanResult<N> res;
  const BellmanKernel<N> fwd(lag, h, tgrid, vgrid, Direction::forward);
  const BellmanKernel<N> bwd(lag, h, tgrid, vgrid, Direction::backward);
  res.phi = detail::min_plus_fixed_point(fwd, hbar, cfg, res.iterations, res.residual, res.drift, res.argmin);
  int it_bar = 0;
  double res_bar = 0.0;
  double drift_bar = 0.0;
  std::vector<std::size_t> argmin_bar;
  res.phi_bar = detail::min_plus_fixed_point(bwd, hbar, cfg, it_bar, res_bar, drift_bar, argmin_bar);
  double m = kInf;
  for (std::size_t i = 0; i < tgrid.size(); ++i) m = std::min(m, res.phi[i] + res.phi_bar[i]);
  res.phi_bar += -m;
  res.iterations = std::max(res.iterations, it_bar);
  res.residual = std::max(res.residual, res_bar);
  return res;
}

template <int N>
struct GradientField {
  TorusGrid<N> grid;
  std::vector<Vec<N>> gradient;
  std::vector<bool> kink;
  double threshold = 0.0;
};

/// Kink threshold 10 * Cbar * dx with Cbar = C + Gamma, the uniform
/// semiconcavity bound of the fixed points.
template <int N>
double default_kink_threshold(const HypothesisReport& rep, const TorusGrid<N>& grid) {
  return 10.0 * (rep.C + rep.Gamma) * grid.spacing();
}

/// Central differences; a node is a kink if any one-sided pair disagrees by
/// more than threshold.
template <int N>
GradientField<N> grad_phi0(const ScalarField<N>& phi, double threshold) {
  const auto& g = phi.grid();
  GradientField<N> out{g, std::vector<Vec<N>>(g.size()), std::vector<bool>(g.size(), false), threshold};
  const double dx = g.spacing();
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (int d = 0; d < N; ++d) {
      auto lo = g.indices(i);
      auto hi = lo;
      lo[d] -= 1;
      hi[d] += 1;
      const double fwd = (phi[g.flat(hi)] - phi[i]) / dx;
      const double bwd = (phi[i] - phi[g.flat(lo)]) / dx;
      out.gradient[i][d] = 0.5 * (fwd + bwd);
      if (std::abs(fwd - bwd) > threshold) out.kink[i] = true;
    }
  }
  return out;
}

/// I(x,v) = L(x,v) + grad phi0(x).v - Hbar0 at a node; +inf on kinks.
template <int N, class Lag>
double rate_I(const Lag& lag, const GradientField<N>& grad, double hbar0, std::size_t node, const Vec<N>& v) {
  if (grad.kink[node]) return kInf;
  return lag(grad.grid.node(node), v) + dot<N>(grad.gradient[node], v) - hbar0;
}

/// I_h(x,v) = (phibar_h(x) + phi_h(x+hv))/h + L(x,v) - Hbar_h.
template <int N, class Lag>
double rate_I_h(const ScalarField<N>& phi_h, const ScalarField<N>& phi_bar_h, const Lag& lag, double h, double hbar_h,
                const Vec<N>& x, const Vec<N>& v) {
  Vec<N> y{};
  for (int d = 0; d < N; ++d) y[d] = x[d] + h * v[d];
  return (phi_bar_h.at(x) + phi_h.at(y)) / h + lag(x, v) - hbar_h;
}

/// Nodes where phi + phibar is within tolerance of its minimum.
template <int N>
std::vector<std::size_t> aubry_projection(const ScalarField<N>& phi0, const ScalarField<N>& phi_bar0, double tolerance) {
  double m = kInf;
  for (std::size_t i = 0; i < phi0.size(); ++i) m = std::min(m, phi0[i] + phi_bar0[i]);
  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < phi0.size(); ++i)
    if (phi0[i] + phi_bar0[i] <= m + tolerance) nodes.push_back(i);
  return nodes;
}

struct FreeEnergyResult {
  std::vector<double> epsilons;
  std::vector<double> values;  // eps ln int exp(p.v/eps) gamma(x,v) dv
  ExtrapolationFit fit;
  double limit = 0.0;
  double expected = 0.0;       // H(grad phi0(x) - p, x) + Hbar0
};

/// Tilted log-partition of the conditional velocity law gamma(x, .) along a
/// schedule of solutions, extrapolated affinely in eps.
template <int N, class Lag>
FreeEnergyResult free_energy(const Lag& lag, const std::vector<EpSolution<N>>& sols, const VelocityGrid<N>& vgrid,
                             const Vec<N>& p, std::size_t node, const GradientField<N>& grad, double hbar0) {
  if (sols.empty()) throw Error(ErrorCode::precondition_failed, "empty schedule");
  if (grad.kink[node]) throw Error(ErrorCode::precondition_failed, "free energy requested at a kink node");
  FreeEnergyResult res;
  for (const auto& s : sols) {
    const BellmanKernel<N> k(lag, s.h, s.phi.grid(), vgrid, Direction::forward);
    const double temp = s.epsilon * s.h;
    std::vector<double> logs(vgrid.size());
    double peak = -kInf;
    for (std::size_t j = 0; j < vgrid.size(); ++j) {
      const double e = k.cost(node, j) + k.target_value(s.phi.values(), node, j) - s.phi[node] - s.lambda;
      logs[j] = dot<N>(p, vgrid.node(j)) / s.epsilon - e / temp;
      peak = std::max(peak, logs[j]);
    }
    for (std::size_t j = 0; j < vgrid.size(); ++j)
      if (vgrid.on_boundary(j) && logs[j] - peak > std::log(1e-12))
        throw Error(ErrorCode::cutoff_too_small, "tilted integrand leaks mass at the velocity boundary");
    res.epsilons.push_back(s.epsilon);
    res.values.push_back(s.epsilon * (std::log(vgrid.cell_volume()) + log_sum_exp(logs)));
  }
  res.fit = fit_affine(res.epsilons, res.values);
  res.limit = res.fit.limit;
  Vec<N> q{};
  for (int d = 0; d < N; ++d) q[d] = grad.gradient[node][d] - p[d];
  res.expected = eval_H<N>(lag, q, grad.grid.node(node), vgrid) + hbar0;
  return res;
}

}  // namespace mep
