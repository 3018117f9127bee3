#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "mather_ep/core.hpp"
#include "mather_ep/problem.hpp"
#include "mather_ep/torus_grid.hpp"

namespace mep {

enum class Direction { forward, backward };

/// Discretised Bellman kernel. Forward: cost h L(x,v), target x + h v.
/// Backward: cost h L(x - h v, v), target x - h v. Because x is a grid node,
/// the interpolation offsets and weights of the target depend only on v.
template <int N>
class BellmanKernel {
 public:
  template <class Lag>
  BellmanKernel(const Lag& lag, double h, const TorusGrid<N>& tgrid, const VelocityGrid<N>& vgrid,
                Direction dir)
      : h_(h), tgrid_(tgrid), vgrid_(vgrid), dir_(dir) {
    if (!(h > 0.0)) throw Error(ErrorCode::precondition_failed, "time step must be positive");
    const std::size_t nx = tgrid.size();
    const std::size_t nv = vgrid.size();
    const double sign = dir == Direction::forward ? 1.0 : -1.0;
    const int m = tgrid.points_per_axis();
    offsets_.resize(nv);
    weights_.resize(nv);
    for (std::size_t j = 0; j < nv; ++j) {
      const Vec<N> v = vgrid.node(j);
      Index<N> base{};
      Vec<N> frac{};
      for (int d = 0; d < N; ++d) {
        const double t = sign * h * v[d] * m;
        double fl = std::floor(t);
        double f = t - fl;
        if (f < 1e-11) {
          f = 0.0;
        } else if (f > 1.0 - 1e-11) {
          f = 0.0;
          fl += 1.0;
        }
        base[d] = static_cast<int>(fl);
        frac[d] = f;
      }
      offsets_[j] = base;
      for (int c = 0; c < kCorners; ++c) {
        double w = 1.0;
        for (int d = 0; d < N; ++d) w *= (c & (1 << d)) ? frac[d] : 1.0 - frac[d];
        weights_[j][c] = w;
      }
      if (vgrid.on_boundary(j)) boundary_.push_back(j);
    }
    cost_.resize(nx * nv);
    targets_.resize(nx * nv * kCorners);
    for (std::size_t i = 0; i < nx; ++i) {
      const Vec<N> x = tgrid.node(i);
      const Index<N> xi = tgrid.indices(i);
      for (std::size_t j = 0; j < nv; ++j) {
        const Vec<N> v = vgrid.node(j);
        Vec<N> at = x;
        if (dir == Direction::backward)
          for (int d = 0; d < N; ++d) at[d] = x[d] - h * v[d];
        cost_[i * nv + j] = h * lag(at, v);
        for (int c = 0; c < kCorners; ++c) {
          Index<N> idx{};
          for (int d = 0; d < N; ++d) idx[d] = xi[d] + offsets_[j][d] + ((c >> d) & 1);
          targets_[(i * nv + j) * kCorners + c] = static_cast<std::uint32_t>(tgrid.flat(idx));
        }
      }
    }
  }

  [[nodiscard]] double h() const { return h_; }
  [[nodiscard]] const TorusGrid<N>& torus() const { return tgrid_; }
  [[nodiscard]] const VelocityGrid<N>& velocity() const { return vgrid_; }
  [[nodiscard]] Direction direction() const { return dir_; }

  /// h L at the kernel's evaluation point for (node i, velocity j).
  [[nodiscard]] double cost(std::size_t i, std::size_t j) const { return cost_[i * vgrid_.size() + j]; }

  /// Interpolated value of a field at the target of (node i, velocity j).
  [[nodiscard]] double target_value(const std::vector<double>& f, std::size_t i, std::size_t j) const {
    const std::size_t base = (i * vgrid_.size() + j) * kCorners;
    double s = 0.0;
    for (int c = 0; c < kCorners; ++c) s += weights_[j][c] * f[targets_[base + c]];
    return s;
  }

  /// Exponent f(i,j) = h L + field(target) for every velocity of node i.
  void exponents(const std::vector<double>& f, std::size_t i, std::vector<double>& out) const {
    const std::size_t nv = vgrid_.size();
    out.resize(nv);
    for (std::size_t j = 0; j < nv; ++j) out[j] = cost_[i * nv + j] + target_value(f, i, j);
  }

  /// Soft-min operator: -eps h ln( dv^N sum_v exp(-(h L + phi(target)) / (eps h)) ).
  [[nodiscard]] ScalarField<N> apply_soft(const ScalarField<N>& phi, double epsilon) const {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::precondition_failed, "epsilon must be positive");
    const double temp = epsilon * h_;
    const double log_dv = std::log(vgrid_.cell_volume());
    ScalarField<N> out(tgrid_);
    std::vector<double> f;
    for (std::size_t i = 0; i < tgrid_.size(); ++i) {
      exponents(phi.values(), i, f);
      const double m = *std::min_element(f.begin(), f.end());
      double s = 0.0;
      for (double fj : f) s += std::exp(-(fj - m) / temp);
      for (std::size_t j : boundary_) {
        if (std::exp(-(f[j] - m) / temp) > 1e-12)
          throw Error(ErrorCode::cutoff_too_small,
                      "integrand at the velocity boundary exceeds 1e-12 of its peak at node " + std::to_string(i));
      }
      out[i] = m - temp * (log_dv + std::log(s));
    }
    return out;
  }

  /// Hard-min operator min_v (h L + phi(target)); optionally reports argmins.
  [[nodiscard]] ScalarField<N> apply_hard(const ScalarField<N>& phi, std::vector<std::size_t>* argmin = nullptr) const {
    ScalarField<N> out(tgrid_);
    if (argmin) argmin->assign(tgrid_.size(), 0);
    std::vector<double> f;
    for (std::size_t i = 0; i < tgrid_.size(); ++i) {
      exponents(phi.values(), i, f);
      const auto it = std::min_element(f.begin(), f.end());
      out[i] = *it;
      if (argmin) (*argmin)[i] = static_cast<std::size_t>(it - f.begin());
    }
    return out;
  }

  [[nodiscard]] bool lattice_compatible() const {
    for (const auto& w : weights_)
      if (w[0] != 1.0) return false;
    return true;
  }

 private:
  static constexpr int kCorners = 1 << N;
  double h_;
  TorusGrid<N> tgrid_;
  VelocityGrid<N> vgrid_;
  Direction dir_;
  std::vector<Index<N>> offsets_;
  std::vector<std::array<double, kCorners>> weights_;
  std::vector<double> cost_;
  std::vector<std::uint32_t> targets_;
  std::vector<std::size_t> boundary_;
};

template <int N, class Lag>
ScalarField<N> apply_G(const Lag& lag, double epsilon, double h, const ScalarField<N>& phi, const VelocityGrid<N>& vgrid) {
  return BellmanKernel<N>(lag, h, phi.grid(), vgrid, Direction::forward).apply_soft(phi, epsilon);
}

template <int N, class Lag>
ScalarField<N> apply_Gbar(const Lag& lag, double epsilon, double h, const ScalarField<N>& phi_bar,
                          const VelocityGrid<N>& vgrid) {
  return BellmanKernel<N>(lag, h, phi_bar.grid(), vgrid, Direction::backward).apply_soft(phi_bar, epsilon);
}

struct SolverConfig {
  double tolerance = 1e-10;
  int max_iterations = 50000;
  std::size_t reference_node = 0;
  bool log_shift = true;  // per-node min shift; always on, kept for reporting
  std::optional<double> velocity_bound;  // if set, vgrid cutoff must reach it
};

template <int N>
struct EpSolution {
  double epsilon = 0.0;
  double h = 0.0;
  ScalarField<N> phi;
  ScalarField<N> phi_bar;
  double lambda = 0.0;
  double lambda_bar = 0.0;
  int iterations = 0;
  int iterations_bar = 0;
  double final_residual = 0.0;      // max |G[phi] - phi - lambda|
  double final_residual_bar = 0.0;  // same for the backward equation
  double lambda_allowance = 0.0;    // accepted |lambda - lambda_bar|
  std::vector<double> residual_history;
};

/// phi <- phi - phi(ref); phi_bar <- phi_bar + c so that the torus quadrature
/// of exp(-(phi_bar + phi)/(eps h)) equals one.
template <int N>
std::pair<ScalarField<N>, ScalarField<N>> normalize_pair(ScalarField<N> phi, ScalarField<N> phi_bar, double epsilon,
                                                        double h, std::size_t reference_node = 0) {
  phi += -phi[reference_node];
  const double temp = epsilon * h;
  std::vector<double> logs(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) logs[i] = -(phi_bar[i] + phi[i]) / temp;
  const double c = temp * (std::log(phi.grid().cell_volume()) + log_sum_exp(logs));
  phi_bar += c;
  return {std::move(phi), std::move(phi_bar)};
}

namespace detail {

struct FixedPoint {
  std::vector<double> values;
  double lambda = 0.0;
  double residual = 0.0;
  int iterations = 0;
  std::vector<double> history;
};

template <int N>
FixedPoint iterate_fixed_point(const BellmanKernel<N>& kernel, double epsilon, ScalarField<N> phi,
                               const SolverConfig& cfg) {
  FixedPoint fp;
  const std::size_t ref = cfg.reference_node;
  phi += -phi[ref];
  bool converged = false;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    ScalarField<N> next = kernel.apply_soft(phi, epsilon);
    next += -next[ref];
    const double res = max_abs_difference(next.values(), phi.values());
    phi = std::move(next);
    fp.history.push_back(res);
    fp.iterations = it;
    if (res <= cfg.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw Error(ErrorCode::no_convergence,
                "fixed point not reached in " + std::to_string(cfg.max_iterations) + " iterations");
  const ScalarField<N> g = kernel.apply_soft(phi, epsilon);
  std::vector<double> diff(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) diff[i] = g[i] - phi[i];
  fp.lambda = pairwise_sum(diff) / static_cast<double>(diff.size());
  for (double d : diff) fp.residual = std::max(fp.residual, std::abs(d - fp.lambda));
  fp.values = std::move(phi.values());
  return fp;
}

// Sup-norm bound (dx^2/8) max|f''| for the multilinear interpolation error,
// with f'' replaced by node second differences.
template <int N>
double interpolation_defect(const ScalarField<N>& f) {
  const auto& g = f.grid();
  double total = 0.0;
  for (int d = 0; d < N; ++d) {
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto lo = g.indices(i);
      auto hi = lo;
      lo[d] -= 1;
      hi[d] += 1;
      m = std::max(m, std::abs(f[g.flat(lo)] + f[g.flat(hi)] - 2.0 * f[i]));
    }
    total += m / 8.0;
  }
  return total;
}

}  // namespace detail

/// Solve the forward and backward fixed-point equations, check that both give
/// the same eigen-constant, and normalise the pair.
template <int N, class Lag>
EpSolution<N> solve_pair(const Lag& lag, double epsilon, double h, const TorusGrid<N>& tgrid,
                         const VelocityGrid<N>& vgrid, const SolverConfig& cfg = {},
                         const EpSolution<N>* warm_start = nullptr) {
  if (!(epsilon > 0.0) || !(h > 0.0))
    throw Error(ErrorCode::precondition_failed, "epsilon and h must be positive");
  if (!(cfg.tolerance > 0.0)) throw Error(ErrorCode::precondition_failed, "tolerance must be positive");
  if (cfg.reference_node >= tgrid.size()) throw Error(ErrorCode::precondition_failed, "reference node out of range");
  if (cfg.velocity_bound && vgrid.cutoff() < *cfg.velocity_bound)
    throw Error(ErrorCode::cutoff_too_small, "velocity cutoff below the a priori bound K");

  const bool warm = warm_start && warm_start->phi.grid() == tgrid;
  const BellmanKernel<N> fwd(lag, h, tgrid, vgrid, Direction::forward);
  const BellmanKernel<N> bwd(lag, h, tgrid, vgrid, Direction::backward);
  auto f = detail::iterate_fixed_point(fwd, epsilon, warm ? warm_start->phi : ScalarField<N>(tgrid), cfg);
  auto b = detail::iterate_fixed_point(bwd, epsilon, warm ? warm_start->phi_bar : ScalarField<N>(tgrid), cfg);

  EpSolution<N> sol;
  sol.epsilon = epsilon;
  sol.h = h;
  sol.lambda = f.lambda;
  sol.lambda_bar = b.lambda;
  sol.iterations = f.iterations;
  sol.iterations_bar = b.iterations;
  sol.final_residual = f.residual;
  sol.final_residual_bar = b.residual;
  sol.residual_history = std::move(f.history);

  ScalarField<N> phi(tgrid, std::move(f.values));
  ScalarField<N> phi_bar(tgrid, std::move(b.values));
  // Without interpolation the two kernels are exact transposes; otherwise
  // each eigen-constant carries the interpolation error of its field.
  sol.lambda_allowance = 10.0 * cfg.tolerance;
  if (!fwd.lattice_compatible())
    sol.lambda_allowance += 2.0 * (detail::interpolation_defect(phi) + detail::interpolation_defect(phi_bar));
  if (std::abs(sol.lambda - sol.lambda_bar) > sol.lambda_allowance)
    throw Error(ErrorCode::lambda_mismatch, "forward lambda " + std::to_string(sol.lambda) + " vs backward " +
                                                std::to_string(sol.lambda_bar));
  std::tie(sol.phi, sol.phi_bar) = normalize_pair(std::move(phi), std::move(phi_bar), epsilon, h, cfg.reference_node);
  return sol;
}

struct PerronResult {
  double eigenvalue = 0.0;      // may under/overflow; prefer log_eigenvalue
  double log_eigenvalue = 0.0;
  double lambda = 0.0;          // -eps h log_eigenvalue
  std::vector<double> eigenfunction;
  int iterations = 0;
};

/// Dominant eigenvalue of the Hopf-Cole kernel int exp(-L(x,v)/eps) f(x+hv) dv,
/// assembled as a dense matrix (N = 1 only) and found by power iteration.
template <int N, class Lag>
PerronResult perron_eigenvalue(const Lag& lag, double epsilon, double h, const TorusGrid<N>& tgrid,
                               const VelocityGrid<N>& vgrid, int max_iterations = 200000) {
  if constexpr (N != 1) {
    throw Error(ErrorCode::too_large, "dense Perron kernel is only materialised for N = 1");
  } else {
    const BellmanKernel<N> kernel(lag, h, tgrid, vgrid, Direction::forward);
    const std::size_t n = tgrid.size();
    const std::size_t nv = vgrid.size();
    double shift = kInf;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < nv; ++j) shift = std::min(shift, kernel.cost(i, j) / h);
    // Columns of the kernel are recovered by interpolating unit vectors.
    std::vector<double> mat(n * n, 0.0);
    std::vector<double> unit(n, 0.0);
    for (std::size_t y = 0; y < n; ++y) {
      unit[y] = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < nv; ++j) {
          const double w = kernel.target_value(unit, i, j);
          if (w != 0.0) s += w * std::exp(-(kernel.cost(i, j) / h - shift) / epsilon);
        }
        mat[i * n + y] = vgrid.cell_volume() * s;
      }
      unit[y] = 0.0;
    }
    PerronResult res;
    std::vector<double> psi(n, 1.0);
    std::vector<double> next(n);
    double rho = 0.0;
    bool converged = false;
    for (int it = 1; it <= max_iterations; ++it) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t y = 0; y < n; ++y) s += mat[i * n + y] * psi[y];
        next[i] = s;
      }
      const double top = *std::max_element(next.begin(), next.end());
      if (!(top > 0.0)) throw Error(ErrorCode::power_iteration_stalled, "kernel annihilated the iterate");
      for (double& v : next) v /= top;
      const double change = max_abs_difference(next, psi);
      const double rho_change = std::abs(top - rho);
      psi.swap(next);
      rho = top;
      res.iterations = it;
      if (change <= 1e-13 && rho_change <= 1e-14 * rho) {
        converged = true;
        break;
      }
    }
    if (!converged) throw Error(ErrorCode::power_iteration_stalled, "power iteration did not settle");
    res.log_eigenvalue = std::log(rho) - shift / epsilon;
    res.eigenvalue = std::exp(res.log_eigenvalue);
    res.lambda = -epsilon * h * res.log_eigenvalue;
    res.eigenfunction = std::move(psi);
    return res;
  }
}

}  // namespace mep
