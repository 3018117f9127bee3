#pragma once

#include <vector>

#include "mather_ep/core.hpp"
#include "mather_ep/ep_solver.hpp"
#include "mather_ep/torus_grid.hpp"

namespace mep {

/// theta(x) = exp(-(phi_bar(x) + phi(x)) / (eps h)).
template <int N>
ScalarField<N> marginal_theta(const EpSolution<N>& sol) {
  ScalarField<N> theta(sol.phi.grid());
  const double temp = sol.epsilon * sol.h;
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = std::exp(-(sol.phi_bar[i] + sol.phi[i]) / temp);
  return theta;
}

/// mu(x,v) = theta(x) exp(-(h L(x,v) + phi(x+hv) - phi(x) - lambda)/(eps h)),
/// not renormalised; throws MassDeviation if the mass is off by more than 1e-3.
template <int N, class Lag>
Density<N> build_density(const EpSolution<N>& sol, const Lag& lag, const VelocityGrid<N>& vgrid) {
  const auto& tgrid = sol.phi.grid();
  const BellmanKernel<N> kernel(lag, sol.h, tgrid, vgrid, Direction::forward);
  const double temp = sol.epsilon * sol.h;
  const std::size_t nv = vgrid.size();
  std::vector<double> logs(tgrid.size() * nv);
  for (std::size_t i = 0; i < tgrid.size(); ++i) {
    const double log_theta = -(sol.phi_bar[i] + sol.phi[i]) / temp;
    for (std::size_t j = 0; j < nv; ++j) {
      const double e = kernel.cost(i, j) + kernel.target_value(sol.phi.values(), i, j) - sol.phi[i] - sol.lambda;
      logs[i * nv + j] = log_theta - e / temp;
    }
  }
  Density<N> mu(tgrid, vgrid, std::move(logs));
  const double mass = mu.mass();
  if (std::abs(mass - 1.0) > 1e-3)
    throw Error(ErrorCode::mass_deviation, "density mass " + std::to_string(mass) + " deviates from 1");
  return mu;
}

/// max_x | int theta(x-hv) exp(-(h L(x-hv,v) + phi(x) - phi(x-hv) - lambda)/(eps h)) dv - theta(x) |,
/// with theta off the grid evaluated from the interpolated potentials.
template <int N, class Lag>
double theta_fixed_point_residual(const EpSolution<N>& sol, const Lag& lag, const VelocityGrid<N>& vgrid) {
  const auto& tgrid = sol.phi.grid();
  const BellmanKernel<N> back(lag, sol.h, tgrid, vgrid, Direction::backward);
  const double temp = sol.epsilon * sol.h;
  const double log_dv = std::log(vgrid.cell_volume());
  const std::size_t nv = vgrid.size();
  std::vector<double> terms(nv);
  double worst = 0.0;
  for (std::size_t i = 0; i < tgrid.size(); ++i) {
    for (std::size_t j = 0; j < nv; ++j) {
      const double pb = back.target_value(sol.phi_bar.values(), i, j);
      const double p = back.target_value(sol.phi.values(), i, j);
      const double log_theta = -(pb + p) / temp;
      terms[j] = log_theta - (back.cost(i, j) + sol.phi[i] - p - sol.lambda) / temp;
    }
    const double lhs = std::exp(log_dv + log_sum_exp(terms));
    const double theta = std::exp(-(sol.phi_bar[i] + sol.phi[i]) / temp);
    worst = std::max(worst, std::abs(lhs - theta));
  }
  return worst;
}

/// S[mu] = int mu ln(mu / rho) dx dv with rho the x-marginal; 0 ln 0 = 0.
template <int N>
double entropy(const Density<N>& mu) {
  const std::size_t nx = mu.torus().size();
  const std::size_t nv = mu.velocity().size();
  const double log_dv = std::log(mu.velocity().cell_volume());
  std::vector<double> per_node(nx);
  std::vector<double> terms(nv);
  for (std::size_t i = 0; i < nx; ++i) {
    std::span<const double> row(mu.log_values().data() + i * nv, nv);
    for (double l : row)
      if (std::isnan(l)) throw Error(ErrorCode::negative_density, "density contains NaN");
    const double log_rho = log_dv + log_sum_exp(row);
    for (std::size_t j = 0; j < nv; ++j) {
      const double l = row[j];
      terms[j] = std::isfinite(l) ? std::exp(l) * (l - log_rho) : 0.0;
    }
    per_node[i] = pairwise_sum(terms);
  }
  return mu.cell_volume() * pairwise_sum(per_node);
}

/// int L dmu.
template <int N, class Lag>
double action(const Density<N>& mu, const Lag& lag) {
  const std::size_t nx = mu.torus().size();
  const std::size_t nv = mu.velocity().size();
  std::vector<double> per_node(nx);
  std::vector<double> terms(nv);
  for (std::size_t i = 0; i < nx; ++i) {
    const Vec<N> x = mu.torus().node(i);
    for (std::size_t j = 0; j < nv; ++j) {
      const double l = mu.log_value(i, j);
      terms[j] = std::isfinite(l) ? std::exp(l) * lag(x, mu.velocity().node(j)) : 0.0;
    }
    per_node[i] = pairwise_sum(terms);
  }
  return mu.cell_volume() * pairwise_sum(per_node);
}

template <int N>
struct HolonomyResidual {
  Index<N> mode{};
  double real = 0.0;
  double imag = 0.0;
};

/// Fourier modes k with 0 < |k|_inf <= k_max, one representative per +-k pair.
template <int N>
std::vector<Index<N>> fourier_modes(int k_max) {
  std::vector<Index<N>> modes;
  const int width = 2 * k_max + 1;
  const std::size_t total = ipow<N>(static_cast<std::size_t>(width));
  for (std::size_t c = 0; c < total; ++c) {
    Index<N> k{};
    std::size_t code = c;
    for (int d = N - 1; d >= 0; --d) {
      k[d] = static_cast<int>(code % width) - k_max;
      code /= width;
    }
    // keep k if its first nonzero entry is positive
    int first = 0;
    for (int d = 0; d < N && first == 0; ++d) first = k[d];
    if (first > 0) modes.push_back(k);
  }
  return modes;
}

/// |int (e_k(x+hv) - e_k(x)) dmu| for real and imaginary parts of exp(2 pi i k.x).
template <int N>
std::vector<HolonomyResidual<N>> holonomy_residual(const Density<N>& mu, double h, int k_max = 5) {
  const std::size_t nx = mu.torus().size();
  const std::size_t nv = mu.velocity().size();
  std::vector<HolonomyResidual<N>> out;
  std::vector<double> re(nx);
  std::vector<double> im(nx);
  std::vector<double> tr(nv);
  std::vector<double> ti(nv);
  for (const auto& k : fourier_modes<N>(k_max)) {
    for (std::size_t i = 0; i < nx; ++i) {
      const Vec<N> x = mu.torus().node(i);
      double kx = 0.0;
      for (int d = 0; d < N; ++d) kx += k[d] * x[d];
      for (std::size_t j = 0; j < nv; ++j) {
        const Vec<N> v = mu.velocity().node(j);
        double kv = 0.0;
        for (int d = 0; d < N; ++d) kv += k[d] * v[d];
        const double w = std::exp(mu.log_value(i, j));
        const double a = 2.0 * kPi * (kx + h * kv);
        const double b = 2.0 * kPi * kx;
        tr[j] = w * (std::cos(a) - std::cos(b));
        ti[j] = w * (std::sin(a) - std::sin(b));
      }
      re[i] = pairwise_sum(tr);
      im[i] = pairwise_sum(ti);
    }
    out.push_back({k, std::abs(mu.cell_volume() * pairwise_sum(re)), std::abs(mu.cell_volume() * pairwise_sum(im))});
  }
  return out;
}

template <int N>
double max_holonomy_residual(const std::vector<HolonomyResidual<N>>& res) {
  double m = 0.0;
  for (const auto& r : res) m = std::max({m, r.real, r.imag});
  return m;
}

template <int N>
struct MeasureReport {
  double epsilon = 0.0;
  double h = 0.0;
  double lambda = 0.0;
  double action = 0.0;
  double entropy = 0.0;
  double effective_H = 0.0;  // lambda / h
  double identity_gap = 0.0;  // action + eps entropy - lambda / h
  double mass = 0.0;
  double theta_fixed_point_residual = 0.0;
  std::vector<HolonomyResidual<N>> holonomy_residuals;
};

template <int N, class Lag>
MeasureReport<N> measure_report(const EpSolution<N>& sol, const Lag& lag, const VelocityGrid<N>& vgrid,
                                int k_max = 5) {
  const auto mu = build_density(sol, lag, vgrid);
  MeasureReport<N> r;
  r.epsilon = sol.epsilon;
  r.h = sol.h;
  r.lambda = sol.lambda;
  r.action = action(mu, lag);
  r.entropy = entropy(mu);
  r.effective_H = sol.lambda / sol.h;
  r.identity_gap = r.action + sol.epsilon * r.entropy - r.effective_H;
  r.mass = mu.mass();
  r.theta_fixed_point_residual = theta_fixed_point_residual(sol, lag, vgrid);
  r.holonomy_residuals = holonomy_residual(mu, sol.h, k_max);
  return r;
}

}  // namespace mep
