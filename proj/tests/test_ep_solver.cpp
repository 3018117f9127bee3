#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mather_ep/ep_solver.hpp"
#include "mather_ep/measure.hpp"
#include "oracles.hpp"

using namespace mep;

namespace {

ScalarField<1> random_field(const TorusGrid<1>& g, std::mt19937& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  ScalarField<1> f(g);
  for (double& v : f.values()) v = u(rng);
  return f;
}

}  // namespace

TEST(SoftBellman, CommutesWithConstants) {
  const TorusGrid<1> g(32);
  const VelocityGrid<1> vg(3.0, 61);
  const auto lag = LagrangianSpec<1>::pendulum();
  std::mt19937 rng(11);
  const auto phi = random_field(g, rng, 0.05);
  auto shifted = phi;
  shifted += 0.75;
  const auto a = apply_G<1>(lag, 0.05, 0.1, phi, vg);
  const auto b = apply_G<1>(lag, 0.05, 0.1, shifted, vg);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(b[i], a[i] + 0.75, 1e-12);
}

TEST(SoftBellman, MonotoneAndNonexpansive) {
  const TorusGrid<1> g(32);
  const VelocityGrid<1> vg(3.0, 61);
  const auto lag = LagrangianSpec<1>::pendulum();
  std::mt19937 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto phi = random_field(g, rng, 0.05);
    auto psi = phi;
    std::uniform_real_distribution<double> u(0.0, 0.02);
    for (double& v : psi.values()) v += u(rng);  // psi >= phi
    const auto gp = apply_G<1>(lag, 0.05, 0.1, phi, vg);
    const auto gq = apply_G<1>(lag, 0.05, 0.1, psi, vg);
    const double sup = max_abs_difference(phi.values(), psi.values());
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_GE(gq[i], gp[i] - 1e-13);
    EXPECT_LE(max_abs_difference(gp.values(), gq.values()), sup + 1e-13);
  }
}

TEST(SoftBellman, HardMinIsTheZeroTemperatureLimit) {
  const TorusGrid<1> g(32);
  const VelocityGrid<1> vg(3.0, 61);
  const auto lag = LagrangianSpec<1>::quadratic();
  const BellmanKernel<1> k(lag, 0.1, g, vg, Direction::forward);
  const ScalarField<1> zero(g);
  const auto hard = k.apply_hard(zero);
  // soft value = hard value - eps h ln(sum dv exp(...)) -> hard as eps -> 0
  const auto soft = k.apply_soft(zero, 1e-4);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(soft[i], hard[i], 5e-5);
}

TEST(SoftBellman, BoundaryLeakRaisesCutoffTooSmall) {
  const TorusGrid<1> g(16);
  const VelocityGrid<1> vg(0.3, 7);
  try {
    (void)apply_G<1>(LagrangianSpec<1>::quadratic(), 0.1, 0.1, ScalarField<1>(g), vg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::cutoff_too_small);
  }
}

TEST(SolvePair, QuadraticEigenConstantMatchesClosedForm) {
  const double eps = 0.01, h = 0.1;
  const TorusGrid<1> g(64);
  const VelocityGrid<1> vg(default_cutoff(1.5, eps), 257);
  const auto sol = solve_pair<1>(LagrangianSpec<1>::quadratic(), eps, h, g, vg);
  EXPECT_NEAR(sol.lambda, oracle::quadratic_lambda_grid(eps, h, vg.cutoff(), 257), 1e-12);
  EXPECT_NEAR(sol.lambda, oracle::quadratic_lambda(eps, h), 1e-9);
  EXPECT_NEAR(sol.lambda, 1.383647e-3, 1e-9);
  EXPECT_NEAR(sol.lambda_bar, sol.lambda, 1e-12);
  // phi and phi_bar are constant, so theta is identically one
  const auto theta = marginal_theta(sol);
  for (double t : theta.values()) EXPECT_NEAR(t, 1.0, 1e-10);
}

TEST(SolvePair, NormalisationGauge) {
  const TorusGrid<1> g(32);
  const VelocityGrid<1> vg(default_cutoff(2.24, 0.1), 129);
  SolverConfig cfg;
  cfg.reference_node = 5;
  const auto sol = solve_pair<1>(LagrangianSpec<1>::pendulum(), 0.1, 0.1, g, vg, cfg);
  EXPECT_EQ(sol.phi[5], 0.0);
  EXPECT_NEAR(integrate(marginal_theta(sol)), 1.0, 1e-12);
  EXPECT_LE(sol.final_residual, 1e-8);
}

TEST(SolvePair, FixedPointEquationHolds) {
  const TorusGrid<1> g(32);
  const VelocityGrid<1> vg(default_cutoff(2.24, 0.1), 129);
  const auto lag = LagrangianSpec<1>::pendulum();
  const auto sol = solve_pair<1>(lag, 0.1, 0.1, g, vg);
  const auto next = apply_G<1>(lag, 0.1, 0.1, sol.phi, vg);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(next[i] - sol.phi[i], sol.lambda, 1e-8);
  const auto nb = apply_Gbar<1>(lag, 0.1, 0.1, sol.phi_bar, vg);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(nb[i] - sol.phi_bar[i], sol.lambda_bar, 1e-8);
}

TEST(SolvePair, PerronEigenvalueAgreesOnLatticeGrids) {
  // without interpolation the log-domain and linear kernels coincide
  const TorusGrid<1> g(32);
  const auto vg = VelocityGrid<1>::lattice(g, 0.1, default_cutoff(2.24, 0.1));
  const auto lag = LagrangianSpec<1>::pendulum();
  const auto sol = solve_pair<1>(lag, 0.1, 0.1, g, vg);
  const auto per = perron_eigenvalue<1>(lag, 0.1, 0.1, g, vg);
  EXPECT_NEAR(per.lambda, sol.lambda, 1e-9 * std::max(1.0, std::abs(sol.lambda)));
}

TEST(SolvePair, WarmStartGivesSameAnswer) {
  const TorusGrid<1> g(32);
  const VelocityGrid<1> vg(default_cutoff(2.24, 0.1), 129);
  const auto lag = LagrangianSpec<1>::pendulum();
  const auto cold = solve_pair<1>(lag, 0.05, 0.1, g, vg);
  const auto seed = solve_pair<1>(lag, 0.1, 0.1, g, vg);
  const auto warm = solve_pair<1>(lag, 0.05, 0.1, g, vg, {}, &seed);
  EXPECT_NEAR(warm.lambda, cold.lambda, 1e-9);
  EXPECT_LE(warm.iterations, cold.iterations);
  EXPECT_LE(max_abs_difference(warm.phi.values(), cold.phi.values()), 1e-7);
}

TEST(SolvePair, PreconditionsAndNonConvergence) {
  const TorusGrid<1> g(16);
  const VelocityGrid<1> vg(3.0, 61);
  const auto lag = LagrangianSpec<1>::pendulum();
  EXPECT_THROW(solve_pair<1>(lag, 0.0, 0.1, g, vg), Error);
  SolverConfig few;
  few.max_iterations = 2;
  try {
    (void)solve_pair<1>(lag, 0.1, 0.1, g, vg, few);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_convergence);
  }
  SolverConfig bound;
  bound.velocity_bound = 4.0;
  try {
    (void)solve_pair<1>(lag, 0.1, 0.1, g, vg, bound);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::cutoff_too_small);
  }
}

TEST(SolvePair, TwoDimensionalSeparableProblem) {
  const TorusGrid<2> g(12);
  const VelocityGrid<2> vg(default_cutoff(3.2, 0.2), 31);
  const auto lag = LagrangianSpec<2>::pendulum();
  const auto sol = solve_pair<2>(lag, 0.2, 0.2, g, vg);
  // separable in the two axes: lambda is twice the one-dimensional value
  const TorusGrid<1> g1(12);
  const VelocityGrid<1> v1(vg.cutoff(), 31);
  const auto one = solve_pair<1>(LagrangianSpec<1>::pendulum(), 0.2, 0.2, g1, v1);
  EXPECT_NEAR(sol.lambda, 2.0 * one.lambda, 1e-8);
}

TEST(Perron, TwoDimensionalKernelIsRefused) {
  const TorusGrid<2> g(4);
  const VelocityGrid<2> vg(1.0, 3);
  EXPECT_THROW(perron_eigenvalue<2>(LagrangianSpec<2>::quadratic(), 0.1, 0.1, g, vg), Error);
}
