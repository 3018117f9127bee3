#include <gtest/gtest.h>

#include <cmath>

#include "mather_ep/problem.hpp"
#include "oracles.hpp"

using namespace mep;

TEST(Lagrangians, BuiltinFormulas) {
  const auto q = LagrangianSpec<1>::quadratic();
  const auto s = LagrangianSpec<1>::shifted_quadratic({0.25});
  const auto p = LagrangianSpec<1>::pendulum();
  EXPECT_DOUBLE_EQ(q({0.3}, {2.0}), 2.0);
  EXPECT_DOUBLE_EQ(s({0.3}, {0.25}), 0.0);
  EXPECT_DOUBLE_EQ(s({0.3}, {1.25}), 0.5);
  EXPECT_NEAR(p({0.5}, {0.0}), 1.0, 1e-15);
  EXPECT_NEAR(p({0.0}, {1.0}), -0.5, 1e-15);
}

TEST(Lagrangians, PartialDerivativesMatchFiniteDifferences) {
  const auto p = LagrangianSpec<2>::separable(PeriodicPotential<2>::cosine(0.7), 1.5);
  const Vec<2> x{0.13, 0.71};
  const Vec<2> v{-0.4, 0.9};
  const double e = 1e-6;
  for (int d = 0; d < 2; ++d) {
    Vec<2> xp = x, xm = x, vp = v, vm = v;
    xp[d] += e;
    xm[d] -= e;
    vp[d] += e;
    vm[d] -= e;
    EXPECT_NEAR(p.dx(x, v)[d], (p(xp, v) - p(xm, v)) / (2 * e), 1e-6);
    EXPECT_NEAR(p.dv(x, v)[d], (p(x, vp) - p(x, vm)) / (2 * e), 1e-6);
  }
}

TEST(Lagrangians, ReversedLagrangianShiftsAndFlips) {
  const auto p = LagrangianSpec<1>::pendulum();
  const double h = 0.1;
  const Vec<1> x{0.2};
  const Vec<1> v{1.5};
  EXPECT_DOUBLE_EQ(eval_L_reversed<1>(p, h, x, v), p({0.2 + h * 1.5}, {-1.5}));
  EXPECT_THROW(eval_L_reversed<1>(p, 0.0, x, v), Error);
}

TEST(Lagrangians, DescriptionIsStableAndDistinguishesProblems) {
  EXPECT_EQ(LagrangianSpec<1>::quadratic().describe(), LagrangianSpec<1>::quadratic().describe());
  EXPECT_NE(LagrangianSpec<1>::quadratic().describe(), LagrangianSpec<1>::pendulum().describe());
  EXPECT_NE(LagrangianSpec<1>::shifted_quadratic({0.1}).describe(),
            LagrangianSpec<1>::shifted_quadratic({0.2}).describe());
}

TEST(TabulatedPotential, InterpolatesSamplesAndIsSmooth) {
  const TorusGrid<1> g(32);
  std::vector<double> samples(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) samples[i] = std::cos(2 * oracle::pi * g.node(i)[0]);
  const auto u = PeriodicPotential<1>::tabulated(g, samples);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(u(g.node(i)), samples[i], 1e-10);
  // between nodes the spline tracks the smooth function to O(dx^4)
  EXPECT_NEAR(u({0.123}), std::cos(2 * oracle::pi * 0.123), 1e-4);
  EXPECT_NEAR(u.gradient({0.123})[0], -2 * oracle::pi * std::sin(2 * oracle::pi * 0.123), 1e-2);
  EXPECT_THROW(PeriodicPotential<1>::tabulated(g, std::vector<double>(5, 0.0)), Error);
}

TEST(Hamiltonian, LegendreTransformOfBuiltins) {
  const VelocityGrid<1> vg(6.0, 241);
  const auto q = LagrangianSpec<1>::quadratic();
  for (double p : {-1.3, 0.0, 0.4, 2.0}) EXPECT_NEAR(eval_H<1>(q, {p}, {0.0}, vg), 0.5 * p * p, 1e-10);
  const auto s = LagrangianSpec<1>::shifted_quadratic({0.3});
  EXPECT_NEAR(eval_H<1>(s, {1.0}, {0.0}, vg), 0.5 - 0.3, 1e-10);
  const auto pend = LagrangianSpec<1>::pendulum();
  EXPECT_NEAR(eval_H<1>(pend, {0.0}, {0.5}, vg), -1.0, 1e-12);
  EXPECT_NEAR(eval_H<1>(pend, {0.0}, {0.0}, vg), 1.0, 1e-12);
}

TEST(Hamiltonian, MaximiserOnBoundaryIsReported) {
  const VelocityGrid<1> vg(1.0, 21);
  try {
    (void)eval_H<1>(LagrangianSpec<1>::quadratic(), {-5.0}, {0.0}, vg);
    FAIL() << "expected CutoffTooSmall";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::cutoff_too_small);
  }
}

TEST(Hypotheses, PendulumConstants) {
  const auto rep = probe_hypotheses<1>(LagrangianSpec<1>::pendulum());
  EXPECT_TRUE(rep.superlinearity_ok);
  EXPECT_NEAR(rep.Gamma, 1.0, 1e-6);
  EXPECT_NEAR(rep.convexity_min_second_difference, 1.0, 1e-6);
  // sup |U''| = 4 pi^2, sampled with a finite difference of step 1/64
  EXPECT_NEAR(rep.C, 4 * oracle::pi * oracle::pi, 0.2);
  // A = max over |v| <= 1 of L = 1/2 + 1; K solves K^2/2 - 1 = 3/2
  EXPECT_NEAR(rep.velocity_bound, std::sqrt(5.0), 0.01);
}

TEST(Hypotheses, QuadraticConstants) {
  const auto rep = probe_hypotheses<2>(LagrangianSpec<2>::quadratic());
  EXPECT_NEAR(rep.Gamma, 1.0, 1e-6);
  EXPECT_NEAR(rep.C, 0.0, 1e-9);
  EXPECT_NEAR(rep.velocity_bound, std::sqrt(2.0), 0.01);
}

TEST(Hypotheses, RejectsNonconvexAndSublinear) {
  auto concave = [](const Vec<1>&, const Vec<1>& v) { return std::pow(v[0], 4) - v[0] * v[0]; };
  auto linear = [](const Vec<1>&, const Vec<1>& v) { return std::abs(v[0]); };
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::io_error;
  };
  EXPECT_EQ(code_of([&] { probe_hypotheses<1>(concave); }), ErrorCode::hypothesis_violated);
  EXPECT_EQ(code_of([&] { probe_hypotheses<1>(linear); }), ErrorCode::hypothesis_violated);
}

TEST(Hypotheses, DefaultCutoffAddsGaussianRoom) {
  EXPECT_NEAR(default_cutoff(2.0, 0.04), 2.0 + 8.5 * 0.2, 1e-15);
}
