#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "mather_ep/discrete_am.hpp"
#include "mather_ep/limits.hpp"
#include "oracles.hpp"

using namespace mep;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::io_error;
}

// Minimum mean weight over simple cycles by exhaustive search.
double brute_min_mean_cycle(const PathGraph<1>& g) {
  const std::size_t n = g.size();
  double best = kInf;
  std::vector<std::size_t> path;
  std::vector<bool> on(n, false);
  std::function<void(std::size_t, std::size_t, double)> dfs = [&](std::size_t start, std::size_t x, double w) {
    for (std::size_t j = 0; j < g.out_degree(); ++j) {
      const auto& e = g.edge(x, j);
      const double c = w + e.cost;
      if (e.target == start) best = std::min(best, c / static_cast<double>(path.size()));
      if (e.target > start && !on[e.target]) {
        on[e.target] = true;
        path.push_back(e.target);
        dfs(start, e.target, c);
        path.pop_back();
        on[e.target] = false;
      }
    }
  };
  for (std::size_t s = 0; s < n; ++s) {
    path = {s};
    on.assign(n, false);
    on[s] = true;
    dfs(s, s, 0.0);
  }
  return best / g.h();
}

struct PendulumCase {
  TorusGrid<1> grid{64};
  double h = 0.2;
  VelocityGrid<1> vgrid = VelocityGrid<1>::lattice(grid, h, 2.5);
  LagrangianSpec<1> lag = LagrangianSpec<1>::pendulum();
  PathGraph<1> graph{lag, h, grid, vgrid};
};

}  // namespace

TEST(PathGraph, EdgesFollowLatticeSteps) {
  const TorusGrid<1> g(16);
  const auto vg = VelocityGrid<1>::lattice(g, 0.25, 1.0);
  const PathGraph<1> pg(LagrangianSpec<1>::quadratic(), 0.25, g, vg);
  EXPECT_EQ(pg.lattice_step(), 1);
  const int half = vg.half_width();
  for (std::size_t x = 0; x < g.size(); ++x)
    for (std::size_t j = 0; j < vg.size(); ++j) {
      const auto& e = pg.edge(x, j);
      EXPECT_EQ(e.target, static_cast<std::uint32_t>(positive_mod(static_cast<long>(x) + static_cast<long>(j) - half, 16)));
      EXPECT_DOUBLE_EQ(e.cost, 0.25 * 0.5 * std::pow(vg.node(j)[0], 2));
    }
  // wrapping across the seam is recorded as a lattice shift
  EXPECT_EQ(pg.edge(15, vg.size() - 1).shift[0], 1);
  EXPECT_EQ(pg.edge(0, 0).shift[0], -1);
}

TEST(PathGraph, RejectsIncompatibleAndDisconnectedGrids) {
  const TorusGrid<1> g(8);
  EXPECT_EQ(code_of([&] { PathGraph<1>(LagrangianSpec<1>::quadratic(), 0.5, g, VelocityGrid<1>(1.0, 5)); }),
            ErrorCode::precondition_failed);
  // h * dv = 2 dx reaches only even nodes
  EXPECT_EQ(code_of([&] { PathGraph<1>(LagrangianSpec<1>::quadratic(), 0.5, g, VelocityGrid<1>(1.25, 5)); }),
            ErrorCode::not_strongly_connected);
}

TEST(CriticalValue, BuiltinProblems) {
  const PendulumCase p;
  EXPECT_EQ(min_mean_cycle(p.graph), -1.0);
  const TorusGrid<1> g(32);
  const auto vg = VelocityGrid<1>::lattice(g, 0.1, 2.0);
  EXPECT_EQ(min_mean_cycle(PathGraph<1>(LagrangianSpec<1>::quadratic(), 0.1, g, vg)), 0.0);
  // omega = 0.3125 is the velocity node 1: L vanishes along v = omega
  EXPECT_EQ(min_mean_cycle(PathGraph<1>(LagrangianSpec<1>::shifted_quadratic({0.3125}), 0.1, g, vg)), 0.0);
}

TEST(CriticalValue, KarpMatchesExhaustiveCycleSearch) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> table(6 * 3);
    for (double& t : table) t = u(rng);
    const TorusGrid<1> g(6);
    const auto vg = VelocityGrid<1>::lattice(g, 0.5, 0.1);
    ASSERT_EQ(vg.size(), 3u);
    auto lag = [&](const Vec<1>& x, const Vec<1>& v) {
      const auto i = static_cast<std::size_t>(std::lround(x[0] * 6)) % 6;
      const auto j = static_cast<std::size_t>(std::lround(v[0] / vg.spacing()) + 1);
      return table[i * 3 + j];
    };
    const PathGraph<1> pg(lag, 0.5, g, vg);
    EXPECT_NEAR(min_mean_cycle(pg), brute_min_mean_cycle(pg), 1e-12);
  }
}

TEST(PathAction, SumsWeightsAndRejectsNonEdges) {
  const PendulumCase p;
  KPath<1> path{{{0}, {1}, {3}, {2}}};
  const double expected = p.graph.weight(0, p.vgrid.half_width() + 1, -1.0) +
                          p.graph.weight(1, p.vgrid.half_width() + 2, -1.0) +
                          p.graph.weight(3, p.vgrid.half_width() - 1, -1.0);
  EXPECT_DOUBLE_EQ(path_action(p.graph, path, -1.0), expected);
  // lifted coordinates carry winding
  KPath<1> around{{{63}, {64}}};
  EXPECT_DOUBLE_EQ(path_action(p.graph, around, -1.0), p.graph.weight(63, p.vgrid.half_width() + 1, -1.0));
  KPath<1> jump{{{0}, {200}}};
  EXPECT_EQ(code_of([&] { (void)path_action(p.graph, jump, -1.0); }), ErrorCode::invalid_edge);
}

TEST(ManePotential, QuadraticLatticeClosedForm) {
  // each lattice step costs h (dv)^2 / 2 = dx dv / 2, so S(x, z) = d dx dv / 2
  const TorusGrid<1> g(32);
  const auto vg = VelocityGrid<1>::lattice(g, 0.1, 2.0);
  const PathGraph<1> pg(LagrangianSpec<1>::quadratic(), 0.1, g, vg);
  const auto all = mane_all_pairs(pg, 0.0);
  const double unit = g.spacing() * vg.spacing() / 2.0;
  for (int x = 0; x < 32; x += 3)
    for (int y = 0; y < 32; y += 5) EXPECT_NEAR(all[x * 32 + y], oracle::torus_steps(x, y, 32) * unit, 1e-14);
  const auto table = mane_S(pg, 7, 0.0);
  for (int x = 0; x < 32; ++x) {
    EXPECT_NEAR(table.to_source[x], all[x * 32 + 7], 1e-14);
    EXPECT_NEAR(table.from_source[x], all[7 * 32 + x], 1e-14);
    EXPECT_NEAR(table.peierls[x], all[x * 32 + 7], 1e-14);
  }
}

TEST(ManePotential, TriangleInequalityOnRandomTriples) {
  const PendulumCase p;
  const auto all = mane_all_pairs(p.graph, -1.0);
  const std::size_t n = p.graph.size();
  std::mt19937 rng(9);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (int t = 0; t < 1000; ++t) {
    const auto x = pick(rng), y = pick(rng), z = pick(rng);
    EXPECT_LE(all[x * n + z], all[x * n + y] + all[y * n + z] + 1e-12);
  }
}

TEST(ManePotential, NegativeCycleAboveCriticalValue) {
  const PendulumCase p;
  EXPECT_EQ(code_of([&] { (void)mane_all_pairs(p.graph, -0.9); }), ErrorCode::negative_cycle);
  EXPECT_EQ(code_of([&] { (void)mane_S(p.graph, 0, -0.9); }), ErrorCode::negative_cycle);
}

TEST(Nonwandering, PendulumIsTheHyperbolicPoint) {
  const PendulumCase p;
  const auto omega = nonwandering_set(p.graph, -1.0, 1e-9);
  EXPECT_EQ(omega, std::vector<std::size_t>{0});
  const TorusGrid<1> g(16);
  const auto vg = VelocityGrid<1>::lattice(g, 0.25, 1.0);
  EXPECT_EQ(nonwandering_set(PathGraph<1>(LagrangianSpec<1>::quadratic(), 0.25, g, vg), 0.0, 1e-9).size(), 16u);
}

TEST(Calibration, BarrierIsCalibratedAndRepresented) {
  const PendulumCase p;
  const auto all = mane_all_pairs(p.graph, -1.0);
  const auto cal = calibrated_from_barrier(p.graph, 0, -1.0);
  EXPECT_LE(cal.residual, 1e-12);
  EXPECT_LE(representation_check(cal.u, all, {0}), 1e-12);
  for (double r : calibration_residuals(p.graph, -1.0, cal.u.values())) EXPECT_NEAR(r, 0.0, 1e-12);
  EXPECT_EQ(code_of([&] { (void)calibrated_from_barrier(p.graph, 10, -1.0); }), ErrorCode::precondition_failed);
}

TEST(Calibration, AgreesWithHardBellmanFixedPoint) {
  const PendulumCase p;
  const auto cal = calibrated_from_barrier(p.graph, 0, -1.0);
  HardBellmanConfig cfg;
  cfg.reference_node = 0;
  const auto hb = hard_bellman<1>(p.lag, p.h, p.grid, p.vgrid, -1.0, cfg);
  double lo = kInf, hi = -kInf;
  for (std::size_t x = 0; x < p.grid.size(); ++x) {
    lo = std::min(lo, hb.phi[x] - cal.u[x]);
    hi = std::max(hi, hb.phi[x] - cal.u[x]);
  }
  EXPECT_LE(hi - lo, 1e-9);
}

TEST(Calibration, BarrierApproachesPendulumSeparatrixAction) {
  const PendulumCase p;
  const auto cal = calibrated_from_barrier(p.graph, 0, -1.0);
  // h(x, 0) + h(0, x) -> (4/pi)(1 - cos pi x); check the one-sided value at 1/2
  const auto table = mane_S(p.graph, 0, -1.0);
  EXPECT_NEAR(table.peierls[32] + table.from_source[32], oracle::pendulum_barrier(0.5), 0.05);
}

TEST(Separation, PendulumSubactionIsStrictOffOmega) {
  const PendulumCase p;
  const auto all = mane_all_pairs(p.graph, -1.0);
  const auto sep = separating_subaction(p.graph, -1.0, all, {0}, 1e-12);
  EXPECT_FALSE(sep.omega_is_everything);
  EXPECT_FALSE(sep.centers.empty());
  double total = 0.0;
  for (double w : sep.weights) total += w;
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_NEAR(sep.gaps[0], 0.0, 1e-12);
  for (std::size_t x = 1; x < p.grid.size(); ++x) EXPECT_GT(sep.gaps[x], 1e-12);
  EXPECT_LE(sep.lipschitz, p.vgrid.cutoff() + p.vgrid.spacing() / 2);
}

TEST(Separation, EverythingNonwanderingGivesZeroSubaction) {
  const TorusGrid<1> g(16);
  const auto vg = VelocityGrid<1>::lattice(g, 0.25, 1.0);
  const PathGraph<1> pg(LagrangianSpec<1>::quadratic(), 0.25, g, vg);
  const auto all = mane_all_pairs(pg, 0.0);
  const auto omega = nonwandering_set(all, 16, 1e-9);
  const auto sep = separating_subaction(pg, 0.0, all, omega, 1e-12);
  EXPECT_TRUE(sep.omega_is_everything);
  for (double v : sep.u.values()) EXPECT_EQ(v, 0.0);
}

TEST(Separation, WrongOmegaIsReported) {
  const PendulumCase p;
  const auto all = mane_all_pairs(p.graph, -1.0);
  // claiming node 5 is nonwandering cannot be matched by a zero gap there
  EXPECT_EQ(code_of([&] { (void)separating_subaction(p.graph, -1.0, all, {0, 5}, 1e-12); }),
            ErrorCode::separation_failed);
}

TEST(GradientCheck, CalibratedVelocityMatchesDerivative) {
  const PendulumCase p;
  const auto cal = calibrated_from_barrier(p.graph, 0, -1.0);
  EXPECT_LE(graph_gradient_check(p.graph, p.lag, cal, 1.0), 5.0 * p.grid.spacing());
}
