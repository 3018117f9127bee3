#pragma once

#include <string>
#include <vector>

#include "mather_ep/core.hpp"
#include "mather_ep/limits.hpp"
#include "mather_ep/measure.hpp"

namespace mep {

/// Product box in T^N x R^N. x-intervals may extend below 0 or above 1; they
/// are read periodically and must not exceed unit length.
template <int N>
struct PhaseBox {
  std::array<std::array<double, 2>, N> x{};
  std::array<std::array<double, 2>, N> v{};
  bool closed = true;

  void validate(double cutoff) const {
    for (int d = 0; d < N; ++d) {
      if (!(x[d][1] > x[d][0]) || x[d][1] - x[d][0] > 1.0 + 1e-12)
        throw Error(ErrorCode::precondition_failed, "box x-interval must be nonempty and at most unit length");
      if (!(v[d][1] > v[d][0])) throw Error(ErrorCode::precondition_failed, "box v-interval must be nonempty");
      if (v[d][0] < -cutoff - 1e-12 || v[d][1] > cutoff + 1e-12)
        throw Error(ErrorCode::precondition_failed, "box v-interval leaves the velocity cutoff");
    }
  }
};

namespace detail {

inline double interval_overlap(double a, double b, double lo, double hi) {
  return std::max(0.0, std::min(b, hi) - std::max(a, lo));
}

// Overlap of the periodic interval [a,b] with the cell [lo,hi].
inline double periodic_overlap(double a, double b, double lo, double hi) {
  double s = 0.0;
  for (int shift = -2; shift <= 2; ++shift) s += interval_overlap(a + shift, b + shift, lo, hi);
  return s;
}

}  // namespace detail

/// log mu(A), each cell weighted by the fraction of it that lies in A.
template <int N>
double log_measure_of_box(const Density<N>& mu, const PhaseBox<N>& box) {
  box.validate(mu.velocity().cutoff());
  const auto& tg = mu.torus();
  const auto& vg = mu.velocity();
  const double dx = tg.spacing();
  const double dv = vg.spacing();
  std::vector<double> log_wv(vg.size());
  for (std::size_t j = 0; j < vg.size(); ++j) {
    const Vec<N> v = vg.node(j);
    double w = 1.0;
    for (int d = 0; d < N; ++d) w *= detail::interval_overlap(box.v[d][0], box.v[d][1], v[d] - dv / 2, v[d] + dv / 2) / dv;
    log_wv[j] = w > 0.0 ? std::log(w) : -kInf;
  }
  std::vector<double> terms;
  for (std::size_t i = 0; i < tg.size(); ++i) {
    const Vec<N> x = tg.node(i);
    double w = 1.0;
    for (int d = 0; d < N; ++d) w *= detail::periodic_overlap(box.x[d][0], box.x[d][1], x[d] - dx / 2, x[d] + dx / 2) / dx;
    if (w <= 0.0) continue;
    const double lw = std::log(w);
    for (std::size_t j = 0; j < vg.size(); ++j)
      if (std::isfinite(log_wv[j])) terms.push_back(lw + log_wv[j] + mu.log_value(i, j));
  }
  return std::log(mu.cell_volume()) + log_sum_exp(terms);
}

template <int N>
double measure_of_box(const Density<N>& mu, const PhaseBox<N>& box) {
  return std::exp(log_measure_of_box(mu, box));
}

/// Torus nodes whose cell meets the box's x-projection.
template <int N>
std::vector<std::size_t> box_nodes(const TorusGrid<N>& tg, const PhaseBox<N>& box) {
  std::vector<std::size_t> nodes;
  const double dx = tg.spacing();
  for (std::size_t i = 0; i < tg.size(); ++i) {
    const Vec<N> x = tg.node(i);
    bool in = true;
    for (int d = 0; d < N && in; ++d)
      in = detail::periodic_overlap(box.x[d][0], box.x[d][1], x[d] - dx / 2, x[d] + dx / 2) > 0.0;
    if (in) nodes.push_back(i);
  }
  return nodes;
}

/// Minimum of f over the box: lattice scan with `samples` points per
/// coordinate, then a clamped parabolic step per coordinate at the minimiser.
template <int N, class F>
double box_infimum(const PhaseBox<N>& box, F&& f, int samples = 41) {
  constexpr int D = 2 * N;
  std::array<double, D> lo{};
  std::array<double, D> hi{};
  for (int d = 0; d < N; ++d) {
    lo[d] = box.x[d][0];
    hi[d] = box.x[d][1];
    lo[N + d] = box.v[d][0];
    hi[N + d] = box.v[d][1];
  }
  auto eval = [&](const std::array<double, D>& z) {
    Vec<N> x{};
    Vec<N> v{};
    for (int d = 0; d < N; ++d) {
      x[d] = z[d];
      v[d] = z[N + d];
    }
    return f(x, v);
  };
  const std::size_t total = ipow<D>(static_cast<std::size_t>(samples));
  double best = kInf;
  std::array<double, D> arg{};
  for (std::size_t c = 0; c < total; ++c) {
    std::array<double, D> z{};
    std::size_t code = c;
    for (int d = 0; d < D; ++d) {
      z[d] = lo[d] + (hi[d] - lo[d]) * static_cast<double>(code % samples) / (samples - 1);
      code /= samples;
    }
    const double val = eval(z);
    if (val < best) {
      best = val;
      arg = z;
    }
  }
  for (int d = 0; d < D; ++d) {
    const double step = (hi[d] - lo[d]) / (samples - 1);
    auto zm = arg;
    auto zp = arg;
    zm[d] = std::max(lo[d], arg[d] - step);
    zp[d] = std::min(hi[d], arg[d] + step);
    if (zm[d] == arg[d] || zp[d] == arg[d]) continue;
    const double fm = eval(zm);
    const double fp = eval(zp);
    const double curv = fm - 2.0 * best + fp;
    if (curv <= 0.0) continue;
    auto z = arg;
    z[d] = std::clamp(arg[d] + 0.5 * step * (fm - fp) / curv, lo[d], hi[d]);
    const double val = eval(z);
    if (val < best) {
      best = val;
      arg = z;
    }
  }
  return best;
}

/// inf of I over x-nodes in `nodes` and velocities in the box (refined in v).
template <int N, class Lag>
double node_rate_infimum(const Lag& lag, const GradientField<N>& grad, double hbar0, const std::vector<std::size_t>& nodes,
                         const PhaseBox<N>& box) {
  double best = kInf;
  for (std::size_t i : nodes) {
    if (grad.kink[i]) continue;
    PhaseBox<N> vbox = box;
    const Vec<N> x = grad.grid.node(i);
    for (int d = 0; d < N; ++d) vbox.x[d] = {x[d], x[d] + 1e-9};
    best = std::min(best, box_infimum<N>(vbox, [&](const Vec<N>&, const Vec<N>& v) {
      return rate_I<N>(lag, grad, hbar0, i, v);
    }));
  }
  return best;
}

enum class LdpRegime { fixed_h, joint, away };

inline std::string_view to_string(LdpRegime r) {
  switch (r) {
    case LdpRegime::fixed_h: return "fixed-h";
    case LdpRegime::joint: return "joint";
    case LdpRegime::away: return "away-from-aubry";
  }
  return "unknown";
}

template <int N>
struct LdpReport {
  LdpRegime regime = LdpRegime::fixed_h;
  PhaseBox<N> box;
  std::vector<double> epsilons;
  std::vector<double> hs;
  std::vector<double> scaled_log_masses;
  std::vector<double> dropped_epsilons;  // points whose box mass underflowed
  ExtrapolationFit fit;
  double limit = 0.0;
  double bound = 0.0;        // upper bound (closed) / the regime's bound
  double lower_bound = -kInf;  // joint regime: -inf over A1 of I
  double tolerance = 0.0;
  bool pass = false;
  bool sandwich = true;      // joint regime: lower_bound - tol <= limit <= bound + tol
};

namespace detail {

template <int N, class Lag>
void scaled_log_masses(LdpReport<N>& rep, const Lag& lag, const std::vector<EpSolution<N>>& sols,
                       const VelocityGrid<N>& vgrid, bool times_h) {
  for (const auto& s : sols) {
    const auto mu = build_density(s, lag, vgrid);
    const double lm = log_measure_of_box(mu, rep.box);
    if (!std::isfinite(lm)) {
      rep.dropped_epsilons.push_back(s.epsilon);
      continue;
    }
    rep.epsilons.push_back(s.epsilon);
    rep.hs.push_back(s.h);
    rep.scaled_log_masses.push_back(s.epsilon * (times_h ? s.h : 1.0) * lm);
  }
  if (rep.epsilons.empty()) throw Error(ErrorCode::mass_underflow, "box mass underflows at every schedule point");
  rep.fit = fit_affine(rep.epsilons, rep.scaled_log_masses);
  rep.limit = rep.fit.limit;
}

template <int N>
void verdict(LdpReport<N>& rep, double tolerance) {
  rep.tolerance = tolerance + 2.0 * rep.fit.residual;
  rep.pass = rep.box.closed ? rep.limit <= rep.bound + rep.tolerance : rep.limit >= rep.bound - rep.tolerance;
}

}  // namespace detail

/// eps ln mu_{eps,h}(A) -> limit, against -inf_A I_h from the terminal fields.
template <int N, class Lag>
LdpReport<N> ldp_fixed_h(const Lag& lag, const ContinuationResult<N>& cont, const VelocityGrid<N>& vgrid,
                         const PhaseBox<N>& box, double tolerance) {
  if (cont.joint) throw Error(ErrorCode::precondition_failed, "fixed-h regime needs a fixed-h continuation");
  box.validate(vgrid.cutoff());
  LdpReport<N> rep;
  rep.regime = LdpRegime::fixed_h;
  rep.box = box;
  detail::scaled_log_masses(rep, lag, cont.solutions, vgrid, false);
  const double h = cont.schedule.back().h;
  rep.bound = -box_infimum<N>(box, [&](const Vec<N>& x, const Vec<N>& v) {
    return rate_I_h<N>(cont.phi, cont.phi_bar, lag, h, cont.H_limit, x, v);
  });
  detail::verdict(rep, tolerance);
  return rep;
}

/// Joint limit: -inf_{A1} I <= lim eps ln mu(A) <= -inf_A I, A1 = A over the
/// Aubry projection.
template <int N, class Lag>
LdpReport<N> ldp_joint(const Lag& lag, const ContinuationResult<N>& cont, const VelocityGrid<N>& vgrid,
                       const PhaseBox<N>& box, const std::vector<std::size_t>& aubry, const GradientField<N>& grad,
                       double tolerance, double min_support_distance = 0.05) {
  if (!cont.joint) throw Error(ErrorCode::precondition_failed, "joint regime needs a coupled continuation");
  box.validate(vgrid.cutoff());
  const auto& tg = cont.phi.grid();
  const auto in_box = box_nodes(tg, box);
  std::vector<std::size_t> a1;
  for (std::size_t i : in_box)
    if (std::find(aubry.begin(), aubry.end(), i) != aubry.end()) a1.push_back(i);
  if (a1.empty())
    throw Error(ErrorCode::precondition_failed, "box x-projection does not meet the Aubry projection");
  // Support points (x, argmin_v I(x, .)) over the Aubry nodes.
  double dist = kInf;
  for (std::size_t i : aubry) {
    if (grad.kink[i]) continue;
    std::size_t best = 0;
    double bv = kInf;
    for (std::size_t j = 0; j < vgrid.size(); ++j) {
      const double r = rate_I<N>(lag, grad, cont.H_limit, i, vgrid.node(j));
      if (r < bv) {
        bv = r;
        best = j;
      }
    }
    const Vec<N> x = tg.node(i);
    const Vec<N> v = vgrid.node(best);
    double d2 = 0.0;
    for (int d = 0; d < N; ++d) {
      const double len = box.x[d][1] - box.x[d][0];
      const double t = wrap_unit(x[d] - box.x[d][0]);
      const double dx = t <= len ? 0.0 : std::min(t - len, 1.0 - t);
      const double dvel = v[d] < box.v[d][0] ? box.v[d][0] - v[d] : (v[d] > box.v[d][1] ? v[d] - box.v[d][1] : 0.0);
      d2 += dx * dx + dvel * dvel;
    }
    dist = std::min(dist, std::sqrt(d2));
  }
  if (dist < min_support_distance)
    throw Error(ErrorCode::precondition_failed, "box lies within " + std::to_string(dist) + " of the Mather support");

  LdpReport<N> rep;
  rep.regime = LdpRegime::joint;
  rep.box = box;
  detail::scaled_log_masses(rep, lag, cont.solutions, vgrid, false);
  rep.bound = -node_rate_infimum(lag, grad, cont.H_limit, in_box, box);
  rep.lower_bound = -node_rate_infimum(lag, grad, cont.H_limit, a1, box);
  detail::verdict(rep, tolerance);
  if (!box.closed) rep.pass = rep.limit >= rep.lower_bound - rep.tolerance;
  rep.sandwich = rep.limit >= rep.lower_bound - rep.tolerance && rep.limit <= rep.bound + rep.tolerance;
  return rep;
}

/// Boxes away from the Aubry projection: eps h ln mu(A) against
/// -inf over pi_1(A) of (phibar_0 + phi_0), in the gauge min(phibar_0 + phi_0) = 0.
template <int N, class Lag>
LdpReport<N> ldp_away(const Lag& lag, const ContinuationResult<N>& cont, const VelocityGrid<N>& vgrid,
                      const PhaseBox<N>& box, const std::vector<std::size_t>& aubry, double tolerance) {
  if (!cont.joint) throw Error(ErrorCode::precondition_failed, "away regime needs a coupled continuation");
  box.validate(vgrid.cutoff());
  const auto& tg = cont.phi.grid();
  for (std::size_t i : box_nodes(tg, box))
    if (std::find(aubry.begin(), aubry.end(), i) != aubry.end())
      throw Error(ErrorCode::precondition_failed, "box x-projection meets the Aubry projection");
  ScalarField<N> s(tg);
  for (std::size_t i = 0; i < tg.size(); ++i) s[i] = cont.phi[i] + cont.phi_bar[i];
  s += -s.min();

  LdpReport<N> rep;
  rep.regime = LdpRegime::away;
  rep.box = box;
  detail::scaled_log_masses(rep, lag, cont.solutions, vgrid, true);
  PhaseBox<N> xbox = box;
  for (int d = 0; d < N; ++d) xbox.v[d] = {0.0, 1e-9};
  rep.bound = -box_infimum<N>(xbox, [&](const Vec<N>& x, const Vec<N>&) { return s.at(x); }, 201);
  detail::verdict(rep, tolerance);
  return rep;
}

struct VaradhanResult {
  std::vector<double> epsilons;
  std::vector<double> values;  // eps ln int exp(p.v/eps) dmu
  ExtrapolationFit fit;
  double limit = 0.0;
  double expected = 0.0;  // sup_v (p.v - I(v))
};

/// Laplace/Varadhan check for Lagrangians without x-dependence.
template <int N, class Lag>
VaradhanResult varadhan_check(const Lag& lag, const std::vector<EpSolution<N>>& sols, const VelocityGrid<N>& vgrid,
                              const Vec<N>& p, double hbar0) {
  if constexpr (requires { lag.kind(); }) {
    if (lag.kind() == LagrangianKind::separable)
      throw Error(ErrorCode::precondition_failed, "Varadhan check needs an x-independent Lagrangian");
  }
  if (sols.empty()) throw Error(ErrorCode::precondition_failed, "empty schedule");
  VaradhanResult res;
  for (const auto& s : sols) {
    const auto mu = build_density(s, lag, vgrid);
    const std::size_t nv = vgrid.size();
    std::vector<double> terms(mu.log_values().size());
    double peak = -kInf;
    double boundary_peak = -kInf;
    for (std::size_t i = 0; i < mu.torus().size(); ++i) {
      for (std::size_t j = 0; j < nv; ++j) {
        const double t = mu.log_value(i, j) + dot<N>(p, vgrid.node(j)) / s.epsilon;
        terms[i * nv + j] = t;
        peak = std::max(peak, t);
        if (vgrid.on_boundary(j)) boundary_peak = std::max(boundary_peak, t);
      }
    }
    if (boundary_peak - peak > std::log(1e-12))
      throw Error(ErrorCode::cutoff_too_small, "tilt pushes mass to the velocity boundary");
    res.epsilons.push_back(s.epsilon);
    res.values.push_back(s.epsilon * (std::log(mu.cell_volume()) + log_sum_exp(terms)));
  }
  res.fit = fit_affine(res.epsilons, res.values);
  res.limit = res.fit.limit;
  Vec<N> q{};
  for (int d = 0; d < N; ++d) q[d] = -p[d];
  // sup_v (p.v - L(v) + Hbar0) = H(-p) + Hbar0
  res.expected = eval_H<N>(lag, q, Vec<N>{}, vgrid) + hbar0;
  return res;
}

}  // namespace mep
