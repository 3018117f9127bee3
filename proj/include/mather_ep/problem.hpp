#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "mather_ep/core.hpp"
#include "mather_ep/torus_grid.hpp"

namespace mep {

/// Periodic potential U on the torus: either a sum of cosines or a periodic
/// cubic B-spline through tabulated samples.
template <int N>
class PeriodicPotential {
 public:
  /// U(x) = amplitude * sum_d cos(2 pi x_d).
  static PeriodicPotential cosine(double amplitude) {
    PeriodicPotential p;
    p.amplitude_ = amplitude;
    return p;
  }

  static PeriodicPotential tabulated(const TorusGrid<N>& grid, std::vector<double> samples) {
    if (samples.size() != grid.size())
      throw Error(ErrorCode::precondition_failed, "tabulated potential needs M^N samples");
    PeriodicPotential p;
    p.tabulated_ = true;
    p.grid_ = grid;
    p.samples_ = samples;
    p.coeffs_ = spline_coefficients(grid, std::move(samples));
    return p;
  }

  [[nodiscard]] bool is_tabulated() const { return tabulated_; }
  [[nodiscard]] double amplitude() const { return amplitude_; }
  [[nodiscard]] const std::vector<double>& samples() const { return samples_; }
  [[nodiscard]] const TorusGrid<N>& grid() const { return grid_; }

  double operator()(const Vec<N>& x) const {
    if (!tabulated_) {
      double s = 0.0;
      for (int d = 0; d < N; ++d) s += std::cos(2.0 * kPi * x[d]);
      return amplitude_ * s;
    }
    return spline_eval(x, -1);
  }

  [[nodiscard]] Vec<N> gradient(const Vec<N>& x) const {
    Vec<N> g{};
    for (int d = 0; d < N; ++d)
      g[d] = tabulated_ ? spline_eval(x, d) : -2.0 * kPi * amplitude_ * std::sin(2.0 * kPi * x[d]);
    return g;
  }

 private:
  static double bspline(double t) {
    const double a = std::abs(t);
    if (a < 1.0) return 2.0 / 3.0 - a * a + 0.5 * a * a * a;
    if (a < 2.0) return (2.0 - a) * (2.0 - a) * (2.0 - a) / 6.0;
    return 0.0;
  }

  static double bspline_derivative(double t) {
    const double a = std::abs(t);
    const double s = t < 0.0 ? -1.0 : 1.0;
    if (a < 1.0) return -2.0 * t + 1.5 * t * a;
    if (a < 2.0) return -s * 0.5 * (2.0 - a) * (2.0 - a);
    return 0.0;
  }

  // Interpolating coefficients: solve the cyclic (1,4,1)/6 system along each
  // axis. Jacobi contracts by 1/2 per sweep, so 80 sweeps reach roundoff.
  static std::vector<double> spline_coefficients(const TorusGrid<N>& grid, std::vector<double> c) {
    const int m = grid.points_per_axis();
    for (int axis = 0; axis < N; ++axis) {
      std::vector<double> rhs = c;
      for (int sweep = 0; sweep < 80; ++sweep) {
        std::vector<double> next(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) {
          auto idx = grid.indices(i);
          auto lo = idx;
          auto hi = idx;
          lo[axis] -= 1;
          hi[axis] += 1;
          next[i] = (6.0 * rhs[i] - c[grid.flat(lo)] - c[grid.flat(hi)]) / 4.0;
        }
        c.swap(next);
      }
      (void)m;
    }
    return c;
  }

  // derivative_axis < 0 evaluates the spline itself.
  double spline_eval(const Vec<N>& x, int derivative_axis) const {
    const int m = grid_.points_per_axis();
    Index<N> base{};
    Vec<N> t{};
    for (int d = 0; d < N; ++d) {
      t[d] = wrap_unit(x[d]) * m;
      base[d] = static_cast<int>(std::floor(t[d]));
    }
    double s = 0.0;
    const int corners = static_cast<int>(ipow<N>(4));
    for (int c = 0; c < corners; ++c) {
      Index<N> idx{};
      double w = 1.0;
      int code = c;
      for (int d = 0; d < N; ++d) {
        const int off = code % 4 - 1;
        code /= 4;
        idx[d] = base[d] + off;
        const double u = t[d] - idx[d];
        w *= d == derivative_axis ? bspline_derivative(u) * m : bspline(u);
      }
      s += w * coeffs_[grid_.flat(idx)];
    }
    return s;
  }

  double amplitude_ = 0.0;
  bool tabulated_ = false;
  TorusGrid<N> grid_;
  std::vector<double> samples_;
  std::vector<double> coeffs_;
};

enum class LagrangianKind { quadratic, shifted_quadratic, separable };

/// Builtin periodic Lagrangians:
///   quadratic          L = |v|^2/2
///   shifted-quadratic  L = |v - omega|^2/2
///   separable          L = mass |v|^2/2 - U(x)
template <int N>
class LagrangianSpec {
 public:
  static LagrangianSpec quadratic() { return LagrangianSpec(LagrangianKind::quadratic); }

  static LagrangianSpec shifted_quadratic(const Vec<N>& omega) {
    LagrangianSpec s(LagrangianKind::shifted_quadratic);
    s.omega_ = omega;
    return s;
  }

  static LagrangianSpec separable(PeriodicPotential<N> potential, double mass = 1.0) {
    if (!(mass > 0.0)) throw Error(ErrorCode::precondition_failed, "kinetic mass must be positive");
    LagrangianSpec s(LagrangianKind::separable);
    s.potential_ = std::move(potential);
    s.mass_ = mass;
    return s;
  }

  /// v^2/2 - sum_d cos(2 pi x_d).
  static LagrangianSpec pendulum() { return separable(PeriodicPotential<N>::cosine(1.0)); }

  [[nodiscard]] LagrangianKind kind() const { return kind_; }
  [[nodiscard]] const Vec<N>& omega() const { return omega_; }
  [[nodiscard]] double mass() const { return mass_; }
  [[nodiscard]] const PeriodicPotential<N>& potential() const { return potential_; }

  double operator()(const Vec<N>& x, const Vec<N>& v) const {
    switch (kind_) {
      case LagrangianKind::quadratic:
        return 0.5 * dot<N>(v, v);
      case LagrangianKind::shifted_quadratic: {
        double s = 0.0;
        for (int d = 0; d < N; ++d) s += (v[d] - omega_[d]) * (v[d] - omega_[d]);
        return 0.5 * s;
      }
      case LagrangianKind::separable:
        return 0.5 * mass_ * dot<N>(v, v) - potential_(x);
    }
    return 0.0;
  }

  /// Partial derivative L_x.
  [[nodiscard]] Vec<N> dx(const Vec<N>& x, const Vec<N>&) const {
    Vec<N> g{};
    if (kind_ == LagrangianKind::separable) {
      g = potential_.gradient(x);
      for (auto& c : g) c = -c;
    }
    return g;
  }

  /// Partial derivative L_v.
  [[nodiscard]] Vec<N> dv(const Vec<N>&, const Vec<N>& v) const {
    Vec<N> g{};
    for (int d = 0; d < N; ++d) {
      if (kind_ == LagrangianKind::shifted_quadratic) g[d] = v[d] - omega_[d];
      else if (kind_ == LagrangianKind::separable) g[d] = mass_ * v[d];
      else g[d] = v[d];
    }
    return g;
  }

  /// Stable textual identity, used for cache keys and report headers.
  [[nodiscard]] std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "N=" << N << ";";
    switch (kind_) {
      case LagrangianKind::quadratic: os << "quadratic"; break;
      case LagrangianKind::shifted_quadratic:
        os << "shifted-quadratic;omega=";
        for (double w : omega_) os << w << ",";
        break;
      case LagrangianKind::separable:
        os << "separable;mass=" << mass_ << ";";
        if (potential_.is_tabulated()) {
          os << "tabulated;M=" << potential_.grid().points_per_axis() << ";";
          for (double u : potential_.samples()) os << u << ",";
        } else {
          os << "cosine;a=" << potential_.amplitude();
        }
        break;
    }
    return os.str();
  }

 private:
  explicit LagrangianSpec(LagrangianKind kind) : kind_(kind) {}

  LagrangianKind kind_;
  Vec<N> omega_{};
  double mass_ = 1.0;
  PeriodicPotential<N> potential_ = PeriodicPotential<N>::cosine(0.0);
};

/// Time-reversed Lagrangian Lbar(x, v) = L(x + h v, -v).
template <int N, class Lag>
class Reversed {
 public:
  Reversed(const Lag& inner, double h) : inner_(&inner), h_(h) {}
  double operator()(const Vec<N>& x, const Vec<N>& v) const {
    Vec<N> y{};
    Vec<N> w{};
    for (int d = 0; d < N; ++d) {
      y[d] = x[d] + h_ * v[d];
      w[d] = -v[d];
    }
    return (*inner_)(y, w);
  }

 private:
  const Lag* inner_;
  double h_;
};

template <int N, class Lag>
double eval_L(const Lag& lag, const Vec<N>& x, const Vec<N>& v) {
  return lag(x, v);
}

template <int N, class Lag>
double eval_L_reversed(const Lag& lag, double h, const Vec<N>& x, const Vec<N>& v) {
  if (!(h > 0.0)) throw Error(ErrorCode::precondition_failed, "time step must be positive");
  return Reversed<N, Lag>(lag, h)(x, v);
}

/// H(p, x) = sup_v (-p.v - L(x, v)): grid scan, then one parabolic refinement
/// per axis around the discrete maximiser.
template <int N, class Lag>
double eval_H(const Lag& lag, const Vec<N>& p, const Vec<N>& x, const VelocityGrid<N>& vgrid) {
  auto objective = [&](const Vec<N>& v) { return -dot<N>(p, v) - lag(x, v); };
  std::size_t best = 0;
  double best_value = -kInf;
  for (std::size_t j = 0; j < vgrid.size(); ++j) {
    const double f = objective(vgrid.node(j));
    if (f > best_value) {
      best_value = f;
      best = j;
    }
  }
  if (vgrid.on_boundary(best))
    throw Error(ErrorCode::cutoff_too_small, "Hamiltonian maximiser on the velocity boundary");
  const Vec<N> v0 = vgrid.node(best);
  const double dv = vgrid.spacing();
  double refined = best_value;
  for (int d = 0; d < N; ++d) {
    Vec<N> lo = v0;
    Vec<N> hi = v0;
    lo[d] -= dv;
    hi[d] += dv;
    const double fm = objective(lo);
    const double fp = objective(hi);
    const double curvature = fm - 2.0 * best_value + fp;
    if (curvature < 0.0) refined -= (fp - fm) * (fp - fm) / (8.0 * curvature);
  }
  return refined;
}

struct HypothesisReport {
  bool superlinearity_ok = false;
  double convexity_min_second_difference = 0.0;
  double C = 0.0;
  double Gamma = 0.0;
  double velocity_bound = 0.0;  // K: minimisers never need |v| > K
  double lx_lipschitz_in_v = 0.0;  // probed only, never enforced
};

struct ProbeOptions {
  int x_samples = 16;   // per axis
  int v_samples = 33;   // per axis
  double v_range = 3.0;  // convexity / C / Gamma sampled on [-v_range, v_range]^N
  double superlinearity_threshold = 10.0;
};

namespace detail {

template <int N>
std::vector<Vec<N>> unit_directions() {
  std::vector<Vec<N>> dirs;
  if constexpr (N == 1) {
    dirs = {Vec<N>{1.0}, Vec<N>{-1.0}};
  } else if constexpr (N == 2) {
    for (int k = 0; k < 32; ++k) {
      const double a = 2.0 * kPi * k / 32.0;
      dirs.push_back(Vec<N>{std::cos(a), std::sin(a)});
    }
  } else {
    const auto total = ipow<N>(3);
    for (std::size_t c = 0; c < total; ++c) {
      Vec<N> d{};
      std::size_t code = c;
      for (int a = 0; a < N; ++a) {
        d[a] = static_cast<double>(static_cast<int>(code % 3) - 1);
        code /= 3;
      }
      const double n = norm<N>(d);
      if (n == 0.0) continue;
      for (auto& x : d) x /= n;
      dirs.push_back(d);
    }
  }
  return dirs;
}

// Axis directions plus, for N >= 2, the diagonals e_a +- e_b.
template <int N>
std::vector<Vec<N>> probe_directions() {
  std::vector<Vec<N>> dirs;
  for (int a = 0; a < N; ++a) {
    Vec<N> e{};
    e[a] = 1.0;
    dirs.push_back(e);
    for (int b = a + 1; b < N; ++b) {
      for (double sgn : {1.0, -1.0}) {
        Vec<N> f{};
        f[a] = std::sqrt(0.5);
        f[b] = sgn * std::sqrt(0.5);
        dirs.push_back(f);
      }
    }
  }
  return dirs;
}

template <int N>
std::vector<Vec<N>> sample_box(int per_axis, double lo, double hi) {
  std::vector<Vec<N>> pts;
  const std::size_t total = ipow<N>(static_cast<std::size_t>(per_axis));
  pts.reserve(total);
  for (std::size_t c = 0; c < total; ++c) {
    Vec<N> p{};
    std::size_t code = c;
    for (int d = N - 1; d >= 0; --d) {
      const int i = static_cast<int>(code % per_axis);
      code /= per_axis;
      p[d] = per_axis == 1 ? lo : lo + (hi - lo) * i / (per_axis - 1);
    }
    pts.push_back(p);
  }
  return pts;
}

template <int N>
Vec<N> axpy(const Vec<N>& x, double a, const Vec<N>& y) {
  Vec<N> r{};
  for (int d = 0; d < N; ++d) r[d] = x[d] + a * y[d];
  return r;
}

}  // namespace detail

/// Sampled finite-difference checks of convexity, superlinearity and the
/// semiconcavity constants, plus the a priori velocity bound K: with
/// A = max{L(x,v) : |v| <= 2 diam(T^N)}, K is the smallest radius beyond which
/// L(x,v) > A for every sampled x and direction.
template <int N, class Lag>
HypothesisReport probe_hypotheses(const Lag& lag, const ProbeOptions& opt = {}) {
  HypothesisReport rep;
  const auto xs = detail::sample_box<N>(opt.x_samples, 0.0, 1.0 - 1.0 / opt.x_samples);
  const auto vs = detail::sample_box<N>(opt.v_samples, -opt.v_range, opt.v_range);
  const auto dirs = detail::probe_directions<N>();
  const double sv = 2.0 * opt.v_range / (opt.v_samples - 1);
  const double sx = 1.0 / (4.0 * opt.x_samples);

  double convex = kInf;
  double c_est = 0.0;
  double g_est = 0.0;
  double lip = 0.0;
  for (const auto& x : xs) {
    for (const auto& v : vs) {
      const double l0 = lag(x, v);
      for (const auto& e : dirs) {
        const double dvv = (lag(x, detail::axpy<N>(v, sv, e)) + lag(x, detail::axpy<N>(v, -sv, e)) - 2.0 * l0) / (sv * sv);
        const double dxx = (lag(detail::axpy<N>(x, sx, e), v) + lag(detail::axpy<N>(x, -sx, e), v) - 2.0 * l0) / (sx * sx);
        convex = std::min(convex, dvv);
        g_est = std::max(g_est, dvv);
        c_est = std::max(c_est, dxx);
        if constexpr (requires { lag.dx(x, v); }) {
          const auto a = lag.dx(x, v);
          const auto b = lag.dx(x, detail::axpy<N>(v, sv, e));
          double diff = 0.0;
          for (int d = 0; d < N; ++d) diff += (a[d] - b[d]) * (a[d] - b[d]);
          lip = std::max(lip, std::sqrt(diff) / sv);
        }
      }
    }
  }
  rep.convexity_min_second_difference = convex;
  rep.C = c_est;
  rep.Gamma = g_est;
  rep.lx_lipschitz_in_v = lip;

  const auto all_dirs = detail::unit_directions<N>();
  const double radius = std::sqrt(static_cast<double>(N));  // twice the torus diameter
  double a_max = -kInf;
  for (const auto& x : xs) {
    for (int k = 0; k <= 64; ++k) {
      for (const auto& e : all_dirs) a_max = std::max(a_max, lag(x, detail::axpy<N>(Vec<N>{}, radius * k / 64.0, e)));
    }
  }
  auto min_on_sphere = [&](double r) {
    double m = kInf;
    for (const auto& x : xs)
      for (const auto& e : all_dirs) m = std::min(m, lag(x, detail::axpy<N>(Vec<N>{}, r, e)));
    return m;
  };
  const double dr = radius / 256.0;
  double r_max = 16.0 * radius;
  double last_bad = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    for (double r = 0.0; r <= r_max; r += dr)
      if (min_on_sphere(r) <= a_max) last_bad = r;
    if (last_bad < 0.5 * r_max) break;
    r_max *= 2.0;
  }
  rep.velocity_bound = last_bad + dr;

  const double r1 = 1e3 * std::max(1.0, rep.velocity_bound);
  const double q1 = min_on_sphere(r1) / r1;
  const double q2 = min_on_sphere(2.0 * r1) / (2.0 * r1);
  rep.superlinearity_ok = q1 > opt.superlinearity_threshold && q2 > q1;

  if (!rep.superlinearity_ok) throw Error(ErrorCode::hypothesis_violated, "superlinearity probe failed");
  if (convex < -1e-9) throw Error(ErrorCode::hypothesis_violated, "convexity probe failed");
  if (!std::isfinite(rep.C) || !std::isfinite(rep.Gamma) || !std::isfinite(rep.velocity_bound))
    throw Error(ErrorCode::hypothesis_violated, "semiconcavity constants are not finite");
  return rep;
}

/// Default velocity cutoff: the a priori bound K plus enough room for the
/// Gaussian spread of the entropic kernel (tails below 1e-15 relative).
inline double default_cutoff(double velocity_bound, double epsilon_max) {
  return velocity_bound + 8.5 * std::sqrt(epsilon_max);
}

}  // namespace mep
