#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "mather_ep/core.hpp"

namespace mep {

/// Uniform periodic grid on [0,1)^N with M points per axis, row-major order
/// (axis 0 is the slowest index).
template <int N>
class TorusGrid {
 public:
  TorusGrid() = default;
  explicit TorusGrid(int points_per_axis) : m_(points_per_axis) {
    if (m_ < 4) throw Error(ErrorCode::precondition_failed, "torus grid needs M >= 4");
    size_ = ipow<N>(static_cast<std::size_t>(m_));
  }

  [[nodiscard]] int points_per_axis() const { return m_; }
  [[nodiscard]] double spacing() const { return 1.0 / m_; }
  [[nodiscard]] std::size_t size() const { return size_; }
  [[nodiscard]] double cell_volume() const { return std::pow(spacing(), N); }

  [[nodiscard]] Index<N> indices(std::size_t flat) const {
    Index<N> idx{};
    for (int d = N - 1; d >= 0; --d) {
      idx[d] = static_cast<int>(flat % m_);
      flat /= m_;
    }
    return idx;
  }

  /// Flat index of a (possibly out-of-range) multi-index, wrapped periodically.
  [[nodiscard]] std::size_t flat(const Index<N>& idx) const {
    std::size_t f = 0;
    for (int d = 0; d < N; ++d) f = f * m_ + positive_mod(idx[d], m_);
    return f;
  }

  [[nodiscard]] Vec<N> node(std::size_t flat_index) const {
    const auto idx = indices(flat_index);
    Vec<N> x{};
    for (int d = 0; d < N; ++d) x[d] = idx[d] * spacing();
    return x;
  }

  /// Nearest node to an arbitrary point of R^N (periodised).
  [[nodiscard]] std::size_t nearest(const Vec<N>& x) const {
    Index<N> idx{};
    for (int d = 0; d < N; ++d) idx[d] = static_cast<int>(std::lround(wrap_unit(x[d]) * m_));
    return flat(idx);
  }

  bool operator==(const TorusGrid&) const = default;

 private:
  int m_ = 0;
  std::size_t size_ = 0;
};

/// Velocity box [-R,R]^N split into Mv cells per axis (Mv odd); nodes are the
/// cell midpoints, so v = 0 is a node and Mv * spacing = 2R exactly.
template <int N>
class VelocityGrid {
 public:
  VelocityGrid() = default;
  VelocityGrid(double cutoff, int points_per_axis) : cutoff_(cutoff), mv_(points_per_axis) {
    if (!(cutoff > 0.0)) throw Error(ErrorCode::precondition_failed, "velocity cutoff must be positive");
    if (mv_ < 3 || mv_ % 2 == 0)
      throw Error(ErrorCode::precondition_failed, "velocity grid needs an odd Mv >= 3");
    dv_ = 2.0 * cutoff_ / mv_;
    size_ = ipow<N>(static_cast<std::size_t>(mv_));
    axis_.resize(mv_);
    const int half = (mv_ - 1) / 2;
    for (int j = 0; j < mv_; ++j) axis_[j] = (j - half) * dv_;
  }

  /// Grid whose steps h*v land exactly on torus nodes (h * spacing = dx), with
  /// cutoff at least min_cutoff.
  static VelocityGrid lattice(const TorusGrid<N>& grid, double h, double min_cutoff) {
    const double dv = grid.spacing() / h;
    const int half = std::max(1, static_cast<int>(std::ceil(min_cutoff / dv - 0.5)));
    return VelocityGrid((half + 0.5) * dv, 2 * half + 1);
  }

  [[nodiscard]] double cutoff() const { return cutoff_; }
  [[nodiscard]] int points_per_axis() const { return mv_; }
  [[nodiscard]] double spacing() const { return dv_; }
  [[nodiscard]] std::size_t size() const { return size_; }
  [[nodiscard]] double cell_volume() const { return std::pow(dv_, N); }
  [[nodiscard]] double axis_value(int j) const { return axis_[j]; }
  [[nodiscard]] int half_width() const { return (mv_ - 1) / 2; }

  [[nodiscard]] Index<N> indices(std::size_t flat) const {
    Index<N> idx{};
    for (int d = N - 1; d >= 0; --d) {
      idx[d] = static_cast<int>(flat % mv_);
      flat /= mv_;
    }
    return idx;
  }

  [[nodiscard]] std::size_t flat(const Index<N>& idx) const {
    std::size_t f = 0;
    for (int d = 0; d < N; ++d) f = f * mv_ + idx[d];
    return f;
  }

  [[nodiscard]] Vec<N> node(std::size_t flat_index) const {
    const auto idx = indices(flat_index);
    Vec<N> v{};
    for (int d = 0; d < N; ++d) v[d] = axis_[idx[d]];
    return v;
  }

  [[nodiscard]] bool on_boundary(std::size_t flat_index) const {
    const auto idx = indices(flat_index);
    for (int d = 0; d < N; ++d)
      if (idx[d] == 0 || idx[d] == mv_ - 1) return true;
    return false;
  }

  /// Integer k with h * spacing = k * dx, if the grids are lattice compatible.
  [[nodiscard]] std::optional<int> lattice_step(const TorusGrid<N>& grid, double h) const {
    const double ratio = h * dv_ / grid.spacing();
    const double k = std::round(ratio);
    if (k < 1.0 || std::abs(ratio - k) > 1e-9 * std::max(1.0, k)) return std::nullopt;
    return static_cast<int>(k);
  }

  bool operator==(const VelocityGrid& o) const { return cutoff_ == o.cutoff_ && mv_ == o.mv_; }

 private:
  double cutoff_ = 0.0;
  int mv_ = 0;
  double dv_ = 0.0;
  std::size_t size_ = 0;
  std::vector<double> axis_;
};

/// Multilinear interpolation weights on the 2^N surrounding nodes.
template <int N>
struct Stencil {
  static constexpr int kCorners = 1 << N;
  std::array<std::uint32_t, kCorners> node{};
  std::array<double, kCorners> weight{};

  template <class Values>
  [[nodiscard]] double apply(const Values& values) const {
    double s = 0.0;
    for (int c = 0; c < kCorners; ++c) s += weight[c] * values[node[c]];
    return s;
  }
};

template <int N>
Stencil<N> make_stencil(const TorusGrid<N>& grid, const Vec<N>& x) {
  const int m = grid.points_per_axis();
  Index<N> base{};
  Vec<N> frac{};
  for (int d = 0; d < N; ++d) {
    const double t = wrap_unit(x[d]) * m;
    double fl = std::floor(t);
    double f = t - fl;
    // Snap roundoff so that node positions reproduce node values exactly.
    if (f < 1e-11) {
      f = 0.0;
    } else if (f > 1.0 - 1e-11) {
      f = 0.0;
      fl += 1.0;
    }
    base[d] = static_cast<int>(fl);
    frac[d] = f;
  }
  Stencil<N> s;
  for (int c = 0; c < Stencil<N>::kCorners; ++c) {
    Index<N> idx = base;
    double w = 1.0;
    for (int d = 0; d < N; ++d) {
      if (c & (1 << d)) {
        idx[d] += 1;
        w *= frac[d];
      } else {
        w *= 1.0 - frac[d];
      }
    }
    s.node[c] = static_cast<std::uint32_t>(grid.flat(idx));
    s.weight[c] = w;
  }
  return s;
}

/// Real-valued function sampled on a torus grid.
template <int N>
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(TorusGrid<N> grid, double fill = 0.0)
      : grid_(grid), values_(grid.size(), fill) {}
  ScalarField(TorusGrid<N> grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw Error(ErrorCode::precondition_failed, "field size does not match grid");
  }

  [[nodiscard]] const TorusGrid<N>& grid() const { return grid_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  [[nodiscard]] std::vector<double>& values() { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  [[nodiscard]] double at(const Vec<N>& x) const { return make_stencil<N>(grid_, x).apply(values_); }

  [[nodiscard]] double min() const { return *std::min_element(values_.begin(), values_.end()); }
  [[nodiscard]] double max() const { return *std::max_element(values_.begin(), values_.end()); }

  ScalarField& operator+=(double c) {
    for (double& v : values_) v += c;
    return *this;
  }

 private:
  TorusGrid<N> grid_;
  std::vector<double> values_;
};

/// Quadrature of a grid function over the torus (rectangle rule, which is
/// spectrally accurate for smooth periodic integrands).
template <int N>
double integrate(const ScalarField<N>& f) {
  return f.grid().cell_volume() * pairwise_sum(f.values());
}

/// Nonnegative function on torus x velocity grid, stored as logarithms so that
/// exponentially small masses stay representable. Layout: x-major.
template <int N>
class Density {
 public:
  Density() = default;
  Density(TorusGrid<N> tgrid, VelocityGrid<N> vgrid, std::vector<double> log_values)
      : tgrid_(tgrid), vgrid_(std::move(vgrid)), log_values_(std::move(log_values)) {
    if (log_values_.size() != tgrid_.size() * vgrid_.size())
      throw Error(ErrorCode::precondition_failed, "density size does not match grids");
  }

  /// Build from plain values; negative entries are rejected.
  static Density from_values(TorusGrid<N> tgrid, VelocityGrid<N> vgrid, const std::vector<double>& values) {
    std::vector<double> logs(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] < 0.0 || std::isnan(values[i]))
        throw Error(ErrorCode::negative_density, "entry " + std::to_string(i) + " is negative");
      logs[i] = values[i] > 0.0 ? std::log(values[i]) : -kInf;
    }
    return Density(tgrid, std::move(vgrid), std::move(logs));
  }

  [[nodiscard]] const TorusGrid<N>& torus() const { return tgrid_; }
  [[nodiscard]] const VelocityGrid<N>& velocity() const { return vgrid_; }
  [[nodiscard]] std::size_t index(std::size_t x, std::size_t v) const { return x * vgrid_.size() + v; }
  [[nodiscard]] double log_value(std::size_t x, std::size_t v) const { return log_values_[index(x, v)]; }
  [[nodiscard]] double value(std::size_t x, std::size_t v) const { return std::exp(log_value(x, v)); }
  [[nodiscard]] const std::vector<double>& log_values() const { return log_values_; }
  [[nodiscard]] double cell_volume() const { return tgrid_.cell_volume() * vgrid_.cell_volume(); }

  [[nodiscard]] double log_mass() const { return std::log(cell_volume()) + log_sum_exp(log_values_); }
  [[nodiscard]] double mass() const { return std::exp(log_mass()); }

  /// Torus marginal rho(x) = int mu(x,v) dv.
  [[nodiscard]] ScalarField<N> marginal() const {
    ScalarField<N> rho(tgrid_);
    const std::size_t nv = vgrid_.size();
    for (std::size_t x = 0; x < tgrid_.size(); ++x) {
      std::span<const double> row(log_values_.data() + x * nv, nv);
      rho[x] = vgrid_.cell_volume() * std::exp(log_sum_exp(row));
    }
    return rho;
  }

 private:
  TorusGrid<N> tgrid_;
  VelocityGrid<N> vgrid_;
  std::vector<double> log_values_;
};

/// max over x of (f(x+y) + f(x-y) - 2 f(x)) / |y|^2 with y = step * dx.
template <int N>
double second_difference_modulus(const ScalarField<N>& f, const std::type_identity_t<Index<N>>& step) {
  const auto& g = f.grid();
  double len2 = 0.0;
  for (int d = 0; d < N; ++d) len2 += std::pow(step[d] * g.spacing(), 2);
  if (len2 == 0.0) throw Error(ErrorCode::precondition_failed, "zero step");
  double best = -kInf;
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto idx = g.indices(i);
    Index<N> plus = idx;
    Index<N> minus = idx;
    for (int d = 0; d < N; ++d) {
      plus[d] += step[d];
      minus[d] -= step[d];
    }
    best = std::max(best, (f[g.flat(plus)] + f[g.flat(minus)] - 2.0 * f[i]) / len2);
  }
  return best;
}

}  // namespace mep
