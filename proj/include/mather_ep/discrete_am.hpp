#pragma once

#include <cstdint>
#include <vector>

#include "mather_ep/core.hpp"
#include "mather_ep/problem.hpp"
#include "mather_ep/torus_grid.hpp"

namespace mep {

/// Directed graph on torus nodes with one edge x -> wrap(x + h v) per velocity
/// node. Requires a lattice-compatible velocity grid, so every step lands on
/// a node: x + h v = target + shift exactly in grid units.
template <int N>
class PathGraph {
 public:
  struct Edge {
    std::uint32_t target = 0;
    Index<N> shift{};
    double cost = 0.0;  // h L(x, v)
  };

  template <class Lag>
  PathGraph(const Lag& lag, double h, const TorusGrid<N>& tgrid, const VelocityGrid<N>& vgrid)
      : h_(h), tgrid_(tgrid), vgrid_(vgrid) {
    const auto step = vgrid.lattice_step(tgrid, h);
    if (!step)
      throw Error(ErrorCode::precondition_failed, "path graph needs h * dv to be an integer multiple of dx");
    step_ = *step;
    const int m = tgrid.points_per_axis();
    const int half = vgrid.half_width();
    const std::size_t nv = vgrid.size();
    edges_.resize(tgrid.size() * nv);
    for (std::size_t i = 0; i < tgrid.size(); ++i) {
      const Vec<N> x = tgrid.node(i);
      const Index<N> xi = tgrid.indices(i);
      for (std::size_t j = 0; j < nv; ++j) {
        const Index<N> vj = vgrid.indices(j);
        Edge e;
        Index<N> t{};
        for (int d = 0; d < N; ++d) {
          const long raw = xi[d] + static_cast<long>(step_) * (vj[d] - half);
          const long wrapped = positive_mod(raw, m);
          e.shift[d] = static_cast<int>((raw - wrapped) / m);
          t[d] = static_cast<int>(wrapped);
        }
        e.target = static_cast<std::uint32_t>(tgrid.flat(t));
        e.cost = h * lag(x, vgrid.node(j));
        edges_[i * nv + j] = e;
      }
    }
    check_strongly_connected();
  }

  [[nodiscard]] double h() const { return h_; }
  [[nodiscard]] int lattice_step() const { return step_; }
  [[nodiscard]] std::size_t size() const { return tgrid_.size(); }
  [[nodiscard]] std::size_t out_degree() const { return vgrid_.size(); }
  [[nodiscard]] const TorusGrid<N>& torus() const { return tgrid_; }
  [[nodiscard]] const VelocityGrid<N>& velocity() const { return vgrid_; }
  [[nodiscard]] const Edge& edge(std::size_t x, std::size_t j) const { return edges_[x * vgrid_.size() + j]; }
  [[nodiscard]] double weight(std::size_t x, std::size_t j, double hbar) const { return edge(x, j).cost - h_ * hbar; }

 private:
  void check_strongly_connected() const {
    const std::size_t n = size();
    const std::size_t nv = out_degree();
    auto reach = [&](bool reverse) {
      std::vector<std::vector<std::uint32_t>> adj(n);
      for (std::size_t x = 0; x < n; ++x)
        for (std::size_t j = 0; j < nv; ++j) {
          const auto t = edge(x, j).target;
          if (reverse) adj[t].push_back(static_cast<std::uint32_t>(x));
          else adj[x].push_back(t);
        }
      std::vector<bool> seen(n, false);
      std::vector<std::uint32_t> stack{0};
      seen[0] = true;
      std::size_t count = 1;
      while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (auto w : adj[u])
          if (!seen[w]) {
            seen[w] = true;
            ++count;
            stack.push_back(w);
          }
      }
      return count == n;
    };
    if (!reach(false) || !reach(true)) throw Error(ErrorCode::not_strongly_connected, "path graph is not strongly connected");
  }

  double h_;
  int step_ = 1;
  TorusGrid<N> tgrid_;
  VelocityGrid<N> vgrid_;
  std::vector<Edge> edges_;
};

/// Minimum mean edge weight over directed cycles (Karp), divided by h: the
/// critical value Hbar_h of the graph. The Karp value is then replaced by the
/// exact mean of a critical cycle read off the optimal n-step walk, which
/// avoids the rounding of the (D_n - D_k) / (n - k) quotients.
template <int N>
double min_mean_cycle(const PathGraph<N>& g) {
  const std::size_t n = g.size();
  const std::size_t nv = g.out_degree();
  std::vector<double> d((n + 1) * n, kInf);
  std::vector<std::uint32_t> pred((n + 1) * n, 0);
  std::vector<std::uint32_t> pred_edge((n + 1) * n, 0);
  d[0] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double* cur = &d[k * n];
    double* next = &d[(k + 1) * n];
    for (std::size_t x = 0; x < n; ++x) {
      if (!std::isfinite(cur[x])) continue;
      for (std::size_t j = 0; j < nv; ++j) {
        const auto& e = g.edge(x, j);
        const double c = cur[x] + e.cost;
        if (c < next[e.target]) {
          next[e.target] = c;
          pred[(k + 1) * n + e.target] = static_cast<std::uint32_t>(x);
          pred_edge[(k + 1) * n + e.target] = static_cast<std::uint32_t>(j);
        }
      }
    }
  }
  double best = kInf;
  std::size_t best_v = 0;
  for (std::size_t v = 0; v < n; ++v) {
    const double dn = d[n * n + v];
    if (!std::isfinite(dn)) continue;
    double worst = -kInf;
    for (std::size_t k = 0; k < n; ++k) {
      const double dk = d[k * n + v];
      if (std::isfinite(dk)) worst = std::max(worst, (dn - dk) / static_cast<double>(n - k));
    }
    if (worst < best) {
      best = worst;
      best_v = v;
    }
  }
  // walk back from best_v; the first repeated node closes a cycle
  std::vector<std::size_t> walk_node(n + 1);
  std::vector<std::size_t> walk_edge(n + 1);
  std::vector<long> seen_at(n, -1);
  std::size_t x = best_v;
  for (std::size_t k = n;; --k) {
    walk_node[k] = x;
    if (seen_at[x] >= 0) {
      std::vector<double> costs;
      for (std::size_t s = k + 1; s <= static_cast<std::size_t>(seen_at[x]); ++s)
        costs.push_back(g.edge(walk_node[s - 1], walk_edge[s]).cost);
      const double mean = pairwise_sum(costs) / static_cast<double>(costs.size());
      if (std::abs(mean - best) <= 1e-9 * (1.0 + std::abs(best))) best = mean;
      break;
    }
    seen_at[x] = static_cast<long>(k);
    if (k == 0) break;
    walk_edge[k] = pred_edge[k * n + x];
    x = pred[k * n + x];
  }
  return best / g.h();
}

/// Path in lifted grid coordinates: node positions are integer vectors whose
/// reduction mod M gives the torus node, so shifts are explicit.
template <int N>
struct KPath {
  std::vector<Index<N>> lifted;
};

/// Action h sum (L - Hbar) along a path; throws InvalidEdge for steps that are
/// not graph edges.
template <int N>
double path_action(const PathGraph<N>& g, const KPath<N>& path, double hbar) {
  const auto& tg = g.torus();
  const auto& vg = g.velocity();
  const int half = vg.half_width();
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.lifted.size(); ++i) {
    Index<N> vj{};
    for (int d = 0; d < N; ++d) {
      const long delta = static_cast<long>(path.lifted[i + 1][d]) - path.lifted[i][d];
      if (delta % g.lattice_step() != 0)
        throw Error(ErrorCode::invalid_edge, "step " + std::to_string(i) + " is not a multiple of the lattice step");
      const long j = delta / g.lattice_step() + half;
      if (j < 0 || j >= vg.points_per_axis())
        throw Error(ErrorCode::invalid_edge, "step " + std::to_string(i) + " exceeds the velocity cutoff");
      vj[d] = static_cast<int>(j);
    }
    total += g.weight(tg.flat(path.lifted[i]), vg.flat(vj), hbar);
  }
  return total;
}

template <int N>
struct ManeTable {
  std::size_t source = 0;
  std::vector<double> to_source;    // S_h(x, z)
  std::vector<double> from_source;  // S_h(z, x)
  std::vector<double> peierls;      // h_h(x, z)
  int k_max = 0;
  int window = 0;
};

/// k-level dynamic programme for S_h(., z), S_h(z, .) and the windowed
/// Peierls proxy min_{k_max - window <= k <= k_max} S^k_h(., z).
template <int N>
ManeTable<N> mane_S(const PathGraph<N>& g, std::size_t z, double hbar, int k_max = 0, int window = 0) {
  const std::size_t n = g.size();
  const std::size_t nv = g.out_degree();
  if (k_max <= 0) k_max = 8 * g.torus().points_per_axis();
  if (window <= 0) window = std::max(1, k_max / 4);
  if (z >= n) throw Error(ErrorCode::precondition_failed, "source node out of range");
  ManeTable<N> t;
  t.source = z;
  t.k_max = k_max;
  t.window = window;
  t.to_source.assign(n, kInf);
  t.from_source.assign(n, kInf);
  t.peierls.assign(n, kInf);
  std::vector<double> back(n, kInf);  // S^k(., z)
  std::vector<double> fwd(n, kInf);   // S^k(z, .)
  back[z] = 0.0;
  fwd[z] = 0.0;
  std::vector<double> nb(n);
  std::vector<double> nf(n);
  for (int k = 1; k <= k_max; ++k) {
    std::fill(nf.begin(), nf.end(), kInf);
    for (std::size_t x = 0; x < n; ++x) {
      double best = kInf;
      for (std::size_t j = 0; j < nv; ++j) {
        const auto& e = g.edge(x, j);
        const double w = e.cost - g.h() * hbar;
        best = std::min(best, w + back[e.target]);
        if (std::isfinite(fwd[x])) nf[e.target] = std::min(nf[e.target], fwd[x] + w);
      }
      nb[x] = best;
    }
    back.swap(nb);
    fwd.swap(nf);
    for (std::size_t x = 0; x < n; ++x) {
      const double scale = 1e-12 * (1.0 + std::abs(t.to_source[x]));
      const bool decreased = back[x] < t.to_source[x] - scale ||
                             fwd[x] < t.from_source[x] - 1e-12 * (1.0 + std::abs(t.from_source[x]));
      if (k > k_max / 2 && decreased && std::isfinite(t.to_source[x]) && std::isfinite(t.from_source[x]))
        throw Error(ErrorCode::negative_cycle,
                    "running minimum still decreasing at k = " + std::to_string(k) + "; Hbar too large");
      t.to_source[x] = std::min(t.to_source[x], back[x]);
      t.from_source[x] = std::min(t.from_source[x], fwd[x]);
      if (k >= k_max - window) t.peierls[x] = std::min(t.peierls[x], back[x]);
    }
  }
  return t;
}

/// Dense all-pairs Mane potential S[x * n + y] = S_h(x, y) (paths of at least
/// one edge), by Floyd-Warshall.
template <int N>
std::vector<double> mane_all_pairs(const PathGraph<N>& g, double hbar) {
  const std::size_t n = g.size();
  std::vector<double> s(n * n, kInf);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t j = 0; j < g.out_degree(); ++j) {
      const auto& e = g.edge(x, j);
      s[x * n + e.target] = std::min(s[x * n + e.target], e.cost - g.h() * hbar);
    }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t x = 0; x < n; ++x) {
      const double sxk = s[x * n + k];
      if (!std::isfinite(sxk)) continue;
      double* row = &s[x * n];
      const double* krow = &s[k * n];
      for (std::size_t y = 0; y < n; ++y) row[y] = std::min(row[y], sxk + krow[y]);
    }
  for (std::size_t x = 0; x < n; ++x)
    if (s[x * n + x] < -1e-9) throw Error(ErrorCode::negative_cycle, "negative cycle through node " + std::to_string(x));
  return s;
}

/// Omega_h = {x : S_h(x, x) <= tol}.
inline std::vector<std::size_t> nonwandering_set(const std::vector<double>& all_pairs, std::size_t n, double tol) {
  std::vector<std::size_t> omega;
  for (std::size_t x = 0; x < n; ++x)
    if (all_pairs[x * n + x] <= tol) omega.push_back(x);
  return omega;
}

template <int N>
std::vector<std::size_t> nonwandering_set(const PathGraph<N>& g, double hbar, double tol) {
  return nonwandering_set(mane_all_pairs(g, hbar), g.size(), tol);
}

/// Residual of the calibration equation min_v [u(x+hv) + w] - u(x) per node
/// (forward orientation, as satisfied by h_h(., z) and hard Bellman fields).
template <int N>
std::vector<double> calibration_residuals(const PathGraph<N>& g, double hbar, const std::vector<double>& u,
                                          std::vector<std::size_t>* argmin = nullptr) {
  std::vector<double> r(g.size());
  if (argmin) argmin->assign(g.size(), 0);
  for (std::size_t x = 0; x < g.size(); ++x) {
    double best = kInf;
    for (std::size_t j = 0; j < g.out_degree(); ++j) {
      const double c = u[g.edge(x, j).target] + g.weight(x, j, hbar);
      if (c < best) {
        best = c;
        if (argmin) (*argmin)[x] = j;
      }
    }
    r[x] = best - u[x];
  }
  return r;
}

template <int N>
struct CalibratedSubaction {
  ScalarField<N> u;
  std::vector<std::size_t> argmin;  // calibrating velocity index per node
  double residual = 0.0;            // max |calibration residual|
};

/// u = h_h(., z) for z in Omega_h, verified to be a calibrated subaction.
template <int N>
CalibratedSubaction<N> calibrated_from_barrier(const PathGraph<N>& g, std::size_t z, double hbar, int k_max = 0,
                                               int window = 0, double tol = 1e-6) {
  const auto table = mane_S(g, z, hbar, k_max, window);
  if (table.to_source[z] > tol)
    throw Error(ErrorCode::precondition_failed, "source node is not in the nonwandering set");
  CalibratedSubaction<N> out;
  out.u = ScalarField<N>(g.torus(), table.peierls);
  const auto r = calibration_residuals(g, hbar, out.u.values(), &out.argmin);
  std::size_t worst = 0;
  for (std::size_t x = 0; x < r.size(); ++x)
    if (std::abs(r[x]) > std::abs(r[worst])) worst = x;
  out.residual = std::abs(r[worst]);
  if (out.residual > tol)
    throw Error(ErrorCode::not_calibrated, "calibration residual " + std::to_string(r[worst]) + " at node " +
                                               std::to_string(worst));
  return out;
}

/// max_x | u(x) - min_{p in Omega} (u(p) + S_h(x, p)) |.
template <int N>
double representation_check(const ScalarField<N>& u, const std::vector<double>& all_pairs,
                            const std::vector<std::size_t>& omega) {
  const std::size_t n = u.size();
  double worst = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    double m = kInf;
    for (std::size_t p : omega) m = std::min(m, u[p] + (p == x ? std::min(0.0, all_pairs[x * n + x]) : all_pairs[x * n + p]));
    worst = std::max(worst, std::abs(u[x] - m));
  }
  return worst;
}

/// Gap min_v [w(x, v) - (u(x+hv) - u(x))] per node: the subaction inequality
/// in the orientation u(x+hv) - u(x) <= h (L - Hbar).
template <int N>
std::vector<double> subaction_gaps(const PathGraph<N>& g, double hbar, const std::vector<double>& u) {
  std::vector<double> gap(g.size(), kInf);
  for (std::size_t x = 0; x < g.size(); ++x)
    for (std::size_t j = 0; j < g.out_degree(); ++j)
      gap[x] = std::min(gap[x], g.weight(x, j, hbar) - (u[g.edge(x, j).target] - u[x]));
  return gap;
}

template <int N>
struct SeparatingSubaction {
  ScalarField<N> u;
  bool omega_is_everything = false;
  std::vector<std::size_t> centers;  // cover nodes x_j in selection order
  std::vector<double> weights;       // 2^{-j}, normalised to sum 1
  std::vector<std::vector<double>> terms;  // S(x_j, .) - S(x_j, 0)
  std::vector<double> gaps;          // subaction gap of u per node
  double lipschitz = 0.0;            // max slope of the S(x_j, .) used
};

/// u = sum_j a_j (S(x_j, .) - S(x_j, 0)) over a cover of the complement of
/// Omega. The cover is greedy in row-major order: the first uncovered node
/// becomes the next centre x_j and covers every node where S(x_j, .) has a
/// strict gap.
template <int N>
SeparatingSubaction<N> separating_subaction(const PathGraph<N>& g, double hbar, const std::vector<double>& all_pairs,
                                            const std::vector<std::size_t>& omega, double tol) {
  const std::size_t n = g.size();
  std::vector<bool> in_omega(n, false);
  for (std::size_t p : omega) in_omega[p] = true;
  SeparatingSubaction<N> out;
  out.u = ScalarField<N>(g.torus());
  if (omega.size() == n) {
    out.omega_is_everything = true;
    out.gaps = subaction_gaps(g, hbar, out.u.values());
    return out;
  }
  std::vector<bool> covered(n, false);
  std::vector<std::vector<double>> rows;
  for (std::size_t y = 0; y < n; ++y) {
    if (in_omega[y] || covered[y]) continue;
    std::vector<double> row(all_pairs.begin() + static_cast<long>(y * n), all_pairs.begin() + static_cast<long>((y + 1) * n));
    const auto gaps = subaction_gaps(g, hbar, row);
    for (std::size_t x = 0; x < n; ++x)
      if (!in_omega[x] && gaps[x] > tol) covered[x] = true;
    out.centers.push_back(y);
    rows.push_back(std::move(row));
  }
  double total = 0.0;
  for (std::size_t j = 0; j < out.centers.size(); ++j) {
    out.weights.push_back(std::ldexp(1.0, -static_cast<int>(j + 1)));
    total += out.weights.back();
  }
  for (double& w : out.weights) w /= total;
  const auto& tg = g.torus();
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto& row = rows[j];
    std::vector<double> term(n);
    for (std::size_t x = 0; x < n; ++x) term[x] = row[x] - row[0];
    for (std::size_t x = 0; x < n; ++x) out.u[x] += out.weights[j] * term[x];
    out.terms.push_back(std::move(term));
    for (std::size_t x = 0; x < n; ++x)
      for (int d = 0; d < N; ++d) {
        auto idx = tg.indices(x);
        idx[d] += 1;
        out.lipschitz = std::max(out.lipschitz, std::abs(row[tg.flat(idx)] - row[x]) / tg.spacing());
      }
  }
  out.gaps = subaction_gaps(g, hbar, out.u.values());
  std::string bad;
  for (std::size_t x = 0; x < n; ++x) {
    const bool ok = in_omega[x] ? std::abs(out.gaps[x]) <= tol : out.gaps[x] > tol;
    if (!ok || out.gaps[x] < -tol) bad += std::to_string(x) + " ";
  }
  if (!bad.empty()) throw Error(ErrorCode::separation_failed, "strictness violated at nodes " + bad);
  return out;
}

/// max over smooth nodes of |central difference of u - (h L_x - L_v)(x, v(x))|
/// with v(x) the calibrating velocity.
template <int N, class Lag>
double graph_gradient_check(const PathGraph<N>& g, const Lag& lag, const CalibratedSubaction<N>& cal, double threshold) {
  const auto& tg = g.torus();
  const double dx = tg.spacing();
  double worst = 0.0;
  for (std::size_t x = 0; x < tg.size(); ++x) {
    const Vec<N> p = tg.node(x);
    const Vec<N> v = g.velocity().node(cal.argmin[x]);
    const auto lx = lag.dx(p, v);
    const auto lv = lag.dv(p, v);
    bool smooth = true;
    Vec<N> grad{};
    for (int d = 0; d < N; ++d) {
      auto lo = tg.indices(x);
      auto hi = lo;
      lo[d] -= 1;
      hi[d] += 1;
      const double f = (cal.u[tg.flat(hi)] - cal.u[x]) / dx;
      const double b = (cal.u[x] - cal.u[tg.flat(lo)]) / dx;
      if (std::abs(f - b) > threshold) smooth = false;
      grad[d] = 0.5 * (f + b);
    }
    if (!smooth) continue;
    for (int d = 0; d < N; ++d) worst = std::max(worst, std::abs(grad[d] - (g.h() * lx[d] - lv[d])));
  }
  return worst;
}

}  // namespace mep
