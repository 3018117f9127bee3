#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mather_ep/core.hpp"
#include "mather_ep/ep_solver.hpp"
#include "mather_ep/torus_grid.hpp"

namespace mep {

static_assert(std::endian::native == std::endian::little, "binary dumps assume a little-endian host");

/// Round-trip safe decimal form (17 significant digits).
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// JSON number, with non-finite values mapped to strings.
inline nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot open " + path);
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// CSV with columns i0[,i1,...],value.
template <int N>
std::string field_csv(const ScalarField<N>& f) {
  std::string s;
  for (int d = 0; d < N; ++d) s += "i" + std::to_string(d) + ",";
  s += "value\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto idx = f.grid().indices(i);
    for (int d = 0; d < N; ++d) s += std::to_string(idx[d]) + ",";
    s += format_double(f[i]) + "\n";
  }
  return s;
}

/// CSV with columns x indices, v indices, density value.
template <int N>
std::string density_csv(const Density<N>& mu) {
  std::string s;
  for (int d = 0; d < N; ++d) s += "i" + std::to_string(d) + ",";
  for (int d = 0; d < N; ++d) s += "j" + std::to_string(d) + ",";
  s += "value\n";
  for (std::size_t i = 0; i < mu.torus().size(); ++i) {
    const auto xi = mu.torus().indices(i);
    for (std::size_t j = 0; j < mu.velocity().size(); ++j) {
      const auto vj = mu.velocity().indices(j);
      for (int d = 0; d < N; ++d) s += std::to_string(xi[d]) + ",";
      for (int d = 0; d < N; ++d) s += std::to_string(vj[d]) + ",";
      s += format_double(mu.value(i, j)) + "\n";
    }
  }
  return s;
}

namespace detail {

constexpr std::array<char, 4> kFieldMagic{'M', 'E', 'P', 'F'};
constexpr std::array<char, 4> kDensityMagic{'M', 'E', 'P', 'D'};

template <class T>
void put(std::string& buf, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw Error(ErrorCode::io_error, "truncated binary dump");
  T value;
  std::memcpy(&value, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

inline void check_magic(const std::string& buf, std::size_t& pos, const std::array<char, 4>& magic) {
  if (buf.size() < 4 || std::memcmp(buf.data(), magic.data(), 4) != 0)
    throw Error(ErrorCode::io_error, "bad magic in binary dump");
  pos = 4;
}

}  // namespace detail

/// Header: "MEPF", uint32 N, uint32 M; then M^N doubles in row-major order.
template <int N>
std::string field_binary(const ScalarField<N>& f) {
  std::string buf(detail::kFieldMagic.data(), 4);
  detail::put<std::uint32_t>(buf, N);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(f.grid().points_per_axis()));
  for (double v : f.values()) detail::put(buf, v);
  return buf;
}

template <int N>
ScalarField<N> field_from_binary(const std::string& buf) {
  std::size_t pos = 0;
  detail::check_magic(buf, pos, detail::kFieldMagic);
  if (detail::take<std::uint32_t>(buf, pos) != N) throw Error(ErrorCode::io_error, "dimension mismatch in field dump");
  const TorusGrid<N> grid(static_cast<int>(detail::take<std::uint32_t>(buf, pos)));
  std::vector<double> values(grid.size());
  for (double& v : values) v = detail::take<double>(buf, pos);
  return ScalarField<N>(grid, std::move(values));
}

/// Header: "MEPD", uint32 N, uint32 M, uint32 Mv, double R; then the log
/// density, x-major.
template <int N>
std::string density_binary(const Density<N>& mu) {
  std::string buf(detail::kDensityMagic.data(), 4);
  detail::put<std::uint32_t>(buf, N);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(mu.torus().points_per_axis()));
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(mu.velocity().points_per_axis()));
  detail::put<double>(buf, mu.velocity().cutoff());
  for (double v : mu.log_values()) detail::put(buf, v);
  return buf;
}

template <int N>
Density<N> density_from_binary(const std::string& buf) {
  std::size_t pos = 0;
  detail::check_magic(buf, pos, detail::kDensityMagic);
  if (detail::take<std::uint32_t>(buf, pos) != N) throw Error(ErrorCode::io_error, "dimension mismatch in density dump");
  const TorusGrid<N> tg(static_cast<int>(detail::take<std::uint32_t>(buf, pos)));
  const int mv = static_cast<int>(detail::take<std::uint32_t>(buf, pos));
  const VelocityGrid<N> vg(detail::take<double>(buf, pos), mv);
  std::vector<double> logs(tg.size() * vg.size());
  for (double& v : logs) v = detail::take<double>(buf, pos);
  return Density<N>(tg, vg, std::move(logs));
}

template <int N>
nlohmann::json solution_sidecar(const EpSolution<N>& sol) {
  return {{"epsilon", json_number(sol.epsilon)},
          {"h", json_number(sol.h)},
          {"lambda", json_number(sol.lambda)},
          {"lambda_bar", json_number(sol.lambda_bar)},
          {"iterations", sol.iterations},
          {"iterations_bar", sol.iterations_bar},
          {"final_residual", json_number(sol.final_residual)},
          {"final_residual_bar", json_number(sol.final_residual_bar)}};
}

/// Writes <stem>.phi.bin, <stem>.phi_bar.bin and <stem>.json.
template <int N>
void write_solution(const std::string& stem, const EpSolution<N>& sol) {
  write_text(stem + ".phi.bin", field_binary(sol.phi));
  write_text(stem + ".phi_bar.bin", field_binary(sol.phi_bar));
  write_json(stem + ".json", solution_sidecar(sol));
}

template <int N>
EpSolution<N> read_solution(const std::string& stem) {
  EpSolution<N> sol;
  sol.phi = field_from_binary<N>(read_text(stem + ".phi.bin"));
  sol.phi_bar = field_from_binary<N>(read_text(stem + ".phi_bar.bin"));
  const auto j = nlohmann::json::parse(read_text(stem + ".json"));
  sol.epsilon = j.at("epsilon").get<double>();
  sol.h = j.at("h").get<double>();
  sol.lambda = j.at("lambda").get<double>();
  sol.lambda_bar = j.at("lambda_bar").get<double>();
  sol.iterations = j.at("iterations").get<int>();
  sol.iterations_bar = j.at("iterations_bar").get<int>();
  sol.final_residual = j.at("final_residual").get<double>();
  sol.final_residual_bar = j.at("final_residual_bar").get<double>();
  return sol;
}

}  // namespace mep
