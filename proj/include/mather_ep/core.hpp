#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mep {

/// Points and velocities live in R^N; N is a compile-time dimension.
template <int N>
using Vec = std::array<double, N>;

template <int N>
using Index = std::array<int, N>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ErrorCode {
  cutoff_too_small,
  hypothesis_violated,
  no_convergence,
  lambda_mismatch,
  too_large,
  power_iteration_stalled,
  mass_deviation,
  negative_density,
  not_cauchy,
  mass_underflow,
  precondition_failed,
  not_strongly_connected,
  invalid_edge,
  negative_cycle,
  not_calibrated,
  separation_failed,
  unknown_report_kind,
  config_error,
  io_error,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::cutoff_too_small: return "CutoffTooSmall";
    case ErrorCode::hypothesis_violated: return "HypothesisViolated";
    case ErrorCode::no_convergence: return "NoConvergence";
    case ErrorCode::lambda_mismatch: return "LambdaMismatch";
    case ErrorCode::too_large: return "TooLarge";
    case ErrorCode::power_iteration_stalled: return "PowerIterationStalled";
    case ErrorCode::mass_deviation: return "MassDeviation";
    case ErrorCode::negative_density: return "NegativeDensity";
    case ErrorCode::not_cauchy: return "NotCauchy";
    case ErrorCode::mass_underflow: return "MassUnderflow";
    case ErrorCode::precondition_failed: return "PreconditionFailed";
    case ErrorCode::not_strongly_connected: return "NotStronglyConnected";
    case ErrorCode::invalid_edge: return "InvalidEdge";
    case ErrorCode::negative_cycle: return "NegativeCycle";
    case ErrorCode::not_calibrated: return "NotCalibrated";
    case ErrorCode::separation_failed: return "SeparationFailed";
    case ErrorCode::unknown_report_kind: return "UnknownReportKind";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::io_error: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Pairwise summation with a fixed split topology, so the result depends only
// on the input order.
inline double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 32;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

/// log(sum(exp(values))), -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> values) {
  double m = -kInf;
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  std::vector<double> shifted(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) shifted[i] = std::exp(values[i] - m);
  return m + std::log(pairwise_sum(shifted));
}

template <int N>
constexpr std::size_t ipow(std::size_t base) {
  std::size_t r = 1;
  for (int d = 0; d < N; ++d) r *= base;
  return r;
}

inline std::size_t ipow(std::size_t base, int exponent) {
  std::size_t r = 1;
  for (int d = 0; d < exponent; ++d) r *= base;
  return r;
}

template <int N>
double dot(const Vec<N>& a, const Vec<N>& b) {
  double s = 0.0;
  for (int d = 0; d < N; ++d) s += a[d] * b[d];
  return s;
}

template <int N>
double norm(const Vec<N>& a) {
  return std::sqrt(dot<N>(a, a));
}

inline double wrap_unit(double x) {
  double r = x - std::floor(x);
  return r >= 1.0 ? 0.0 : r;
}

/// Distance on the circle R/Z.
inline double circle_distance(double a, double b) {
  const double d = wrap_unit(a - b);
  return std::min(d, 1.0 - d);
}

inline int positive_mod(long a, int m) {
  long r = a % m;
  return static_cast<int>(r < 0 ? r + m : r);
}

inline double max_abs_difference(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mep
