#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "mather_ep/core.hpp"

using namespace mep;

TEST(PairwiseSum, MatchesNaiveSumOnIntegers) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  EXPECT_EQ(pairwise_sum(v), 999.0 * 1000.0 / 2.0);
}

TEST(PairwiseSum, DependsOnlyOnInputOrder) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(4097);
  for (double& x : v) x = u(rng);
  const std::vector<double> copy = v;
  EXPECT_EQ(pairwise_sum(v), pairwise_sum(copy));
}

TEST(LogSumExp, StableForLargeArguments) {
  const std::vector<double> v{1000.0, 1000.0};
  EXPECT_NEAR(log_sum_exp(v), 1000.0 + std::log(2.0), 1e-12);
  const std::vector<double> w{-1000.0, -kInf};
  EXPECT_NEAR(log_sum_exp(w), -1000.0, 1e-12);
}

TEST(LogSumExp, AllMinusInfinityStaysMinusInfinity) {
  const std::vector<double> v{-kInf, -kInf};
  EXPECT_EQ(log_sum_exp(v), -kInf);
  EXPECT_EQ(log_sum_exp(std::vector<double>{}), -kInf);
}

TEST(Wrapping, UnitIntervalAndCircleDistance) {
  EXPECT_DOUBLE_EQ(wrap_unit(1.25), 0.25);
  EXPECT_DOUBLE_EQ(wrap_unit(-0.25), 0.75);
  EXPECT_EQ(wrap_unit(-1e-18), 0.0);
  EXPECT_NEAR(circle_distance(0.05, 0.95), 0.1, 1e-15);
  EXPECT_EQ(positive_mod(-1, 8), 7);
  EXPECT_EQ(positive_mod(17, 8), 1);
}

TEST(ErrorType, MessageCarriesCodeName) {
  const Error e(ErrorCode::cutoff_too_small, "boundary");
  EXPECT_EQ(e.code(), ErrorCode::cutoff_too_small);
  EXPECT_STREQ(e.what(), "CutoffTooSmall: boundary");
  EXPECT_EQ(to_string(ErrorCode::not_strongly_connected), "NotStronglyConnected");
}
