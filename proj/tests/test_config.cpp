#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mather_ep/config.hpp"

using namespace mep;

namespace {

const char* kMinimal = R"(
[problem]
kind = "pendulum"

[schedules]
epsilon = [0.1, 0.05, 0.02]
h = 0.1
joint_epsilon = [0.1, 0.05, 0.025]

[[analysis]]
id = "a"
type = "continuation"
mode = "joint"
expect.H_limit = { value = -1.0, abs = 0.05 }
)";

std::string config_error(const std::string& text) {
  try {
    (void)parse_config(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config_error);
    return e.what();
  }
  return "";
}

std::string with(const std::string& from, const std::string& to) {
  std::string s = kMinimal;
  const auto pos = s.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST(Config, DefaultsAndDerivedSchedules) {
  const auto cfg = parse_config(kMinimal);
  EXPECT_EQ(cfg.problem.kind, "pendulum");
  EXPECT_EQ(cfg.problem.dimension, 1);
  EXPECT_EQ(cfg.grids.M, 128);
  EXPECT_EQ(cfg.grids.Mv, 257);
  EXPECT_FALSE(cfg.grids.R.has_value());
  ASSERT_EQ(cfg.schedules.coupled.size(), 3u);
  EXPECT_DOUBLE_EQ(cfg.schedules.coupled[2].second, 0.05);
  EXPECT_EQ(cfg.tolerances.max_iterations, 50000);
  EXPECT_EQ(cfg.output.directory, "mather-ep-out");
  ASSERT_EQ(cfg.analyses.size(), 1u);
  ASSERT_EQ(cfg.analyses[0].expect.size(), 1u);
  EXPECT_EQ(cfg.analyses[0].expect[0].metric, "H_limit");
  EXPECT_DOUBLE_EQ(*cfg.analyses[0].expect[0].abs, 0.05);
  EXPECT_EQ(schedule_kind(cfg.analyses[0]), "joint");
}

TEST(Config, ExplicitCoupledPairsAndFormats) {
  auto text = with("joint_epsilon = [0.1, 0.05, 0.025]", "coupled = [[0.1, 0.3], [0.05, 0.1], [0.01, 0.01]]");
  text += "\n[output]\ndirectory = \"elsewhere\"\nformats = [\"json\"]\n";
  const auto cfg = parse_config(text);
  EXPECT_DOUBLE_EQ(cfg.schedules.coupled[0].second, 0.3);
  EXPECT_FALSE(cfg.output.csv);
  EXPECT_TRUE(cfg.output.json);
  EXPECT_FALSE(cfg.output.svg);
  EXPECT_EQ(cfg.output.directory, "elsewhere");
}

TEST(Config, IncreasingScheduleIsRejected) {
  EXPECT_NE(config_error(with("[0.1, 0.05, 0.02]", "[0.02, 0.05, 0.1]")).find("schedule must decrease"),
            std::string::npos);
  EXPECT_NE(config_error(with("[0.1, 0.05, 0.025]", "[0.1, 0.1, 0.025]")).find("schedule must decrease"),
            std::string::npos);
}

TEST(Config, StructuralErrors) {
  EXPECT_NE(config_error("[problem\nkind=1").find("TOML parse error"), std::string::npos);
  EXPECT_NE(config_error(with("kind = \"pendulum\"", "kind = \"cubic\"")).find("problem.kind"), std::string::npos);
  EXPECT_NE(config_error(with("type = \"continuation\"", "type = \"spectrum\"")).find("unknown type"), std::string::npos);
  EXPECT_NE(config_error(std::string(kMinimal) + "\n[[analysis]]\nid = \"a\"\ntype = \"hypotheses\"\n").find("duplicate"),
            std::string::npos);
  EXPECT_NE(config_error(with("id = \"a\"", "id = \"a b\"")).find("may only use"), std::string::npos);
  EXPECT_NE(config_error(with("abs = 0.05", "tol = 0.05")).find("needs 'abs' or 'rel'"), std::string::npos);
  EXPECT_NE(config_error(std::string(kMinimal) + "[grids]\nMv = 256\n").find("odd"), std::string::npos);
  EXPECT_NE(config_error(std::string(kMinimal) + "[grids]\nR = \"big\"\n").find("grids.R"), std::string::npos);
  EXPECT_NE(config_error(with("[[analysis]]", "[analysis]")).find("array of tables"), std::string::npos);
}

TEST(Config, TypeSpecificRequirements) {
  EXPECT_NE(config_error(with("joint_epsilon = [0.1, 0.05, 0.025]", "")).find("coupled schedule"), std::string::npos);
  const std::string ldp = std::string(kMinimal) +
                          "\n[[analysis]]\nid = \"l\"\ntype = \"ldp\"\nregime = \"sideways\"\nx = [[0.0, 1.0]]\nv = [[0.5, 1.0]]\n";
  EXPECT_NE(config_error(ldp).find("regime"), std::string::npos);
  const std::string box = std::string(kMinimal) + "\n[[analysis]]\nid = \"l\"\ntype = \"ldp\"\nx = [[0.5, 0.1]]\nv = [[0.5, 1.0]]\n";
  EXPECT_NE(config_error(box).find("lo < hi"), std::string::npos);
  const std::string solve = std::string(kMinimal) + "\n[[analysis]]\nid = \"s\"\ntype = \"solve\"\nepsilon = 0.1\n";
  EXPECT_NE(config_error(solve).find("needs 'h'"), std::string::npos);
  const std::string shifted = with("kind = \"pendulum\"", "kind = \"shifted_quadratic\"");
  EXPECT_NE(config_error(shifted).find("omega"), std::string::npos);
}

TEST(Config, TabulatedPotentialFromFile) {
  const auto dir = std::filesystem::temp_directory_path() / "mather-ep-config-test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "u.txt");
    f << "# samples\n";
    for (int i = 0; i < 8; ++i) f << (i % 2 ? 0.5 : -0.5) << "\n";
  }
  {
    std::ofstream f(dir / "run.toml");
    f << with("kind = \"pendulum\"",
              "kind = \"separable\"\nmass = 2.0\n[problem.potential]\ntype = \"tabulated\"\nfile = \"u.txt\"");
  }
  const auto cfg = load_config(dir / "run.toml");
  EXPECT_EQ(cfg.problem.samples.size(), 8u);
  EXPECT_EQ(cfg.problem.samples_per_axis, 8);
  EXPECT_DOUBLE_EQ(cfg.problem.mass, 2.0);
  EXPECT_THROW(load_config(dir / "absent.toml"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Config, ParameterAccessors) {
  const auto cfg = parse_config(std::string(kMinimal) +
                                "\n[[analysis]]\nid = \"r\"\ntype = \"rates\"\npoints = [[0.0, 1.0], [0.5, 2.0]]\nflag = true\n");
  const auto& a = cfg.analyses[1];
  EXPECT_EQ(param_rows(a, "points").size(), 2u);
  EXPECT_TRUE(param_bool(a, "flag", false));
  EXPECT_DOUBLE_EQ(param_double(a, "missing", 3.0), 3.0);
  EXPECT_THROW(param_double(a, "missing"), Error);
  EXPECT_THROW(param_string(a, "points"), Error);
}
