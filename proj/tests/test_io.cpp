#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mather_ep/field_io.hpp"
#include "mather_ep/pipeline.hpp"
#include "mather_ep/svg.hpp"

using namespace mep;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mather-ep-io-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Format, DoublesRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(format_double(x)), x);
  EXPECT_EQ(format_double(kInf), "inf");
  EXPECT_EQ(format_double(-kInf), "-inf");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_TRUE(json_number(1.5).is_number());
  EXPECT_EQ(json_number(kInf), "inf");
}

TEST(FieldBinary, RoundTripIsBitExact) {
  const TorusGrid<2> g(6);
  ScalarField<2> f(g);
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = std::sin(1.0 + i) / 3.0;
  const auto buf = field_binary(f);
  EXPECT_EQ(buf.size(), 4 + 4 + 4 + 8 * g.size());
  EXPECT_EQ(buf.substr(0, 4), "MEPF");
  const auto back = field_from_binary<2>(buf);
  EXPECT_EQ(back.grid(), g);
  EXPECT_EQ(back.values(), f.values());
  EXPECT_THROW(field_from_binary<1>(buf), Error);
  EXPECT_THROW(field_from_binary<2>(buf.substr(0, 30)), Error);
  EXPECT_THROW(field_from_binary<2>("XXXX" + buf.substr(4)), Error);
}

TEST(DensityBinary, RoundTripKeepsLogValues) {
  const TorusGrid<1> g(4);
  const VelocityGrid<1> vg(1.25, 5);
  std::vector<double> logs(20);
  for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = -0.5 * static_cast<double>(i);
  logs[3] = -kInf;
  const Density<1> mu(g, vg, logs);
  const auto back = density_from_binary<1>(density_binary(mu));
  EXPECT_EQ(back.log_values(), logs);
  EXPECT_EQ(back.velocity(), vg);
}

TEST(Csv, FieldAndDensityLayouts) {
  const TorusGrid<1> g(4);
  const ScalarField<1> f(g, std::vector<double>{1.0, 2.0, 3.0, 4.5});
  EXPECT_EQ(field_csv(f), "i0,value\n0,1\n1,2\n2,3\n3,4.5\n");
  const VelocityGrid<1> vg(1.0, 3);
  const auto mu = Density<1>::from_values(g, vg, std::vector<double>(12, 0.5));
  const auto csv = density_csv(mu);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "i0,j0,value");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
}

TEST(SolutionFiles, WriteAndReadBack) {
  const auto dir = scratch_dir("solution");
  const TorusGrid<1> g(16);
  const VelocityGrid<1> vg(default_cutoff(2.24, 0.1), 61);
  const auto sol = solve_pair<1>(LagrangianSpec<1>::pendulum(), 0.1, 0.1, g, vg);
  write_solution((dir / "s").string(), sol);
  const auto back = read_solution<1>((dir / "s").string());
  EXPECT_EQ(back.phi.values(), sol.phi.values());
  EXPECT_EQ(back.phi_bar.values(), sol.phi_bar.values());
  EXPECT_EQ(back.lambda, sol.lambda);
  EXPECT_EQ(back.iterations, sol.iterations);
  EXPECT_THROW(read_text((dir / "missing").string()), Error);
  fs::remove_all(dir);
}

TEST(Cache, StoreSolvesOnceAndReusesDisk) {
  const auto dir = scratch_dir("cache");
  const TorusGrid<1> g(16);
  const VelocityGrid<1> vg(default_cutoff(2.24, 0.1), 61);
  const auto lag = LagrangianSpec<1>::pendulum();
  SolutionStore<1> a("id", dir);
  const auto s1 = a.get(lag, 0.1, 0.1, g, vg, {}, nullptr);
  const auto s2 = a.get(lag, 0.1, 0.1, g, vg, {}, nullptr);
  EXPECT_EQ(a.solves(), 1);
  EXPECT_EQ(a.hits(), 1);
  SolutionStore<1> b("id", dir);
  const auto s3 = b.get(lag, 0.1, 0.1, g, vg, {}, nullptr);
  EXPECT_EQ(b.solves(), 0);
  EXPECT_EQ(s3.phi.values(), s1.phi.values());
  SolutionStore<1> c("other", dir);
  (void)c.get(lag, 0.1, 0.1, g, vg, {}, nullptr);
  EXPECT_EQ(c.solves(), 1);
  fs::remove_all(dir);
}

TEST(Cache, ContentHashIsStable) {
  EXPECT_EQ(content_hash(""), "cbf29ce484222325");
  EXPECT_EQ(content_hash("a"), "af63dc4c8601ec8c");
  EXPECT_NE(content_hash("eps=0.1"), content_hash("eps=0.2"));
}

TEST(Svg, LinePlotIsDeterministicAndCarriesRule) {
  PlotSeries s{{0.1, 0.05, 0.01}, {1.0, 0.5, 0.2}, "series"};
  const auto a = svg_line_plot("t", "x", "y", {s}, -0.125, true);
  EXPECT_EQ(a, svg_line_plot("t", "x", "y", {s}, -0.125, true));
  EXPECT_NE(a.find("<line class=\"bound\""), std::string::npos);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n') > 5, true);
  EXPECT_NE(a.find("<polyline"), std::string::npos);
  EXPECT_EQ(svg_line_plot("t", "x", "y", {s}).find("class=\"bound\""), std::string::npos);
  EXPECT_NE(svg_line_plot("a<b", "x", "y", {s}).find("a&lt;b"), std::string::npos);
}

TEST(Svg, FieldPlotsForBothDimensions) {
  const ScalarField<1> f1(TorusGrid<1>(8), 1.0);
  EXPECT_NE(svg_field("f", f1).find("<polyline"), std::string::npos);
  const ScalarField<2> f2(TorusGrid<2>(4), std::vector<double>(16, 0.5));
  const auto s = svg_field("f", f2);
  std::size_t rects = 0;
  for (std::size_t p = s.find("<rect x="); p != std::string::npos; p = s.find("<rect x=", p + 1)) ++rects;
  EXPECT_EQ(rects, 16u);
}

TEST(Plot, UnknownKindIsRejected) {
  const nlohmann::json report{{"epsilons", {0.1, 0.05}}, {"lambda_over_h", {1.0, 0.9}}};
  EXPECT_NE(emit_plot(report, "continuation").find("<svg"), std::string::npos);
  try {
    (void)emit_plot(report, "histogram");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unknown_report_kind);
  }
  EXPECT_THROW(emit_plot(report, "ldp"), Error);
}
