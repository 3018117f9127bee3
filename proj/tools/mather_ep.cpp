#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mather_ep/config.hpp"
#include "mather_ep/field_io.hpp"
#include "mather_ep/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAnalysis = 2;
constexpr int kExitConfig = 3;

int cmd_run(const std::string& path) {
  const auto cfg = mep::load_config(path);
  return mep::run_config(cfg, std::cout);
}

int cmd_validate(const std::string& path) {
  const auto cfg = mep::load_config(path);
  std::cout << "ok: " << cfg.analyses.size() << " analyses, N=" << cfg.problem.dimension << ", M=" << cfg.grids.M
            << "\n";
  return kExitOk;
}

int cmd_plot(const std::string& report_path, const std::string& kind, std::string output) {
  const auto report = nlohmann::json::parse(mep::read_text(report_path));
  const auto svg = mep::emit_plot(report, kind);
  if (output.empty()) {
    std::filesystem::path p(report_path);
    p.replace_extension("." + kind + ".svg");
    output = p.string();
  }
  mep::write_text(output, svg);
  std::cout << output << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mather-ep: entropy-penalised Mather measures on the torus"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "run every analysis of a config");
  run->add_option("config", config_path, "TOML config")->required();
  auto* validate = app.add_subcommand("validate", "parse and validate a config");
  validate->add_option("config", config_path, "TOML config")->required();

  std::string report_path;
  std::string kind;
  std::string output;
  auto* plot = app.add_subcommand("plot", "render an analysis report as SVG");
  plot->add_option("report", report_path, "report JSON written by run")->required();
  plot->add_option("--kind", kind, "ldp, continuation or field")->required();
  plot->add_option("-o,--output", output, "output SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*validate) return cmd_validate(config_path);
    return cmd_plot(report_path, kind, output);
  } catch (const mep::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.code() == mep::ErrorCode::config_error || e.code() == mep::ErrorCode::unknown_report_kind ||
        e.code() == mep::ErrorCode::io_error)
      return kExitConfig;
    return kExitAnalysis;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
