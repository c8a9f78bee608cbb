#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <string>

#include "tfs/config.hpp"
#include "tfs/io.hpp"
#include "tfs/pipeline.hpp"

namespace {

void print_report(const tfs::RunReport& report) {
  for (const auto& path : report.outputs)
    std::printf("wrote %s\n", path.c_str());
  for (const auto& [name, check] : report.checks)
    std::printf("%-32s %s  residual=%.3e  tolerance=%.3e\n", name.c_str(),
                check.pass ? "PASS" : "FAIL", check.residual, check.tolerance);
  for (const auto& timing : report.timings)
    std::printf("time %-12s %.3f s\n", timing.stage.c_str(), timing.seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-filter smoothing for linear diffusion models"};
  app.footer(
      "Subcommands:\n"
      "  run       simulate, filter both directions, fuse, check, report\n"
      "  simulate  write trajectory.csv only\n"
      "  filter    read trajectory.csv, write forward.csv and backward.csv\n"
      "  smooth    read the filter outputs, write smoothed.csv\n"
      "  verify    run the full verification suite, write report.json\n");

  std::string subcommand, config_path, preset_name, out_dir;
  std::uint64_t seed = 0;
  app.add_option("subcommand", subcommand, "run|simulate|filter|smooth|verify")
      ->required()
      ->check(CLI::IsMember({"run", "simulate", "filter", "smooth", "verify"}));
  app.add_option("--config", config_path, "JSON configuration file");
  std::string preset_help = "built-in preset:";
  for (const auto& name : tfs::preset_names()) preset_help += " " + name;
  app.add_option("--preset", preset_name, preset_help);
  auto* seed_opt =
      app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--out", out_dir, "override the configured output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (config_path.empty() == preset_name.empty()) {
      std::fprintf(stderr, "error: pass exactly one of --config or --preset\n");
      return 2;
    }
    tfs::RunConfig cfg = config_path.empty() ? tfs::preset(preset_name)
                                             : tfs::load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    tfs::RunReport report;
    if (subcommand == "run")
      report = tfs::run_pipeline(cfg);
    else if (subcommand == "simulate")
      report = tfs::run_simulate(cfg);
    else if (subcommand == "filter")
      report = tfs::run_filter(cfg);
    else if (subcommand == "smooth")
      report = tfs::run_smooth(cfg);
    else
      report = tfs::run_verify(cfg);

    print_report(report);
    if (!report.ok()) {
      std::fprintf(stderr, "FAILED: %s\n", subcommand.c_str());
      return 1;
    }
    return 0;
  } catch (const tfs::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
