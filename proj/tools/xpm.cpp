#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "xpm/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Experiment analysis engine: regression, quantile, Bayesian and panel effects"};
  app.require_subcommand(1);

  std::string config, out;
  xpm::AnalyzeOptions options;
  auto* analyze = app.add_subcommand("analyze", "Run the analyses in a config and write a JSON report");
  analyze->add_option("--config", config, "Analysis config (JSON)")->required();
  analyze->add_option("--out", out, "Report path")->required();
  analyze->add_flag("--parallel", options.parallel, "Run analysis blocks concurrently (XPM_THREADS sets workers)");
  analyze->add_flag("--timings", options.timings, "Include wall-clock timings (makes the report non-deterministic)");

  std::string sim_config, sim_out;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic experiment with known truth");
  simulate->add_option("--config", sim_config, "Simulation config (JSON)")->required();
  simulate->add_option("--out", sim_out, "Output directory for data.csv and truth.json")->required();

  std::string bench_config, bench_out;
  auto* bench = app.add_subcommand("bench", "Time raw against compressed WLS fits");
  bench->add_option("--config", bench_config, "Bench config (JSON)")->required();
  bench->add_option("--out", bench_out, "Optional JSON copy of the timing table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : xpm::exit_config;
  }

  if (*analyze) return xpm::run_analyze(config, out, options, std::cout, std::cerr);
  if (*simulate) return xpm::run_simulate(sim_config, sim_out, std::cout, std::cerr);
  if (*bench) {
    std::optional<std::filesystem::path> path;
    if (!bench_out.empty()) path = bench_out;
    return xpm::run_bench(bench_config, path, std::cout, std::cerr);
  }
  return xpm::exit_config;
}
