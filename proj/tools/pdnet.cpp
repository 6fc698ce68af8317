#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "pdnet/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Partial-diffusion LMS network simulator and steady-state "
               "MSD analyzer"};
  app.require_subcommand(1);

  std::string config_path;
  long trials_override = -1;
  long iters_override = -1;
  long long seed_override = -1;
  std::string out_override;

  auto* run = app.add_subcommand("run", "Run the Monte Carlo experiment grid");
  run->add_option("--config", config_path, "Config or manifest file (JSON)")
      ->required();
  run->add_option("--trials", trials_override, "Override ensemble size");
  run->add_option("--iters", iters_override, "Override horizon");
  run->add_option("--seed", seed_override, "Override master trial seed");
  run->add_option("--out", out_override, "Override output directory");

  auto* analyze =
      app.add_subcommand("analyze", "Theoretical steady-state MSD only");
  analyze->add_option("--config", config_path, "Config file (JSON)")
      ->required();

  auto* validate = app.add_subcommand(
      "validate", "Check preconditions and stability bounds, run nothing");
  validate->add_option("--config", config_path, "Config file (JSON)")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    pdnet::ExperimentConfig config = pdnet::load_config_file(config_path);
    if (app.got_subcommand(run)) {
      if (trials_override > 0) config.trials = trials_override;
      if (iters_override > 0) config.horizon = iters_override;
      if (seed_override >= 0)
        config.seed = static_cast<std::uint64_t>(seed_override);
      if (!out_override.empty()) config.output_dir = out_override;
      pdnet::ExperimentResult result = pdnet::run_experiment(config);
      pdnet::emit_outputs(result, config.output_dir);
      for (const auto& row : pdnet::compare_theory_simulation(result)) {
        std::printf("%-40s sim %8.2f dB", row.entry_id.c_str(), row.sim_db);
        if (row.theory_ok)
          std::printf("  theory %8.2f dB  gap %+6.2f dB", row.theory_db,
                      row.gap_db);
        else
          std::printf("  theory unstable");
        if (!row.converged) std::printf("  [not converged]");
        std::printf("\n");
      }
      std::printf("outputs written to %s\n", config.output_dir.c_str());
    } else if (app.got_subcommand(analyze)) {
      std::cout << pdnet::analysis_report(config);
    } else {
      pdnet::ValidationReport report = pdnet::validate_experiment(config);
      std::cout << report.text;
      return report.ok ? 0 : 1;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
