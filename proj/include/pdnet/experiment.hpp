#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "pdnet/analysis.hpp"
#include "pdnet/engine.hpp"

namespace pdnet {

inline constexpr double kDbFloor = -200.0;

double to_db(double linear);  // 10 log10, floored at kDbFloor

struct GridEntry {
  DiffusionMode mode = DiffusionMode::ATC;
  SelectionScheme scheme = SelectionScheme::Sequential;
  int entries = 0;  // L
  LinkQuality links = LinkQuality::Noisy;
  std::optional<PhaseCoupling> coupling;  // default per scheme when unset

  std::string id() const;
};

struct ExperimentConfig {
  int num_nodes = 10;
  double target_avg_neighbors = 2.0;
  std::uint64_t topology_seed = 1;

  int param_dim = 8;
  double link_noise_gap_db = 35.0;
  std::uint64_t environment_seed = 2;

  double step_size = 0.01;

  long trials = 200;
  long horizon = 2000;
  double steady_state_window = 0.1;  // trailing fraction
  std::uint64_t seed = 3;

  std::vector<GridEntry> grid;
  std::string output_dir = "out";
};

/// Parses the config file (JSON; unknown keys are errors). A manifest
/// emitted by a previous run is accepted too: its embedded config is used,
/// so a run can be reproduced from its own manifest.
ExperimentConfig load_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& config);

/// Realizes one grid entry as an engine configuration.
AlgorithmConfig make_algorithm_config(const GridEntry& entry,
                                      const NetworkTopology& topology,
                                      const ExperimentConfig& config);

struct LearningCurve {
  GridEntry entry;
  /// per_trial(t, i): network-average squared deviation, trial t, iter i.
  Eigen::MatrixXd per_trial;
  Eigen::VectorXd msd_db;  // ensemble average per iteration, in dB
  bool theory_ok = false;
  double theory_linear = 0.0;
  double theory_db = kDbFloor;
  std::string theory_error;
  long diverged_trials = 0;
};

struct SteadyStateEstimate {
  double linear = 0.0;
  double db = kDbFloor;
  double stderr_linear = 0.0;
  double stderr_db = 0.0;
  bool converged = false;
};

struct ExperimentResult {
  ExperimentConfig config;
  NetworkTopology topology;
  Environment environment;
  std::vector<LearningCurve> curves;
};

/// Validates every grid entry, then runs the seeded trial ensemble for each
/// (trials execute concurrently; reduction order is fixed by trial index)
/// and attaches the theoretical steady-state MSD. Deterministic given the
/// config seeds.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Trailing-window ensemble steady state. Flags non-convergence when the
/// last two windows differ by more than 0.5 dB; the value is still
/// reported.
SteadyStateEstimate estimate_steady_state(const LearningCurve& curve,
                                          double window_fraction);

struct ComparisonRow {
  std::string entry_id;
  GridEntry entry;
  double sim_db = kDbFloor;
  double theory_db = kDbFloor;
  double gap_db = 0.0;
  double stderr_db = 0.0;
  bool theory_ok = false;
  bool converged = false;
};

std::vector<ComparisonRow> compare_theory_simulation(
    const ExperimentResult& result);

/// Writes curves.csv, comparison.csv, and manifest.json under the output
/// directory. The manifest echoes the full config plus all realized
/// environment values at full precision.
void emit_outputs(const ExperimentResult& result,
                  const std::string& output_dir);

/// Theory-only report (used by the analyze subcommand).
std::string analysis_report(const ExperimentConfig& config);

/// Precondition and stability check without running trials; returns a
/// human-readable report and sets ok=false on any violation.
struct ValidationReport {
  bool ok = true;
  std::string text;
};
ValidationReport validate_experiment(const ExperimentConfig& config);

}  // namespace pdnet
