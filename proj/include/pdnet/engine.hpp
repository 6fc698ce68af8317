#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "pdnet/environment.hpp"
#include "pdnet/selection.hpp"
#include "pdnet/topology.hpp"

namespace pdnet {

enum class DiffusionMode { ATC, CTA, General };
enum class LinkQuality { Ideal, Noisy };

struct AlgorithmConfig {
  DiffusionMode mode = DiffusionMode::ATC;
  Eigen::VectorXd step_sizes;  // mu_k, per node
  LinkQuality links = LinkQuality::Noisy;
  SelectionSchedule schedule;
  CombinationMatrix a1;
  CombinationMatrix a2;

  /// ATC requires A1 = I, CTA requires A2 = I; step sizes positive.
  void validate(const NetworkTopology& topology) const;
  bool first_phase_exchanges() const { return mode != DiffusionMode::ATC; }
  bool second_phase_exchanges() const { return mode != DiffusionMode::CTA; }
};

struct NetworkState {
  std::vector<Eigen::VectorXd> weights;  // w_{k,i}
  std::vector<Eigen::VectorXd> phis;     // phi_{k,i-1}
  std::vector<Eigen::VectorXd> psis;     // psi_{k,i}

  static NetworkState zero(int num_nodes, int param_dim);
  bool finite() const;
};

/// Exactly the randomness one iteration consumes, recorded so the stacked
/// error recursion can replay it. Link-noise vectors are aligned with the
/// sorted non-self neighbors of the receiving node.
struct IterationDraws {
  Eigen::MatrixXd regressors;    // N x M, row k = u_{k,i}
  Eigen::VectorXd meas_noise;    // v_k(i)
  Eigen::VectorXd measurements;  // d_k(i)
  std::vector<SelectionMatrix> lambda_prev;  // Lambda_{k,i-1}
  std::vector<SelectionMatrix> lambda_curr;  // Lambda_{k,i}
  std::vector<std::vector<Eigen::VectorXd>> noise_w;    // v^(w), first phase
  std::vector<std::vector<Eigen::VectorXd>> noise_psi;  // v^(psi), second
};

/// First combination: selected neighbor entries plus link noise on selected
/// entries only; unselected entries filled from the node's own vector.
Eigen::VectorXd combine_first(int node, const NetworkTopology& topology,
                              const std::vector<Eigen::VectorXd>& weights,
                              const std::vector<SelectionMatrix>& selections,
                              const std::vector<Eigen::VectorXd>& link_noises,
                              const Eigen::MatrixXd& a1);

/// LMS update about the combined estimate.
Eigen::VectorXd adapt(const Eigen::VectorXd& phi,
                      const Eigen::RowVectorXd& regressor, double measurement,
                      double step);

Eigen::VectorXd combine_second(int node, const NetworkTopology& topology,
                               const std::vector<Eigen::VectorXd>& psis,
                               const std::vector<SelectionMatrix>& selections,
                               const std::vector<Eigen::VectorXd>& link_noises,
                               const Eigen::MatrixXd& a2);

/// combine_first -> adapt -> combine_second for all nodes. Throws
/// DivergenceError if the new state has non-finite entries.
NetworkState run_iteration(const NetworkState& state, const Environment& env,
                           const NetworkTopology& topology,
                           const AlgorithmConfig& config,
                           const IterationDraws& draws);

struct DivergenceError : std::runtime_error {
  long iteration;
  explicit DivergenceError(long it)
      : std::runtime_error("divergence at iteration " + std::to_string(it)),
        iteration(it) {}
};

struct TrialOptions {
  bool keep_draws = false;
  bool record_weights = false;
};

struct TrialResult {
  /// squared_dev(i, k) = ||w° - w_{k,i}||^2; rows past a divergence are
  /// left at zero.
  Eigen::MatrixXd squared_dev;
  bool diverged = false;
  long diverged_at = -1;
  long iterations_completed = 0;
  std::vector<IterationDraws> draws;                    // if keep_draws
  std::vector<std::vector<Eigen::VectorXd>> weight_log;  // if record_weights
};

/// Runs T iterations from w_{k,-1} = 0 with per-purpose RNG streams derived
/// from the trial seed. Deterministic per seed. On divergence returns the
/// partial record instead of throwing.
TrialResult run_trial(const Environment& env, const NetworkTopology& topology,
                      const AlgorithmConfig& config, long horizon,
                      std::uint64_t seed, const TrialOptions& options = {});

/// Versioned binary draw-log format (see docs in engine.cpp).
void save_draw_log(std::ostream& out, const std::vector<IterationDraws>& log);
std::vector<IterationDraws> load_draw_log(std::istream& in);

}  // namespace pdnet
