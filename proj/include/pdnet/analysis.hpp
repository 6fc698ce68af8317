#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>

#include "pdnet/engine.hpp"
#include "pdnet/environment.hpp"
#include "pdnet/selection.hpp"
#include "pdnet/topology.hpp"

namespace pdnet {

/// NM x NM block combination matrix: diagonal block p is
/// I - sum_{l in N_p \ {p}} a(l,p) Lambda_l, block (p,q) is a(q,p) Lambda_q
/// on edges, zero elsewhere. Rows sum to one when A is column-stochastic.
Eigen::MatrixXd build_block_combination(
    const CombinationMatrix& a, const NetworkTopology& topology,
    const std::vector<SelectionMatrix>& selections);

/// Same block structure with every Lambda replaced by E[Lambda].
Eigen::MatrixXd expected_block_combination(const CombinationMatrix& a,
                                           const NetworkTopology& topology,
                                           const SelectionSchedule& schedule);

struct StabilityReport {
  Eigen::VectorXd mu_max;  // 2 / lambda_max(R_{u,k}) per node
  bool stable = false;
};

StabilityReport mean_stability_bounds(const Environment& env,
                                      const Eigen::VectorXd& step_sizes);

enum class KronMethod { Exact, MonteCarlo };

struct ExpectedKron {
  Eigen::MatrixXd value;      // (NM)^2 x (NM)^2
  Eigen::MatrixXd std_error;  // entrywise, Monte Carlo only (else empty)
};

/// E[A^T kron A^T] over the selection distribution. The exact method uses
/// cycle averaging for globally coupled draws and the cross-node
/// independence factorization for stochastic-independent draws; both are
/// closed forms, so no joint-support enumeration cap is needed. The Monte
/// Carlo method averages mc_samples independent draws and reports an
/// entrywise standard-error estimate.
ExpectedKron expected_kron(const CombinationMatrix& a,
                           const NetworkTopology& topology,
                           const SelectionSchedule& schedule,
                           KronMethod method, long mc_samples = 0,
                           std::uint64_t seed = 0);

struct NoiseCovariances {
  Eigen::VectorXd rw_diag;    // diag of blkdiag{R^(w)_{v,k}}, length NM
  Eigen::VectorXd rpsi_diag;  // diag of blkdiag{R^(psi)_{v,k}}
};

/// Expected aggregate link-noise covariances. Identically zero for the
/// phase a mode skips (ATC: first, CTA: second) and under ideal links.
NoiseCovariances aggregate_noise_covariances(const Environment& env,
                                             const NetworkTopology& topology,
                                             const AlgorithmConfig& config);

/// All expectation blocks needed by the steady-state MSD formula.
/// Immutable once built; identity D factors are flagged rather than stored.
struct AnalysisWorkspace {
  int num_nodes = 0;
  int param_dim = 0;
  Eigen::VectorXd mu_diag;    // diag of the step-size block, length NM
  Eigen::VectorXd rbar_diag;  // diag of blkdiag{R_{u,k}}
  Eigen::MatrixXd q1, q2;     // E[A_1], E[A_2]
  bool d1_identity = true;
  bool d2_identity = true;
  Eigen::MatrixXd d1, d2;     // empty when the identity flag is set
  Eigen::VectorXd g_diag;     // mu_k^2 sigma_vk^2 R_uk
  Eigen::VectorXd h_diag;     // 1 - mu_k r
  Eigen::VectorXd rw_diag, rpsi_diag;
  /// Direct dense solve up to this contraction dimension (N^2 M^2); above
  /// it, a fixed-point iteration on the factored contraction is used.
  long dense_solve_cap = 10000;
};

AnalysisWorkspace build_workspace(const Environment& env,
                                  const NetworkTopology& topology,
                                  const AlgorithmConfig& config);

struct MeanSquareUnstable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MsdResult {
  double linear = 0.0;
  double db = 0.0;  // -inf when linear is 0
  double contraction_spectral_radius = 0.0;
};

/// Closed-form steady-state network MSD. Throws MeanSquareUnstable when the
/// contraction has spectral radius >= 1.
MsdResult theoretical_msd(const AnalysisWorkspace& ws);

/// Spectral radius of Q2 (I - M Rbar) Q1, the mean-error transition matrix.
double mean_error_spectral_radius(const AnalysisWorkspace& ws);

/// Network MSD trajectory predicted by the variance recursion, starting
/// from a deterministic initial error. Entries overflow to +inf when the
/// contraction is unstable; iteration stops early once that happens.
Eigen::VectorXd theoretical_learning_curve(
    const AnalysisWorkspace& ws, const Eigen::VectorXd& initial_stacked_error,
    long iterations);

/// One step of the exact stacked error recursion, replaying the recorded
/// draws. Serves as the oracle against the per-node engine.
Eigen::VectorXd error_recursion_step(const Eigen::VectorXd& prev_error,
                                     const IterationDraws& draws,
                                     const Environment& env,
                                     const NetworkTopology& topology,
                                     const AlgorithmConfig& config);

}  // namespace pdnet
