#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "pdnet/rng.hpp"
#include "pdnet/topology.hpp"

namespace pdnet {

enum class LinkNoiseKind { WeightExchange, PsiExchange };

/// Stationary statistical environment: the true parameter, per-node
/// regressor covariances (diagonal), measurement-noise variances, and
/// per-directed-link noise variances for the two exchange phases.
/// Immutable after generation; safe to share across trial workers.
struct Environment {
  int num_nodes = 0;
  int param_dim = 0;
  Eigen::VectorXd true_param;              // w°, length M
  std::vector<Eigen::VectorXd> regressor_cov_diag;  // diag of R_{u,k}
  Eigen::VectorXd meas_noise_var;          // sigma^2_{v,k}
  // (l, k) entry: variance of noise on the l -> k link; structurally zero
  // on non-edges and the diagonal.
  Eigen::MatrixXd link_var_w;
  Eigen::MatrixXd link_var_psi;

  double link_var(int from, int to, LinkNoiseKind kind) const;
  /// Network-average model-noise power.
  double avg_model_noise_power() const;
  /// Network-average per-entry link-noise power of one kind, over directed
  /// edges with l in N_k \ {k}; 0 if there are no such edges.
  double avg_link_noise_power(const NetworkTopology& topology,
                              LinkNoiseKind kind) const;
};

struct EnvironmentRanges {
  // trace(R_{u,k}) uniform in [M*trace_lo, M*trace_hi]
  double trace_lo = 0.5;
  double trace_hi = 2.0;
  double meas_var_lo = 0.01;
  double meas_var_hi = 0.1;
};

/// Draws w°, diagonal covariances, measurement variances, and link-noise
/// variances, then rescales each link-noise type so its network-average
/// power sits exactly link_noise_gap_db below the network-average
/// model-noise power. Pass +infinity for ideal links (all link variances
/// zero). Deterministic per seed.
Environment generate_environment(const NetworkTopology& topology,
                                 int param_dim, double link_noise_gap_db,
                                 std::uint64_t seed,
                                 const EnvironmentRanges& ranges = {});

/// Zero-mean Gaussian 1xM row with covariance R_{u,k}.
Eigen::RowVectorXd sample_regressor(const Environment& env, int node,
                                    RngStream& rng);

/// d = u w° + v, v ~ N(0, sigma^2_{v,k}).
double sample_measurement(const Environment& env, int node,
                          const Eigen::RowVectorXd& regressor,
                          RngStream& rng);

/// Zero-mean Gaussian M-vector with covariance sigma^2 I for the given
/// directed link and exchange phase. Throws for self-pairs or non-edges
/// (variance is structurally zero there).
Eigen::VectorXd sample_link_noise(const Environment& env,
                                  const NetworkTopology& topology, int from,
                                  int to, LinkNoiseKind kind, RngStream& rng);

}  // namespace pdnet
