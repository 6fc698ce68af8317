#include "pdnet/environment.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pdnet {

double Environment::link_var(int from, int to, LinkNoiseKind kind) const {
  const Eigen::MatrixXd& v =
      kind == LinkNoiseKind::WeightExchange ? link_var_w : link_var_psi;
  return v(from, to);
}

double Environment::avg_model_noise_power() const {
  return meas_noise_var.mean();
}

double Environment::avg_link_noise_power(const NetworkTopology& topology,
                                         LinkNoiseKind kind) const {
  double sum = 0.0;
  long count = 0;
  for (int k = 0; k < num_nodes; ++k)
    for (int l : topology.neighbor_sets[static_cast<std::size_t>(k)])
      if (l != k) {
        sum += link_var(l, k, kind);
        ++count;
      }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

Environment generate_environment(const NetworkTopology& topology,
                                 int param_dim, double link_noise_gap_db,
                                 std::uint64_t seed,
                                 const EnvironmentRanges& ranges) {
  topology.validate();
  if (param_dim < 1)
    throw std::invalid_argument("generate_environment: param_dim >= 1");
  if (link_noise_gap_db < 0.0)
    throw std::invalid_argument("generate_environment: gap_db >= 0");

  const int n = topology.num_nodes;
  const int m = param_dim;
  Environment env;
  env.num_nodes = n;
  env.param_dim = m;

  RngStream rng(seed, RngStream::id("environment"));

  env.true_param.resize(m);
  for (int j = 0; j < m; ++j) env.true_param[j] = rng.normal();

  // Per-node diagonal covariance: raw positive weights normalized to a
  // uniformly drawn target trace.
  env.regressor_cov_diag.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    double trace = m * (ranges.trace_lo +
                        (ranges.trace_hi - ranges.trace_lo) * rng.uniform());
    Eigen::VectorXd raw(m);
    for (int j = 0; j < m; ++j) raw[j] = 0.25 + 0.75 * rng.uniform();
    env.regressor_cov_diag[static_cast<std::size_t>(k)] =
        raw * (trace / raw.sum());
  }

  env.meas_noise_var.resize(n);
  for (int k = 0; k < n; ++k)
    env.meas_noise_var[k] =
        ranges.meas_var_lo +
        (ranges.meas_var_hi - ranges.meas_var_lo) * rng.uniform();

  env.link_var_w = Eigen::MatrixXd::Zero(n, n);
  env.link_var_psi = Eigen::MatrixXd::Zero(n, n);
  const bool ideal = std::isinf(link_noise_gap_db);
  if (!ideal) {
    for (Eigen::MatrixXd* mat : {&env.link_var_w, &env.link_var_psi}) {
      double sum = 0.0;
      long count = 0;
      for (int k = 0; k < n; ++k)
        for (int l : topology.neighbor_sets[static_cast<std::size_t>(k)])
          if (l != k) {
            double v = 0.5 + rng.uniform();  // shape only; rescaled below
            (*mat)(l, k) = v;
            sum += v;
            ++count;
          }
      if (count > 0) {
        // Rescale so the network-average link power per entry is exactly
        // gap_db below the network-average model-noise power.
        double target = env.avg_model_noise_power() *
                        std::pow(10.0, -link_noise_gap_db / 10.0);
        *mat *= target / (sum / static_cast<double>(count));
      }
    }
  }
  return env;
}

Eigen::RowVectorXd sample_regressor(const Environment& env, int node,
                                    RngStream& rng) {
  const Eigen::VectorXd& cov =
      env.regressor_cov_diag[static_cast<std::size_t>(node)];
  Eigen::RowVectorXd u(env.param_dim);
  for (int j = 0; j < env.param_dim; ++j)
    u[j] = std::sqrt(cov[j]) * rng.normal();
  return u;
}

double sample_measurement(const Environment& env, int node,
                          const Eigen::RowVectorXd& regressor,
                          RngStream& rng) {
  if (regressor.size() != env.param_dim)
    throw std::invalid_argument("sample_measurement: regressor length");
  double v = std::sqrt(env.meas_noise_var[node]) * rng.normal();
  return regressor.dot(env.true_param) + v;
}

Eigen::VectorXd sample_link_noise(const Environment& env,
                                  const NetworkTopology& topology, int from,
                                  int to, LinkNoiseKind kind, RngStream& rng) {
  if (from == to || !topology.has_edge(from, to))
    throw std::invalid_argument(
        "sample_link_noise: link noise only defined for neighbor pairs");
  double sigma = std::sqrt(env.link_var(from, to, kind));
  Eigen::VectorXd v(env.param_dim);
  for (int j = 0; j < env.param_dim; ++j) v[j] = sigma * rng.normal();
  return v;
}

}  // namespace pdnet
