#include "pdnet/analysis.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace pdnet {
namespace {

struct Triplet {
  int row, col;
  double value;
};

// Nonzeros of G_l^T kron diag(lambda), where G_l collects node l's
// contribution to the block combination matrix: A = I + sum_l G_l kron
// Lambda_l with G_l(p,l) = a(l,p) and G_l(p,p) = -a(l,p) for p in N_l\{l}.
std::vector<Triplet> node_factor_triplets(const CombinationMatrix& a,
                                          const NetworkTopology& topology,
                                          int l,
                                          const Eigen::VectorXd& lambda) {
  const int m = static_cast<int>(lambda.size());
  std::vector<Triplet> t;
  for (int p : topology.neighbor_sets[static_cast<std::size_t>(l)]) {
    if (p == l) continue;
    double w = a.weights(l, p);
    if (w == 0.0) continue;
    for (int j = 0; j < m; ++j) {
      if (lambda[j] == 0.0) continue;
      // transpose of G_l: entries (l,p) and (p,p)
      t.push_back({l * m + j, p * m + j, w * lambda[j]});
      t.push_back({p * m + j, p * m + j, -w * lambda[j]});
    }
  }
  return t;
}

void accumulate_triplet_kron(Eigen::MatrixXd& d,
                             const std::vector<Triplet>& x, double weight,
                             long nm) {
  for (const auto& t1 : x)
    for (const auto& t2 : x)
      d(t1.row * nm + t2.row, t1.col * nm + t2.col) +=
          weight * t1.value * t2.value;
}

void accumulate_dense_kron(Eigen::MatrixXd& d, const Eigen::MatrixXd& a,
                           double weight) {
  const long nm = a.rows();
  for (long i = 0; i < nm; ++i)
    for (long j = 0; j < nm; ++j) {
      double aij = weight * a(i, j);
      if (aij == 0.0) continue;
      d.block(i * nm, j * nm, nm, nm) += aij * a;
    }
}

// Joint selection configuration c (one of B global phases) as per-node
// selection vectors, honoring the coupling convention.
std::vector<SelectionMatrix> joint_configuration(
    const SelectionSchedule& schedule, int num_nodes, int c) {
  std::vector<SelectionMatrix> sel(static_cast<std::size_t>(num_nodes));
  const int b = schedule.num_subsets();
  for (int k = 0; k < num_nodes; ++k) {
    int subset = c;
    if (schedule.scheme == SelectionScheme::Sequential &&
        schedule.phase_coupling == PhaseCoupling::IndependentPerNode)
      subset = (c + k) % b;
    sel[static_cast<std::size_t>(k)] =
        selection_from_subset(schedule, schedule.empty() ? -1 : subset);
  }
  return sel;
}

bool globally_coupled(const SelectionSchedule& schedule) {
  return schedule.scheme == SelectionScheme::Sequential ||
         schedule.phase_coupling == PhaseCoupling::SharedAcrossNodes;
}

}  // namespace

Eigen::MatrixXd build_block_combination(
    const CombinationMatrix& a, const NetworkTopology& topology,
    const std::vector<SelectionMatrix>& selections) {
  const int n = topology.num_nodes;
  if (a.weights.rows() != n ||
      selections.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("build_block_combination: dimension mismatch");
  const int m = static_cast<int>(selections.front().diagonal.size());
  Eigen::MatrixXd blk = Eigen::MatrixXd::Identity(n * m, n * m);
  for (int p = 0; p < n; ++p)
    for (int l : topology.neighbor_sets[static_cast<std::size_t>(p)]) {
      if (l == p) continue;
      double w = a.weights(l, p);
      const auto& lam = selections[static_cast<std::size_t>(l)].diagonal;
      for (int j = 0; j < m; ++j)
        if (lam[static_cast<std::size_t>(j)]) {
          blk(p * m + j, p * m + j) -= w;
          blk(p * m + j, l * m + j) += w;
        }
    }
  return blk;
}

Eigen::MatrixXd expected_block_combination(const CombinationMatrix& a,
                                           const NetworkTopology& topology,
                                           const SelectionSchedule& schedule) {
  const int n = topology.num_nodes;
  const int m = schedule.param_dim;
  const Eigen::VectorXd e = expected_selection(schedule);
  Eigen::MatrixXd blk = Eigen::MatrixXd::Identity(n * m, n * m);
  for (int p = 0; p < n; ++p)
    for (int l : topology.neighbor_sets[static_cast<std::size_t>(p)]) {
      if (l == p) continue;
      double w = a.weights(l, p);
      for (int j = 0; j < m; ++j) {
        blk(p * m + j, p * m + j) -= w * e[j];
        blk(p * m + j, l * m + j) += w * e[j];
      }
    }
  return blk;
}

StabilityReport mean_stability_bounds(const Environment& env,
                                      const Eigen::VectorXd& step_sizes) {
  StabilityReport report;
  report.mu_max.resize(env.num_nodes);
  report.stable = true;
  for (int k = 0; k < env.num_nodes; ++k) {
    double lmax =
        env.regressor_cov_diag[static_cast<std::size_t>(k)].maxCoeff();
    report.mu_max[k] = 2.0 / lmax;
    if (!(step_sizes[k] > 0.0 && step_sizes[k] < report.mu_max[k]))
      report.stable = false;
  }
  return report;
}

ExpectedKron expected_kron(const CombinationMatrix& a,
                           const NetworkTopology& topology,
                           const SelectionSchedule& schedule,
                           KronMethod method, long mc_samples,
                           std::uint64_t seed) {
  const int n = topology.num_nodes;
  const int m = schedule.param_dim;
  const long nm = static_cast<long>(n) * m;
  const long dim = nm * nm;
  ExpectedKron result;

  if (a.is_identity() || schedule.empty()) {
    // A = I_NM regardless of the draw.
    result.value = Eigen::MatrixXd::Identity(dim, dim);
    if (method == KronMethod::MonteCarlo)
      result.std_error = Eigen::MatrixXd::Zero(dim, dim);
    return result;
  }

  const int b = schedule.num_subsets();

  if (method == KronMethod::MonteCarlo) {
    if (mc_samples < 2)
      throw std::invalid_argument("expected_kron: mc_samples >= 2");
    RngStream rng(seed, RngStream::id("expected-kron"));
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(dim, dim);
    std::vector<SelectionMatrix> sel(static_cast<std::size_t>(n));
    for (long s = 0; s < mc_samples; ++s) {
      if (schedule.scheme == SelectionScheme::Stochastic &&
          schedule.phase_coupling == PhaseCoupling::IndependentPerNode) {
        for (auto& sk : sel)
          sk = selection_from_subset(
              schedule,
              static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(b))));
      } else {
        sel = joint_configuration(
            schedule, n,
            static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(b))));
      }
      Eigen::MatrixXd at = build_block_combination(a, topology, sel).transpose();
      Eigen::MatrixXd term = Eigen::MatrixXd::Zero(dim, dim);
      accumulate_dense_kron(term, at, 1.0);
      sum += term;
      sumsq += term.cwiseProduct(term);
    }
    result.value = sum / static_cast<double>(mc_samples);
    Eigen::MatrixXd var =
        (sumsq / static_cast<double>(mc_samples) -
         result.value.cwiseProduct(result.value))
            .cwiseMax(0.0) /
        static_cast<double>(mc_samples - 1);
    result.std_error = var.cwiseSqrt();
    return result;
  }

  result.value = Eigen::MatrixXd::Zero(dim, dim);
  if (globally_coupled(schedule)) {
    // Exact cycle / shared-draw average over the B joint configurations.
    for (int c = 0; c < b; ++c) {
      Eigen::MatrixXd at =
          build_block_combination(a, topology, joint_configuration(schedule, n, c))
              .transpose();
      accumulate_dense_kron(result.value, at, 1.0 / b);
    }
    return result;
  }

  // Stochastic-independent: E[A^T kron A^T] factorizes over nodes.
  // With A^T = I + sum_l X_l, X_l = G_l^T kron Lambda_l and Lambda_l
  // independent across nodes,
  //   E = kron(Q^T, Q^T) + sum_l ( E[kron(X_l, X_l)] - kron(Xbar_l, Xbar_l) )
  Eigen::MatrixXd qt =
      expected_block_combination(a, topology, schedule).transpose();
  accumulate_dense_kron(result.value, qt, 1.0);
  const Eigen::VectorXd ebar = expected_selection(schedule);
  for (int l = 0; l < n; ++l) {
    accumulate_triplet_kron(result.value,
                            node_factor_triplets(a, topology, l, ebar), -1.0,
                            nm);
    for (int c = 0; c < b; ++c) {
      Eigen::VectorXd lam = selection_from_subset(schedule, c).as_vector();
      accumulate_triplet_kron(result.value,
                              node_factor_triplets(a, topology, l, lam),
                              1.0 / b, nm);
    }
  }
  return result;
}

NoiseCovariances aggregate_noise_covariances(const Environment& env,
                                             const NetworkTopology& topology,
                                             const AlgorithmConfig& config) {
  const int n = env.num_nodes;
  const int m = env.param_dim;
  NoiseCovariances cov;
  cov.rw_diag = Eigen::VectorXd::Zero(n * m);
  cov.rpsi_diag = Eigen::VectorXd::Zero(n * m);
  if (config.links == LinkQuality::Ideal) return cov;
  const Eigen::VectorXd e = expected_selection(config.schedule);
  for (int k = 0; k < n; ++k)
    for (int l : topology.neighbor_sets[static_cast<std::size_t>(k)]) {
      if (l == k) continue;
      if (config.first_phase_exchanges()) {
        double a1 = config.a1.weights(l, k);
        double s2 = env.link_var(l, k, LinkNoiseKind::WeightExchange);
        for (int j = 0; j < m; ++j)
          cov.rw_diag[k * m + j] += a1 * a1 * e[j] * s2;
      }
      if (config.second_phase_exchanges()) {
        double a2 = config.a2.weights(l, k);
        double s2 = env.link_var(l, k, LinkNoiseKind::PsiExchange);
        for (int j = 0; j < m; ++j)
          cov.rpsi_diag[k * m + j] += a2 * a2 * e[j] * s2;
      }
    }
  return cov;
}

AnalysisWorkspace build_workspace(const Environment& env,
                                  const NetworkTopology& topology,
                                  const AlgorithmConfig& config) {
  config.validate(topology);
  const int n = env.num_nodes;
  const int m = env.param_dim;
  AnalysisWorkspace ws;
  ws.num_nodes = n;
  ws.param_dim = m;
  ws.mu_diag.resize(n * m);
  ws.rbar_diag.resize(n * m);
  ws.g_diag.resize(n * m);
  for (int k = 0; k < n; ++k) {
    const auto& r = env.regressor_cov_diag[static_cast<std::size_t>(k)];
    for (int j = 0; j < m; ++j) {
      ws.mu_diag[k * m + j] = config.step_sizes[k];
      ws.rbar_diag[k * m + j] = r[j];
      ws.g_diag[k * m + j] = config.step_sizes[k] * config.step_sizes[k] *
                             env.meas_noise_var[k] * r[j];
    }
  }
  ws.h_diag = Eigen::VectorXd::Ones(n * m) -
              ws.mu_diag.cwiseProduct(ws.rbar_diag);
  ws.q1 = expected_block_combination(config.a1, topology, config.schedule);
  ws.q2 = expected_block_combination(config.a2, topology, config.schedule);
  ws.d1_identity = config.a1.is_identity() || config.schedule.empty();
  ws.d2_identity = config.a2.is_identity() || config.schedule.empty();
  if (!ws.d1_identity)
    ws.d1 = expected_kron(config.a1, topology, config.schedule,
                          KronMethod::Exact)
                .value;
  if (!ws.d2_identity)
    ws.d2 = expected_kron(config.a2, topology, config.schedule,
                          KronMethod::Exact)
                .value;
  NoiseCovariances cov = aggregate_noise_covariances(env, topology, config);
  ws.rw_diag = cov.rw_diag;
  ws.rpsi_diag = cov.rpsi_diag;
  return ws;
}

double mean_error_spectral_radius(const AnalysisWorkspace& ws) {
  Eigen::MatrixXd t = ws.q2 * ws.h_diag.asDiagonal() * ws.q1;
  return t.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

// F x with F = D1 diag(h kron h) D2, never forming F.
Eigen::VectorXd apply_contraction(const AnalysisWorkspace& ws,
                                  const Eigen::VectorXd& x) {
  const long nm = static_cast<long>(ws.num_nodes) * ws.param_dim;
  Eigen::VectorXd y = ws.d2_identity ? x : Eigen::VectorXd(ws.d2 * x);
  for (long a = 0; a < nm; ++a)
    for (long b = 0; b < nm; ++b)
      y[a * nm + b] *= ws.h_diag[a] * ws.h_diag[b];
  if (!ws.d1_identity) y = ws.d1 * y;
  return y;
}

// Driving row vector of the variance relation, as a column:
// [vec(G)^T + vec(H Rw H)^T] D2 + vec(Rpsi)^T. All covariance blocks are
// diagonal here.
Eigen::VectorXd driving_vector(const AnalysisWorkspace& ws) {
  const long nm = static_cast<long>(ws.num_nodes) * ws.param_dim;
  const long dim = nm * nm;
  Eigen::VectorXd pre = Eigen::VectorXd::Zero(dim);
  for (long j = 0; j < nm; ++j)
    pre[j * nm + j] =
        ws.g_diag[j] + ws.h_diag[j] * ws.h_diag[j] * ws.rw_diag[j];
  Eigen::VectorXd c = ws.d2_identity
                          ? pre
                          : Eigen::VectorXd(ws.d2.transpose() * pre);
  for (long j = 0; j < nm; ++j) c[j * nm + j] += ws.rpsi_diag[j];
  return c;
}

double contraction_spectral_radius(const AnalysisWorkspace& ws) {
  const long nm = static_cast<long>(ws.num_nodes) * ws.param_dim;
  const long dim = nm * nm;
  RngStream rng(12345, RngStream::id("power-iteration"));
  Eigen::VectorXd v(dim);
  for (long i = 0; i < dim; ++i) v[i] = rng.normal();
  v.normalize();
  double rho = 0.0;
  double log_acc = 0.0;
  const int warmup = 200, window = 50;
  for (int it = 0; it < warmup + window; ++it) {
    Eigen::VectorXd w = apply_contraction(ws, v);
    double norm = w.norm();
    if (norm == 0.0) return 0.0;
    if (norm > 1e100) return norm;  // clearly unstable
    if (it >= warmup) log_acc += std::log(norm);
    v = w / norm;
  }
  rho = std::exp(log_acc / window);
  return rho;
}

}  // namespace

MsdResult theoretical_msd(const AnalysisWorkspace& ws) {
  const long nm = static_cast<long>(ws.num_nodes) * ws.param_dim;
  const long dim = nm * nm;

  MsdResult result;
  result.contraction_spectral_radius = contraction_spectral_radius(ws);
  if (result.contraction_spectral_radius >= 1.0)
    throw MeanSquareUnstable("mean-square unstable: contraction spectral "
                             "radius " +
                             std::to_string(result.contraction_spectral_radius));

  Eigen::VectorXd c = driving_vector(ws);

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  for (long j = 0; j < nm; ++j) rhs[j * nm + j] = 1.0;

  Eigen::VectorXd x;
  if (dim <= ws.dense_solve_cap) {
    Eigen::MatrixXd i_minus_f;
    if (ws.d1_identity && ws.d2_identity) {
      i_minus_f = Eigen::MatrixXd::Zero(dim, dim);
      for (long a = 0; a < nm; ++a)
        for (long b = 0; b < nm; ++b)
          i_minus_f(a * nm + b, a * nm + b) =
              1.0 - ws.h_diag[a] * ws.h_diag[b];
    } else if (ws.d1_identity) {
      i_minus_f = -ws.d2;
      for (long a = 0; a < nm; ++a)
        for (long b = 0; b < nm; ++b)
          i_minus_f.row(a * nm + b) *= ws.h_diag[a] * ws.h_diag[b];
    } else if (ws.d2_identity) {
      i_minus_f = -ws.d1;
      for (long a = 0; a < nm; ++a)
        for (long b = 0; b < nm; ++b)
          i_minus_f.col(a * nm + b) *= ws.h_diag[a] * ws.h_diag[b];
    } else {
      Eigen::MatrixXd scaled = ws.d2;
      for (long a = 0; a < nm; ++a)
        for (long b = 0; b < nm; ++b)
          scaled.row(a * nm + b) *= ws.h_diag[a] * ws.h_diag[b];
      i_minus_f = -(ws.d1 * scaled);
    }
    if (!(ws.d1_identity && ws.d2_identity)) i_minus_f.diagonal().array() += 1.0;
    Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXd>> lu(i_minus_f);  // in place
    x = lu.solve(rhs);
  } else {
    // Matrix-free fixed-point iteration x <- rhs + F x; converges since
    // the spectral radius is below one.
    x = rhs;
    Eigen::VectorXd prev;
    for (int it = 0; it < 200000; ++it) {
      prev = x;
      x = rhs + apply_contraction(ws, x);
      if ((x - prev).lpNorm<Eigen::Infinity>() <=
          1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>()))
        break;
    }
  }

  result.linear = c.dot(x) / ws.num_nodes;
  result.db = result.linear > 0.0
                  ? 10.0 * std::log10(result.linear)
                  : -std::numeric_limits<double>::infinity();
  return result;
}

Eigen::VectorXd theoretical_learning_curve(
    const AnalysisWorkspace& ws, const Eigen::VectorXd& initial_stacked_error,
    long iterations) {
  const long nm = static_cast<long>(ws.num_nodes) * ws.param_dim;
  const long dim = nm * nm;
  if (initial_stacked_error.size() != nm)
    throw std::invalid_argument("learning curve: bad initial error length");

  const Eigen::VectorXd c = driving_vector(ws);
  // MSD_i = [e^T mat(F^{i+1} vec(I)) e + sum_{j<=i} c^T F^j vec(I)] / N
  Eigen::VectorXd sigma = Eigen::VectorXd::Zero(dim);
  for (long j = 0; j < nm; ++j) sigma[j * nm + j] = 1.0;
  double acc = 0.0;
  Eigen::VectorXd curve(iterations);
  for (long i = 0; i < iterations; ++i) {
    acc += c.dot(sigma);
    sigma = apply_contraction(ws, sigma);
    Eigen::Map<const Eigen::MatrixXd> weight(sigma.data(), nm, nm);
    double msd = (initial_stacked_error.dot(weight * initial_stacked_error) +
                  acc) /
                 ws.num_nodes;
    curve[i] = msd;
    if (!std::isfinite(msd)) {
      curve.tail(iterations - 1 - i)
          .setConstant(std::numeric_limits<double>::infinity());
      break;
    }
  }
  return curve;
}

Eigen::VectorXd error_recursion_step(const Eigen::VectorXd& prev_error,
                                     const IterationDraws& draws,
                                     const Environment& env,
                                     const NetworkTopology& topology,
                                     const AlgorithmConfig& config) {
  const int n = env.num_nodes;
  const int m = env.param_dim;
  if (prev_error.size() != static_cast<long>(n) * m)
    throw std::invalid_argument("error_recursion_step: bad error length");

  // t = A_{1,i-1} werr_{i-1} - v^(w)_{i-1}
  Eigen::VectorXd t(n * m);
  if (config.first_phase_exchanges()) {
    Eigen::MatrixXd a1_blk =
        build_block_combination(config.a1, topology, draws.lambda_prev);
    t = a1_blk * prev_error;
    for (int k = 0; k < n; ++k) {
      std::size_t idx = 0;
      for (int l : topology.neighbor_sets[static_cast<std::size_t>(k)]) {
        if (l == k) continue;
        if (!draws.noise_w.empty()) {
          const auto& lam =
              draws.lambda_prev[static_cast<std::size_t>(l)].diagonal;
          const Eigen::VectorXd& v =
              draws.noise_w[static_cast<std::size_t>(k)][idx];
          double a = config.a1.weights(l, k);
          for (int j = 0; j < m; ++j)
            if (lam[static_cast<std::size_t>(j)]) t[k * m + j] -= a * v[j];
        }
        ++idx;
      }
    }
  } else {
    t = prev_error;
  }

  // t <- (I - M R_{u,i}) t - M s_i, per node
  Eigen::VectorXd next(n * m);
  for (int k = 0; k < n; ++k) {
    Eigen::RowVectorXd u = draws.regressors.row(k);
    Eigen::VectorXd tk = t.segment(k * m, m);
    double mu = config.step_sizes[k];
    next.segment(k * m, m) = tk - mu * u.dot(tk) * u.transpose() -
                             mu * draws.meas_noise[k] * u.transpose();
  }

  // A_{2,i} (...) - v^(psi)_i
  if (config.second_phase_exchanges()) {
    Eigen::MatrixXd a2_blk =
        build_block_combination(config.a2, topology, draws.lambda_curr);
    Eigen::VectorXd out = a2_blk * next;
    for (int k = 0; k < n; ++k) {
      std::size_t idx = 0;
      for (int l : topology.neighbor_sets[static_cast<std::size_t>(k)]) {
        if (l == k) continue;
        if (!draws.noise_psi.empty()) {
          const auto& lam =
              draws.lambda_curr[static_cast<std::size_t>(l)].diagonal;
          const Eigen::VectorXd& v =
              draws.noise_psi[static_cast<std::size_t>(k)][idx];
          double a = config.a2.weights(l, k);
          for (int j = 0; j < m; ++j)
            if (lam[static_cast<std::size_t>(j)]) out[k * m + j] -= a * v[j];
        }
        ++idx;
      }
    }
    return out;
  }
  return next;
}

}  // namespace pdnet
