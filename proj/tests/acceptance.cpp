// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the binary exits nonzero if any fail. All tolerances are pinned here.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pdnet/analysis.hpp"
#include "pdnet/engine.hpp"
#include "pdnet/environment.hpp"
#include "pdnet/experiment.hpp"
#include "pdnet/reference_dlms.hpp"
#include "pdnet/selection.hpp"
#include "pdnet/topology.hpp"

using namespace pdnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

AlgorithmConfig make_config(const NetworkTopology& t, DiffusionMode mode,
                            SelectionScheme scheme, int param_dim, int entries,
                            LinkQuality links, const Eigen::VectorXd& steps) {
  AlgorithmConfig c;
  c.mode = mode;
  c.links = links;
  c.step_sizes = steps;
  c.schedule = make_schedule(scheme, param_dim, entries);
  c.a1 = mode == DiffusionMode::ATC
             ? CombinationMatrix::identity(t.num_nodes, CombinationRole::A1)
             : build_uniform_combination(t, CombinationRole::A1);
  c.a2 = mode == DiffusionMode::CTA
             ? CombinationMatrix::identity(t.num_nodes, CombinationRole::A2)
             : build_uniform_combination(t, CombinationRole::A2);
  return c;
}

// 1. The per-node engine and the stacked error recursion are the same map:
//    replaying the recorded draws through the stacked form reproduces the
//    engine trajectory to 1e-9 across the full mode/scheme/L/links matrix.
Outcome criterion_engine_vs_stacked_recursion() {
  const int n = 5, m = 4;
  const long horizon = 500;
  NetworkTopology t = generate_topology(n, 2.0, 101);
  Environment env = generate_environment(t, m, 35.0, 102);
  Eigen::VectorXd steps = Eigen::VectorXd::Constant(n, 0.02);

  double worst = 0.0;
  for (auto mode :
       {DiffusionMode::ATC, DiffusionMode::CTA, DiffusionMode::General})
    for (auto scheme :
         {SelectionScheme::Sequential, SelectionScheme::Stochastic})
      for (int ell : {1, (m + 1) / 2, m})
        for (auto links : {LinkQuality::Ideal, LinkQuality::Noisy}) {
          AlgorithmConfig c =
              make_config(t, mode, scheme, m, ell, links, steps);
          TrialResult tr = run_trial(env, t, c, horizon, 4242, {true, true});
          if (tr.diverged) return {false, "unexpected divergence"};
          Eigen::VectorXd err(n * m);
          for (int k = 0; k < n; ++k)
            err.segment(k * m, m) = env.true_param;
          for (long i = 0; i < horizon; ++i) {
            err = error_recursion_step(
                err, tr.draws[static_cast<std::size_t>(i)], env, t, c);
            for (int k = 0; k < n; ++k) {
              double diff =
                  (err.segment(k * m, m) -
                   (env.true_param -
                    tr.weight_log[static_cast<std::size_t>(i)]
                                 [static_cast<std::size_t>(k)]))
                      .cwiseAbs()
                      .maxCoeff();
              worst = std::max(worst, diff);
            }
          }
        }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "max |engine - stacked replay| = %.3g (tol 1e-9)",
                worst);
  return {worst <= 1e-9, buf};
}

// 2. With every entry transmitted over ideal links the engine reduces to an
//    independently coded plain diffusion LMS on identical draws, to 1e-12.
Outcome criterion_reduction_to_reference() {
  const int n = 6, m = 5;
  const long horizon = 400;
  NetworkTopology t = generate_topology(n, 2.5, 201);
  Environment env = generate_environment(t, m, 35.0, 202);
  Eigen::VectorXd steps = Eigen::VectorXd::Constant(n, 0.02);

  double worst = 0.0;
  for (auto mode : {DiffusionMode::ATC, DiffusionMode::CTA}) {
    AlgorithmConfig c = make_config(t, mode, SelectionScheme::Sequential, m, m,
                                    LinkQuality::Ideal, steps);
    TrialResult tr = run_trial(env, t, c, horizon, 77, {true, true});
    std::vector<Eigen::MatrixXd> regressors;
    std::vector<Eigen::VectorXd> measurements;
    for (const auto& d : tr.draws) {
      regressors.push_back(d.regressors);
      measurements.push_back(d.measurements);
    }
    auto ref = run_reference_dlms(t, c.a1.weights, c.a2.weights, c.step_sizes,
                                  regressors, measurements);
    for (std::size_t i = 0; i < ref.size(); ++i)
      for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k)
        worst = std::max(
            worst, (ref[i][k] - tr.weight_log[i][k]).cwiseAbs().maxCoeff());
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "max |engine - reference diffusion LMS| = %.3g (tol 1e-12)",
                worst);
  return {worst <= 1e-12, buf};
}

// 3. Single-node sanity: unit regressor covariance, sigma^2 = 0.01,
//    mu = 0.01, M = 2; simulated and closed-form steady-state MSD both
//    within 5% (linear) of mu*M*sigma^2/2 = 1e-4.
Outcome criterion_single_node_sanity() {
  NetworkTopology t;
  t.num_nodes = 1;
  t.neighbor_sets = {{0}};
  Environment env;
  env.num_nodes = 1;
  env.param_dim = 2;
  env.true_param = Eigen::Vector2d(1.0, -0.5);
  env.regressor_cov_diag = {Eigen::Vector2d::Ones()};
  env.meas_noise_var = Eigen::VectorXd::Constant(1, 0.01);
  env.link_var_w = Eigen::MatrixXd::Zero(1, 1);
  env.link_var_psi = Eigen::MatrixXd::Zero(1, 1);

  AlgorithmConfig c;
  c.mode = DiffusionMode::ATC;
  c.links = LinkQuality::Ideal;
  c.step_sizes = Eigen::VectorXd::Constant(1, 0.01);
  c.schedule = make_schedule(SelectionScheme::Sequential, 2, 2);
  c.a1 = CombinationMatrix::identity(1, CombinationRole::A1);
  c.a2 = CombinationMatrix::identity(1, CombinationRole::A2);

  const double nominal = 1e-4;  // mu M sigma^2 / 2
  MsdResult theory = theoretical_msd(build_workspace(env, t, c));

  // 2000 trials: the per-trial tail scatter leaves ~1% standard error,
  // comfortably inside the 5% band (500 trials leaves ~2-3%, which collides
  // with the band given the exact value is already 0.5% above nominal).
  const long trials = 2000, horizon = 2500, tail = 250;
  double acc = 0.0;
  for (long trial = 0; trial < trials; ++trial) {
    TrialResult tr = run_trial(env, t, c, horizon, 9000 + trial);
    if (tr.diverged) return {false, "unexpected divergence"};
    acc += tr.squared_dev.bottomRows(tail).mean();
  }
  double sim = acc / trials;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "theory %.6g, sim %.6g vs nominal 1e-4 (tol 5%%)", theory.linear,
                sim);
  bool ok = std::abs(theory.linear - nominal) <= 0.05 * nominal &&
            std::abs(sim - nominal) <= 0.05 * nominal;
  return {ok, buf};
}

// Shared full-scale experiment for criteria 4-6: N=10, M=8, mu=0.01,
// uniform weights, 35 dB link-noise gap, 200 trials x 2000 iterations.
const ExperimentResult& full_scale_result() {
  static ExperimentResult result = [] {
    ExperimentConfig cfg;
    cfg.num_nodes = 10;
    cfg.target_avg_neighbors = 2.0;
    cfg.topology_seed = 1;
    cfg.param_dim = 8;
    cfg.link_noise_gap_db = 35.0;
    cfg.environment_seed = 2;
    cfg.step_size = 0.01;
    cfg.trials = 200;
    cfg.horizon = 2000;
    cfg.steady_state_window = 0.1;
    cfg.seed = 3;
    for (auto scheme :
         {SelectionScheme::Sequential, SelectionScheme::Stochastic})
      for (int ell : {1, 2, 4, 8}) {
        GridEntry e;
        e.mode = DiffusionMode::ATC;
        e.scheme = scheme;
        e.entries = ell;
        e.links = LinkQuality::Noisy;
        cfg.grid.push_back(e);
      }
    // extra entries for the mode-ordering comparison
    for (auto links : {LinkQuality::Noisy, LinkQuality::Ideal})
      for (auto mode : {DiffusionMode::ATC, DiffusionMode::CTA}) {
        GridEntry e;
        e.mode = mode;
        e.scheme = SelectionScheme::Sequential;
        e.entries = 1;
        e.links = links;
        cfg.grid.push_back(e);
      }
    return run_experiment(cfg);
  }();
  return result;
}

SteadyStateEstimate entry_estimate(const ExperimentResult& r,
                                   const std::string& id,
                                   const LearningCurve** curve_out = nullptr) {
  for (const auto& curve : r.curves)
    if (curve.entry.id() == id) {
      if (curve_out) *curve_out = &curve;
      return estimate_steady_state(curve, r.config.steady_state_window);
    }
  throw std::runtime_error("missing grid entry " + id);
}

// 4. At full scale the closed-form steady-state MSD sits within 1.5 dB of
//    the simulated trailing-window steady state for ATC, both selection
//    schemes, L in {1,2,4,8}, noisy links.
Outcome criterion_theory_matches_simulation() {
  const ExperimentResult& r = full_scale_result();
  double worst = 0.0;
  std::string worst_id;
  bool ok = true;
  for (const char* scheme : {"sequential", "stochastic"})
    for (int ell : {1, 2, 4, 8}) {
      std::string id = std::string("atc_") + scheme + "_L" +
                       std::to_string(ell) + "_noisy";
      const LearningCurve* curve = nullptr;
      SteadyStateEstimate est = entry_estimate(r, id, &curve);
      if (!curve->theory_ok) return {false, id + ": theory reported unstable"};
      double gap = std::abs(est.db - curve->theory_db);
      if (gap > worst) {
        worst = gap;
        worst_id = id;
      }
      if (gap > 1.5) ok = false;
    }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "worst |sim - theory| = %.3f dB at %s (tol 1.5 dB)",
                worst, worst_id.c_str());
  return {ok, buf};
}

// 5. Combining after adaptation beats combining before it: ATC steady-state
//    MSD <= CTA under both ideal and noisy links, by >= 2 standard errors.
Outcome criterion_mode_ordering() {
  const ExperimentResult& r = full_scale_result();
  bool ok = true;
  std::ostringstream detail;
  for (const char* links : {"noisy", "ideal"}) {
    SteadyStateEstimate atc =
        entry_estimate(r, std::string("atc_sequential_L1_") + links);
    SteadyStateEstimate cta =
        entry_estimate(r, std::string("cta_sequential_L1_") + links);
    double margin = cta.linear - atc.linear;
    double se = std::sqrt(atc.stderr_linear * atc.stderr_linear +
                          cta.stderr_linear * cta.stderr_linear);
    if (margin < 2.0 * se) ok = false;
    detail << links << ": atc " << atc.db << " dB vs cta " << cta.db
           << " dB (margin/se " << (se > 0 ? margin / se : 0.0) << "); ";
  }
  return {ok, detail.str()};
}

// 6. Cyclic entry selection beats random selection at fixed (mode, L,
//    links), by >= 2 standard errors, for every partial L.
Outcome criterion_scheme_ordering() {
  const ExperimentResult& r = full_scale_result();
  bool ok = true;
  std::ostringstream detail;
  for (int ell : {1, 2, 4}) {
    SteadyStateEstimate seq = entry_estimate(
        r, "atc_sequential_L" + std::to_string(ell) + "_noisy");
    SteadyStateEstimate sto = entry_estimate(
        r, "atc_stochastic_L" + std::to_string(ell) + "_noisy");
    double margin = sto.linear - seq.linear;
    double se = std::sqrt(seq.stderr_linear * seq.stderr_linear +
                          sto.stderr_linear * sto.stderr_linear);
    if (margin < 2.0 * se) ok = false;
    detail << "L=" << ell << ": seq " << seq.db << " dB vs sto " << sto.db
           << " dB (margin/se " << (se > 0 ? margin / se : 0.0) << "); ";
  }
  return {ok, detail.str()};
}

// 7. The per-node step-size bound 2/lambda_max is the stability boundary of
//    the variance-recursion model: at 0.9x the bound the model MSD curve
//    converges below its initial value, at 3x it diverges; simulated
//    trajectories at 3x also diverge within 1e3 iterations. (At 0.9x the
//    bound realized trajectories are NOT checked for convergence: with
//    Gaussian regressors the bound governs the mean, and regressor fourth
//    moments make realized MSD diverge well below it — outside the
//    small-step model. See the mean-radius figure printed per environment.)
Outcome criterion_stability_boundary() {
  const int n = 5, m = 4;
  const long horizon = 1000;
  double worst_mean_radius = 0.0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    NetworkTopology t = generate_topology(n, 2.0, 300 + trial);
    Environment env = generate_environment(t, m, 35.0, 400 + trial);
    StabilityReport bounds =
        mean_stability_bounds(env, Eigen::VectorXd::Constant(n, 1e-3));
    Eigen::VectorXd e0(n * m);
    for (int k = 0; k < n; ++k) e0.segment(k * m, m) = env.true_param;
    double initial = env.true_param.squaredNorm();

    AlgorithmConfig safe =
        make_config(t, DiffusionMode::ATC, SelectionScheme::Sequential, m, 2,
                    LinkQuality::Noisy, 0.9 * bounds.mu_max);
    AnalysisWorkspace ws = build_workspace(env, t, safe);
    worst_mean_radius = std::max(worst_mean_radius,
                                 mean_error_spectral_radius(ws));
    Eigen::VectorXd curve = theoretical_learning_curve(ws, e0, horizon);
    if (!std::isfinite(curve[horizon - 1]) ||
        curve.tail(horizon / 10).mean() >= initial)
      return {false,
              "0.9x bound: model MSD failed to converge (env seed " +
                  std::to_string(400 + trial) + ")"};

    AlgorithmConfig hot =
        make_config(t, DiffusionMode::ATC, SelectionScheme::Sequential, m, 2,
                    LinkQuality::Noisy, 3.0 * bounds.mu_max);
    Eigen::VectorXd hot_curve = theoretical_learning_curve(
        build_workspace(env, t, hot), e0, horizon);
    if (std::isfinite(hot_curve[horizon - 1]) &&
        hot_curve[horizon - 1] <= 10.0 * initial)
      return {false,
              "3x bound: model MSD failed to diverge (env seed " +
                  std::to_string(400 + trial) + ")"};

    TrialResult bad = run_trial(env, t, hot, horizon, 600 + trial);
    bool grew = bad.diverged ||
                bad.squared_dev.row(bad.iterations_completed - 1).mean() >
                    10.0 * initial;
    if (!grew)
      return {false,
              "3x bound: simulation failed to diverge (env seed " +
                  std::to_string(400 + trial) + ")"};
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "20/20 environments: model MSD converges at 0.9x (worst mean "
                "radius %.3f), diverges at 3x; simulation diverges at 3x",
                worst_mean_radius);
  return {true, buf};
}

// 8. Selection-scheme properties: full coverage per cycle window, uniform
//    per-entry frequency 1/B +- 0.01 over 1e5 draws, and empirical
//    transmission probability L/M +- 0.01 when L divides M.
Outcome criterion_selection_properties() {
  // cyclic coverage: every window of B iterations hits each entry once
  {
    SelectionSchedule s = make_schedule(SelectionScheme::Sequential, 8, 3);
    RngStream rng(0, 0);
    for (long start = 0; start < 30; ++start) {
      std::vector<int> counts(8, 0);
      for (long i = start; i < start + s.num_subsets(); ++i) {
        SelectionMatrix lam = select(s, i, 0, rng);
        for (int j = 0; j < 8; ++j)
          counts[static_cast<std::size_t>(j)] +=
              lam.diagonal[static_cast<std::size_t>(j)];
      }
      for (int c : counts)
        if (c != 1) return {false, "cyclic window coverage violated"};
    }
  }
  // stochastic per-entry frequency
  {
    SelectionSchedule s = make_schedule(SelectionScheme::Stochastic, 8, 2);
    RngStream rng(5, RngStream::id("acc-sel"));
    const int n = 100000;
    std::vector<long> counts(8, 0);
    for (int i = 0; i < n; ++i) {
      SelectionMatrix lam = select(s, i, 0, rng);
      for (int j = 0; j < 8; ++j)
        counts[static_cast<std::size_t>(j)] +=
            lam.diagonal[static_cast<std::size_t>(j)];
    }
    for (long c : counts)
      if (std::abs(c / static_cast<double>(n) - 0.25) > 0.01)
        return {false, "stochastic per-entry frequency off by > 0.01"};
  }
  // empirical transmission probability for L | M
  for (int ell : {1, 2, 4, 8}) {
    SelectionSchedule s = make_schedule(SelectionScheme::Stochastic, 8, ell);
    RngStream rng(6, RngStream::id("acc-sel-p", ell));
    const int n = 100000;
    long transmitted = 0;
    for (int i = 0; i < n; ++i) transmitted += select(s, i, 0, rng).ones();
    double p = transmitted / static_cast<double>(n) / 8.0;
    if (std::abs(p - transmission_probability(ell, 8)) > 0.01)
      return {false, "transmission probability off by > 0.01"};
  }
  return {true, "coverage, frequency, and transmission probability all hold"};
}

// 9. The exact expected Kronecker factors agree with a 1e5-draw Monte Carlo
//    estimate within 3 standard errors entrywise, and are column-stochastic
//    to 1e-10 (N=2, M=2, L=1).
Outcome criterion_expected_kron() {
  NetworkTopology t;
  t.num_nodes = 2;
  t.neighbor_sets = {{0, 1}, {0, 1}};
  CombinationMatrix a = build_uniform_combination(t, CombinationRole::A2);
  for (auto scheme :
       {SelectionScheme::Sequential, SelectionScheme::Stochastic}) {
    SelectionSchedule s = make_schedule(scheme, 2, 1);
    Eigen::MatrixXd exact = expected_kron(a, t, s, KronMethod::Exact).value;
    ExpectedKron mc =
        expected_kron(a, t, s, KronMethod::MonteCarlo, 100000, 11);
    for (long i = 0; i < exact.rows(); ++i)
      for (long j = 0; j < exact.cols(); ++j) {
        double se = std::max(mc.std_error(i, j), 1e-12);
        if (std::abs(mc.value(i, j) - exact(i, j)) > 3.0 * se)
          return {false, "exact vs Monte Carlo mismatch beyond 3 se"};
      }
    Eigen::VectorXd col_sums = exact.colwise().sum().transpose();
    if ((col_sums - Eigen::VectorXd::Ones(exact.cols())).cwiseAbs().maxCoeff() >
        1e-10)
      return {false, "column sums deviate from 1 by > 1e-10"};
  }
  return {true, "exact factors match Monte Carlo and are column-stochastic"};
}

// 10. Re-running from an emitted manifest reproduces the curve CSV
//     byte-for-byte.
Outcome criterion_manifest_reproducibility() {
  ExperimentConfig cfg;
  cfg.num_nodes = 5;
  cfg.param_dim = 4;
  cfg.trials = 20;
  cfg.horizon = 300;
  cfg.step_size = 0.02;
  for (auto mode : {DiffusionMode::ATC, DiffusionMode::General}) {
    GridEntry e;
    e.mode = mode;
    e.scheme = SelectionScheme::Stochastic;
    e.entries = 2;
    e.links = LinkQuality::Noisy;
    cfg.grid.push_back(e);
  }
  fs::path dir1 = fs::temp_directory_path() / "pdnet_accept_run1";
  fs::path dir2 = fs::temp_directory_path() / "pdnet_accept_run2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  emit_outputs(run_experiment(cfg), dir1.string());
  ExperimentConfig replay = load_config_file((dir1 / "manifest.json").string());
  emit_outputs(run_experiment(replay), dir2.string());

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool same = slurp(dir1 / "curves.csv") == slurp(dir2 / "curves.csv");
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  return {same, same ? "curve CSVs byte-identical across manifest replay"
                     : "curve CSVs differ"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"1 engine matches stacked error recursion (1e-9)",
       criterion_engine_vs_stacked_recursion},
      {"2 reduces to reference diffusion LMS (1e-12)",
       criterion_reduction_to_reference},
      {"3 single-node steady state = 1e-4 (5%)",
       criterion_single_node_sanity},
      {"4 theory within 1.5 dB of simulation at full scale",
       criterion_theory_matches_simulation},
      {"5 adapt-then-combine beats combine-then-adapt (2 se)",
       criterion_mode_ordering},
      {"6 cyclic selection beats random selection (2 se)",
       criterion_scheme_ordering},
      {"7 step-size stability boundary (0.9x converges, 3x diverges)",
       criterion_stability_boundary},
      {"8 selection coverage / frequency / transmission probability",
       criterion_selection_properties},
      {"9 exact expected Kronecker factors vs Monte Carlo",
       criterion_expected_kron},
      {"10 manifest replay is byte-identical", criterion_manifest_reproducibility},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %s -- %s\n", out.pass ? "PASS" : "FAIL",
                c.name, out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  if (failures)
    std::printf("%d criterion(s) FAILED\n", failures);
  else
    std::printf("all 10 criteria passed\n");
  return failures == 0 ? 0 : 1;
}
