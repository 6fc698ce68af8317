#include "pdnet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pdnet {

using nlohmann::json;

namespace {
constexpr const char* kToolVersion = "pdnet 1.0.0";

std::string mode_name(DiffusionMode m) {
  switch (m) {
    case DiffusionMode::ATC: return "atc";
    case DiffusionMode::CTA: return "cta";
    default: return "general";
  }
}
std::string scheme_name(SelectionScheme s) {
  return s == SelectionScheme::Sequential ? "sequential" : "stochastic";
}
std::string links_name(LinkQuality l) {
  return l == LinkQuality::Ideal ? "ideal" : "noisy";
}
std::string coupling_name(PhaseCoupling c) {
  return c == PhaseCoupling::SharedAcrossNodes ? "shared" : "independent";
}

DiffusionMode parse_mode(const std::string& s) {
  if (s == "atc") return DiffusionMode::ATC;
  if (s == "cta") return DiffusionMode::CTA;
  if (s == "general") return DiffusionMode::General;
  throw std::invalid_argument("config: unknown mode '" + s + "'");
}
SelectionScheme parse_scheme(const std::string& s) {
  if (s == "sequential") return SelectionScheme::Sequential;
  if (s == "stochastic") return SelectionScheme::Stochastic;
  throw std::invalid_argument("config: unknown scheme '" + s + "'");
}
LinkQuality parse_links(const std::string& s) {
  if (s == "ideal") return LinkQuality::Ideal;
  if (s == "noisy") return LinkQuality::Noisy;
  throw std::invalid_argument("config: unknown links value '" + s + "'");
}
PhaseCoupling parse_coupling(const std::string& s) {
  if (s == "shared") return PhaseCoupling::SharedAcrossNodes;
  if (s == "independent") return PhaseCoupling::IndependentPerNode;
  throw std::invalid_argument("config: unknown coupling '" + s + "'");
}

void require_known_keys(const json& obj, const std::set<std::string>& allowed,
                        const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("config: unknown key '" + it.key() +
                                  "' in " + where);
}

std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double to_db(double linear) {
  if (!(linear > 0.0)) return kDbFloor;
  return std::max(kDbFloor, 10.0 * std::log10(linear));
}

std::string GridEntry::id() const {
  std::string s = mode_name(mode) + "_" + scheme_name(scheme) + "_L" +
                  std::to_string(entries) + "_" + links_name(links);
  if (coupling) s += "_" + coupling_name(*coupling);
  return s;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json root = json::parse(text);
  // Manifests embed the config they were produced from.
  if (root.contains("config")) root = root.at("config");

  require_known_keys(root,
                     {"topology", "environment", "algorithm", "monte_carlo",
                      "grid", "output_dir"},
                     "top level");
  ExperimentConfig c;
  if (root.contains("topology")) {
    const json& t = root.at("topology");
    require_known_keys(t, {"num_nodes", "target_avg_neighbors", "seed"},
                       "topology");
    if (t.contains("num_nodes")) c.num_nodes = t.at("num_nodes").get<int>();
    if (t.contains("target_avg_neighbors"))
      c.target_avg_neighbors = t.at("target_avg_neighbors").get<double>();
    if (t.contains("seed")) c.topology_seed = t.at("seed").get<std::uint64_t>();
  }
  if (root.contains("environment")) {
    const json& e = root.at("environment");
    require_known_keys(e, {"param_dim", "link_noise_gap_db", "seed"},
                       "environment");
    if (e.contains("param_dim")) c.param_dim = e.at("param_dim").get<int>();
    if (e.contains("link_noise_gap_db"))
      c.link_noise_gap_db = e.at("link_noise_gap_db").get<double>();
    if (e.contains("seed"))
      c.environment_seed = e.at("seed").get<std::uint64_t>();
  }
  if (root.contains("algorithm")) {
    const json& a = root.at("algorithm");
    require_known_keys(a, {"step_size"}, "algorithm");
    if (a.contains("step_size")) c.step_size = a.at("step_size").get<double>();
  }
  if (root.contains("monte_carlo")) {
    const json& m = root.at("monte_carlo");
    require_known_keys(m, {"trials", "horizon", "steady_state_window", "seed"},
                       "monte_carlo");
    if (m.contains("trials")) c.trials = m.at("trials").get<long>();
    if (m.contains("horizon")) c.horizon = m.at("horizon").get<long>();
    if (m.contains("steady_state_window"))
      c.steady_state_window = m.at("steady_state_window").get<double>();
    if (m.contains("seed")) c.seed = m.at("seed").get<std::uint64_t>();
  }
  if (root.contains("output_dir"))
    c.output_dir = root.at("output_dir").get<std::string>();
  if (root.contains("grid")) {
    for (const json& g : root.at("grid")) {
      require_known_keys(g, {"mode", "scheme", "entries", "links", "coupling"},
                         "grid entry");
      GridEntry e;
      e.mode = parse_mode(g.at("mode").get<std::string>());
      e.scheme = parse_scheme(g.at("scheme").get<std::string>());
      e.entries = g.at("entries").get<int>();
      e.links = parse_links(g.at("links").get<std::string>());
      if (g.contains("coupling"))
        e.coupling = parse_coupling(g.at("coupling").get<std::string>());
      c.grid.push_back(e);
    }
  }
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

json config_to_json(const ExperimentConfig& c) {
  json grid = json::array();
  for (const auto& e : c.grid) {
    json g = {{"mode", mode_name(e.mode)},
              {"scheme", scheme_name(e.scheme)},
              {"entries", e.entries},
              {"links", links_name(e.links)}};
    if (e.coupling) g["coupling"] = coupling_name(*e.coupling);
    grid.push_back(g);
  }
  return json{
      {"topology",
       {{"num_nodes", c.num_nodes},
        {"target_avg_neighbors", c.target_avg_neighbors},
        {"seed", c.topology_seed}}},
      {"environment",
       {{"param_dim", c.param_dim},
        {"link_noise_gap_db", c.link_noise_gap_db},
        {"seed", c.environment_seed}}},
      {"algorithm", {{"step_size", c.step_size}}},
      {"monte_carlo",
       {{"trials", c.trials},
        {"horizon", c.horizon},
        {"steady_state_window", c.steady_state_window},
        {"seed", c.seed}}},
      {"grid", grid},
      {"output_dir", c.output_dir}};
}

}  // namespace

std::string config_to_json_text(const ExperimentConfig& config) {
  return config_to_json(config).dump(2);
}

AlgorithmConfig make_algorithm_config(const GridEntry& entry,
                                      const NetworkTopology& topology,
                                      const ExperimentConfig& config) {
  AlgorithmConfig a;
  a.mode = entry.mode;
  a.links = entry.links;
  a.step_sizes =
      Eigen::VectorXd::Constant(topology.num_nodes, config.step_size);
  a.schedule =
      entry.coupling
          ? make_schedule(entry.scheme, config.param_dim, entry.entries,
                          *entry.coupling)
          : make_schedule(entry.scheme, config.param_dim, entry.entries);
  CombinationMatrix uniform1 =
      build_uniform_combination(topology, CombinationRole::A1);
  CombinationMatrix uniform2 =
      build_uniform_combination(topology, CombinationRole::A2);
  a.a1 = entry.mode == DiffusionMode::ATC
             ? CombinationMatrix::identity(topology.num_nodes,
                                           CombinationRole::A1)
             : uniform1;
  a.a2 = entry.mode == DiffusionMode::CTA
             ? CombinationMatrix::identity(topology.num_nodes,
                                           CombinationRole::A2)
             : uniform2;
  return a;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult result;
  result.config = config;
  result.topology = generate_topology(config.num_nodes,
                                      config.target_avg_neighbors,
                                      config.topology_seed);
  result.environment = generate_environment(
      result.topology, config.param_dim, config.link_noise_gap_db,
      config.environment_seed);

  // Every grid entry must validate before any trial runs.
  std::vector<AlgorithmConfig> algos;
  for (const auto& entry : config.grid) {
    AlgorithmConfig a = make_algorithm_config(entry, result.topology, config);
    a.validate(result.topology);
    algos.push_back(std::move(a));
  }

  for (std::size_t e = 0; e < config.grid.size(); ++e) {
    const GridEntry& entry = config.grid[e];
    LearningCurve curve;
    curve.entry = entry;
    curve.per_trial.resize(config.trials, config.horizon);
    curve.per_trial.setZero();

    std::vector<long> diverged(static_cast<std::size_t>(config.trials), 0);
#pragma omp parallel for schedule(dynamic)
    for (long t = 0; t < config.trials; ++t) {
      std::uint64_t trial_seed =
          RngStream(config.seed, RngStream::id("trial", e, t)).next_u64();
      TrialResult tr = run_trial(result.environment, result.topology,
                                 algos[e], config.horizon, trial_seed);
      if (tr.diverged) diverged[static_cast<std::size_t>(t)] = 1;
      // Network-average squared deviation per iteration.
      curve.per_trial.row(t) =
          tr.squared_dev.rowwise().mean().transpose();
    }
    for (long flag : diverged) curve.diverged_trials += flag;

    curve.msd_db.resize(config.horizon);
    for (long i = 0; i < config.horizon; ++i)
      curve.msd_db[i] = to_db(curve.per_trial.col(i).mean());

    try {
      AnalysisWorkspace ws =
          build_workspace(result.environment, result.topology, algos[e]);
      MsdResult msd = theoretical_msd(ws);
      curve.theory_ok = true;
      curve.theory_linear = msd.linear;
      curve.theory_db = to_db(msd.linear);
    } catch (const MeanSquareUnstable& err) {
      curve.theory_ok = false;
      curve.theory_error = err.what();
    }
    result.curves.push_back(std::move(curve));
  }
  return result;
}

SteadyStateEstimate estimate_steady_state(const LearningCurve& curve,
                                          double window_fraction) {
  const long horizon = curve.per_trial.cols();
  const long trials = curve.per_trial.rows();
  const long window = std::max<long>(
      1, static_cast<long>(std::llround(window_fraction * horizon)));
  const long start = horizon - window;

  SteadyStateEstimate est;
  Eigen::VectorXd per_trial(trials);
  for (long t = 0; t < trials; ++t)
    per_trial[t] = curve.per_trial.row(t).segment(start, window).mean();
  est.linear = per_trial.mean();
  double var = trials > 1
                   ? (per_trial.array() - est.linear).square().sum() /
                         static_cast<double>(trials - 1)
                   : 0.0;
  est.stderr_linear = std::sqrt(var / static_cast<double>(trials));
  est.db = to_db(est.linear);
  est.stderr_db = est.linear > 0.0
                      ? 10.0 / std::log(10.0) * est.stderr_linear / est.linear
                      : 0.0;

  // Convergence flag: the two most recent windows must agree within 0.5 dB.
  if (start >= window) {
    double prev = 0.0;
    for (long t = 0; t < trials; ++t)
      prev += curve.per_trial.row(t).segment(start - window, window).mean();
    prev /= static_cast<double>(trials);
    est.converged = std::abs(to_db(prev) - est.db) <= 0.5;
  } else {
    est.converged = true;  // whole curve is one window (e.g. constant runs)
  }
  return est;
}

std::vector<ComparisonRow> compare_theory_simulation(
    const ExperimentResult& result) {
  std::vector<ComparisonRow> rows;
  for (const auto& curve : result.curves) {
    SteadyStateEstimate est =
        estimate_steady_state(curve, result.config.steady_state_window);
    ComparisonRow row;
    row.entry_id = curve.entry.id();
    row.entry = curve.entry;
    row.sim_db = est.db;
    row.theory_ok = curve.theory_ok;
    row.theory_db = curve.theory_ok ? curve.theory_db : kDbFloor;
    row.gap_db = curve.theory_ok ? est.db - curve.theory_db : 0.0;
    row.stderr_db = est.stderr_db;
    row.converged = est.converged;
    rows.push_back(row);
  }
  return rows;
}

void emit_outputs(const ExperimentResult& result,
                  const std::string& output_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(output_dir);

  if (!result.curves.empty()) {
    std::ofstream curves(fs::path(output_dir) / "curves.csv");
    if (!curves) throw std::runtime_error("cannot write curves.csv");
    curves << "entry_id,iteration,msd_db_sim,msd_db_theory_line\n";
    for (const auto& curve : result.curves) {
      std::string id = curve.entry.id();
      for (long i = 0; i < curve.msd_db.size(); ++i) {
        curves << id << ',' << i << ',' << format_full(curve.msd_db[i]) << ',';
        if (curve.theory_ok) curves << format_full(curve.theory_db);
        curves << '\n';
      }
    }

    std::ofstream cmp(fs::path(output_dir) / "comparison.csv");
    if (!cmp) throw std::runtime_error("cannot write comparison.csv");
    cmp << "entry_id,mode,scheme,L,links,sim_db,theory_db,gap_db,stderr_db\n";
    for (const auto& row : compare_theory_simulation(result)) {
      cmp << row.entry_id << ',' << mode_name(row.entry.mode) << ','
          << scheme_name(row.entry.scheme) << ',' << row.entry.entries << ','
          << links_name(row.entry.links) << ',' << format_full(row.sim_db)
          << ',';
      if (row.theory_ok)
        cmp << format_full(row.theory_db) << ',' << format_full(row.gap_db);
      else
        cmp << "unstable,";
      cmp << ',' << format_full(row.stderr_db) << '\n';
    }
  }

  // Manifest: full config echo plus every realized random value, at full
  // precision, sufficient to re-run the experiment exactly.
  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["config"] = config_to_json(result.config);
  json env;
  env["true_param"] = json::array();
  for (long j = 0; j < result.environment.true_param.size(); ++j)
    env["true_param"].push_back(result.environment.true_param[j]);
  env["regressor_cov_diag"] = json::array();
  for (const auto& d : result.environment.regressor_cov_diag) {
    json row = json::array();
    for (long j = 0; j < d.size(); ++j) row.push_back(d[j]);
    env["regressor_cov_diag"].push_back(row);
  }
  env["meas_noise_var"] = json::array();
  for (long k = 0; k < result.environment.meas_noise_var.size(); ++k)
    env["meas_noise_var"].push_back(result.environment.meas_noise_var[k]);
  auto link_mat = [](const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (long i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  env["link_var_w"] = link_mat(result.environment.link_var_w);
  env["link_var_psi"] = link_mat(result.environment.link_var_psi);
  manifest["environment"] = env;
  json topo = json::array();
  for (const auto& nk : result.topology.neighbor_sets) topo.push_back(nk);
  manifest["topology_neighbor_sets"] = topo;

  std::ofstream mf(fs::path(output_dir) / "manifest.json");
  if (!mf) throw std::runtime_error("cannot write manifest.json");
  mf << manifest.dump(2) << '\n';
}

std::string analysis_report(const ExperimentConfig& config) {
  NetworkTopology topology = generate_topology(
      config.num_nodes, config.target_avg_neighbors, config.topology_seed);
  Environment env = generate_environment(topology, config.param_dim,
                                         config.link_noise_gap_db,
                                         config.environment_seed);
  std::ostringstream out;
  out << "entry_id,mean_radius,contraction_radius,theory_db\n";
  for (const auto& entry : config.grid) {
    AlgorithmConfig a = make_algorithm_config(entry, topology, config);
    AnalysisWorkspace ws = build_workspace(env, topology, a);
    out << entry.id() << ',' << format_full(mean_error_spectral_radius(ws))
        << ',';
    try {
      MsdResult msd = theoretical_msd(ws);
      out << format_full(msd.contraction_spectral_radius) << ','
          << format_full(to_db(msd.linear)) << '\n';
    } catch (const MeanSquareUnstable&) {
      out << "unstable,unstable\n";
    }
  }
  return out.str();
}

ValidationReport validate_experiment(const ExperimentConfig& config) {
  ValidationReport report;
  std::ostringstream out;
  try {
    NetworkTopology topology = generate_topology(
        config.num_nodes, config.target_avg_neighbors, config.topology_seed);
    Environment env = generate_environment(topology, config.param_dim,
                                           config.link_noise_gap_db,
                                           config.environment_seed);
    out << "topology: N=" << topology.num_nodes
        << " avg_degree=" << topology.avg_degree() << " connected\n";
    StabilityReport stab = mean_stability_bounds(
        env, Eigen::VectorXd::Constant(config.num_nodes, config.step_size));
    out << "step size " << config.step_size
        << (stab.stable ? " within" : " OUTSIDE") << " the stability bounds ("
        << "min mu_max=" << stab.mu_max.minCoeff() << ")\n";
    if (!stab.stable) report.ok = false;
    for (const auto& entry : config.grid) {
      try {
        AlgorithmConfig a = make_algorithm_config(entry, topology, config);
        a.validate(topology);
        out << entry.id() << ": ok\n";
      } catch (const std::exception& err) {
        report.ok = false;
        out << entry.id() << ": " << err.what() << '\n';
      }
    }
  } catch (const std::exception& err) {
    report.ok = false;
    out << "error: " << err.what() << '\n';
  }
  report.text = out.str();
  return report;
}

}  // namespace pdnet
