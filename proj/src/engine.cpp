#include "pdnet/engine.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace pdnet {
namespace {

// Shared algebra of the two combination phases:
//   out = a_kk x_k + sum_{l != k} a_lk [L_l x_l + (I - L_l) x_k + L_l v_lk]
Eigen::VectorXd combine_phase(int node, const NetworkTopology& topology,
                              const std::vector<Eigen::VectorXd>& vectors,
                              const std::vector<SelectionMatrix>& selections,
                              const std::vector<Eigen::VectorXd>& link_noises,
                              const Eigen::MatrixXd& a) {
  const Eigen::VectorXd& own = vectors[static_cast<std::size_t>(node)];
  const Eigen::Index m = own.size();
  Eigen::VectorXd out = a(node, node) * own;
  std::size_t noise_idx = 0;
  for (int l : topology.neighbor_sets[static_cast<std::size_t>(node)]) {
    if (l == node) continue;
    const double w = a(l, node);
    const Eigen::VectorXd& other = vectors[static_cast<std::size_t>(l)];
    if (other.size() != m)
      throw std::invalid_argument("combine: vector length mismatch");
    const auto& sel = selections[static_cast<std::size_t>(l)].diagonal;
    const Eigen::VectorXd* noise = nullptr;
    if (!link_noises.empty()) {
      noise = &link_noises[noise_idx];
      if (noise->size() != m)
        throw std::invalid_argument("combine: noise length mismatch");
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      if (sel[static_cast<std::size_t>(j)]) {
        double received = other[j] + (noise ? (*noise)[j] : 0.0);
        out[j] += w * received;
      } else {
        out[j] += w * own[j];
      }
    }
    ++noise_idx;
  }
  return out;
}

std::vector<Eigen::VectorXd> zero_noises(const NetworkTopology& topology,
                                         int node, int m) {
  std::vector<Eigen::VectorXd> z;
  for (int l : topology.neighbor_sets[static_cast<std::size_t>(node)])
    if (l != node) z.push_back(Eigen::VectorXd::Zero(m));
  return z;
}

}  // namespace

void AlgorithmConfig::validate(const NetworkTopology& topology) const {
  topology.validate();
  const int n = topology.num_nodes;
  if (step_sizes.size() != n)
    throw std::invalid_argument("config: step_sizes size != N");
  if ((step_sizes.array() <= 0.0).any())
    throw std::invalid_argument("config: step sizes must be positive");
  if (a1.weights.rows() != n || a2.weights.rows() != n)
    throw std::invalid_argument("config: combination matrix size != N");
  if (mode == DiffusionMode::ATC && !a1.is_identity())
    throw std::invalid_argument("config: ATC requires A1 = I");
  if (mode == DiffusionMode::CTA && !a2.is_identity())
    throw std::invalid_argument("config: CTA requires A2 = I");
}

NetworkState NetworkState::zero(int num_nodes, int param_dim) {
  NetworkState s;
  s.weights.assign(static_cast<std::size_t>(num_nodes),
                   Eigen::VectorXd::Zero(param_dim));
  s.phis = s.weights;
  s.psis = s.weights;
  return s;
}

bool NetworkState::finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  return true;
}

Eigen::VectorXd combine_first(int node, const NetworkTopology& topology,
                              const std::vector<Eigen::VectorXd>& weights,
                              const std::vector<SelectionMatrix>& selections,
                              const std::vector<Eigen::VectorXd>& link_noises,
                              const Eigen::MatrixXd& a1) {
  return combine_phase(node, topology, weights, selections, link_noises, a1);
}

Eigen::VectorXd adapt(const Eigen::VectorXd& phi,
                      const Eigen::RowVectorXd& regressor, double measurement,
                      double step) {
  if (regressor.size() != phi.size())
    throw std::invalid_argument("adapt: dimension mismatch");
  double err = measurement - regressor.dot(phi);
  return phi + step * err * regressor.transpose();
}

Eigen::VectorXd combine_second(int node, const NetworkTopology& topology,
                               const std::vector<Eigen::VectorXd>& psis,
                               const std::vector<SelectionMatrix>& selections,
                               const std::vector<Eigen::VectorXd>& link_noises,
                               const Eigen::MatrixXd& a2) {
  return combine_phase(node, topology, psis, selections, link_noises, a2);
}

NetworkState run_iteration(const NetworkState& state, const Environment& env,
                           const NetworkTopology& topology,
                           const AlgorithmConfig& config,
                           const IterationDraws& draws) {
  const int n = topology.num_nodes;
  NetworkState next = state;

  for (int k = 0; k < n; ++k) {
    std::size_t sk = static_cast<std::size_t>(k);
    // ATC skips the first exchange entirely: no transmission, no noise.
    if (config.first_phase_exchanges()) {
      next.phis[sk] =
          combine_first(k, topology, state.weights, draws.lambda_prev,
                        draws.noise_w.empty()
                            ? zero_noises(topology, k, env.param_dim)
                            : draws.noise_w[sk],
                        config.a1.weights);
    } else {
      next.phis[sk] = state.weights[sk];
    }
  }
  for (int k = 0; k < n; ++k) {
    std::size_t sk = static_cast<std::size_t>(k);
    next.psis[sk] = adapt(next.phis[sk], draws.regressors.row(k),
                          draws.measurements[k], config.step_sizes[k]);
  }
  for (int k = 0; k < n; ++k) {
    std::size_t sk = static_cast<std::size_t>(k);
    if (config.second_phase_exchanges()) {
      next.weights[sk] =
          combine_second(k, topology, next.psis, draws.lambda_curr,
                         draws.noise_psi.empty()
                             ? zero_noises(topology, k, env.param_dim)
                             : draws.noise_psi[sk],
                         config.a2.weights);
    } else {
      next.weights[sk] = next.psis[sk];
    }
  }
  return next;
}

TrialResult run_trial(const Environment& env, const NetworkTopology& topology,
                      const AlgorithmConfig& config, long horizon,
                      std::uint64_t seed, const TrialOptions& options) {
  config.validate(topology);
  if (horizon < 1) throw std::invalid_argument("run_trial: horizon >= 1");
  const int n = topology.num_nodes;
  const int m = env.param_dim;
  const bool noisy = config.links == LinkQuality::Noisy;
  const bool shared_selection =
      config.schedule.phase_coupling == PhaseCoupling::SharedAcrossNodes;

  std::vector<RngStream> reg_rng, meas_rng, sel_rng;
  for (int k = 0; k < n; ++k) {
    reg_rng.emplace_back(seed, RngStream::id("regressor", k));
    meas_rng.emplace_back(seed, RngStream::id("measurement", k));
    sel_rng.emplace_back(seed, RngStream::id("selection", k));
  }
  RngStream shared_sel_rng(seed, RngStream::id("selection-shared"));
  // One stream per directed link and kind.
  std::vector<std::vector<RngStream>> noise_w_rng(static_cast<std::size_t>(n)),
      noise_psi_rng(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k)
    for (int l : topology.neighbor_sets[static_cast<std::size_t>(k)])
      if (l != k) {
        noise_w_rng[static_cast<std::size_t>(k)].emplace_back(
            seed, RngStream::id("link-w", l, k));
        noise_psi_rng[static_cast<std::size_t>(k)].emplace_back(
            seed, RngStream::id("link-psi", l, k));
      }

  auto draw_selection = [&](long t) {
    std::vector<SelectionMatrix> lam(static_cast<std::size_t>(n));
    if (shared_selection &&
        config.schedule.scheme == SelectionScheme::Stochastic) {
      SelectionMatrix one = select(config.schedule, t, 0, shared_sel_rng);
      for (auto& s : lam) s = one;
    } else {
      for (int k = 0; k < n; ++k)
        lam[static_cast<std::size_t>(k)] =
            select(config.schedule, t, k, sel_rng[static_cast<std::size_t>(k)]);
    }
    return lam;
  };

  auto draw_link_noises = [&](std::vector<std::vector<RngStream>>& rngs,
                              LinkNoiseKind kind) {
    std::vector<std::vector<Eigen::VectorXd>> noises(
        static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      std::size_t idx = 0;
      for (int l : topology.neighbor_sets[static_cast<std::size_t>(k)]) {
        if (l == k) continue;
        noises[static_cast<std::size_t>(k)].push_back(
            noisy ? sample_link_noise(env, topology, l, k, kind,
                                      rngs[static_cast<std::size_t>(k)][idx])
                  : Eigen::VectorXd::Zero(m));
        ++idx;
      }
    }
    return noises;
  };

  TrialResult result;
  result.squared_dev = Eigen::MatrixXd::Zero(horizon, n);
  NetworkState state = NetworkState::zero(n, m);
  // Lambda_{k,-1}: schedule phase 0 for sequential, an independent
  // pre-draw for stochastic.
  std::vector<SelectionMatrix> lambda_prev = draw_selection(0);

  for (long i = 0; i < horizon; ++i) {
    IterationDraws draws;
    draws.lambda_prev = lambda_prev;
    draws.lambda_curr = draw_selection(i);
    draws.regressors.resize(n, m);
    draws.meas_noise.resize(n);
    draws.measurements.resize(n);
    for (int k = 0; k < n; ++k) {
      std::size_t sk = static_cast<std::size_t>(k);
      Eigen::RowVectorXd u = sample_regressor(env, k, reg_rng[sk]);
      double v = std::sqrt(env.meas_noise_var[k]) * meas_rng[sk].normal();
      draws.regressors.row(k) = u;
      draws.meas_noise[k] = v;
      draws.measurements[k] = u.dot(env.true_param) + v;
    }
    if (config.first_phase_exchanges())
      draws.noise_w = draw_link_noises(noise_w_rng, LinkNoiseKind::WeightExchange);
    if (config.second_phase_exchanges())
      draws.noise_psi =
          draw_link_noises(noise_psi_rng, LinkNoiseKind::PsiExchange);

    state = run_iteration(state, env, topology, config, draws);
    lambda_prev = draws.lambda_curr;

    if (!state.finite()) {
      result.diverged = true;
      result.diverged_at = i;
      break;
    }
    for (int k = 0; k < n; ++k)
      result.squared_dev(i, k) =
          (env.true_param - state.weights[static_cast<std::size_t>(k)])
              .squaredNorm();
    result.iterations_completed = i + 1;
    if (options.keep_draws) result.draws.push_back(std::move(draws));
    if (options.record_weights) result.weight_log.push_back(state.weights);
  }
  return result;
}

// Draw-log binary format, version 1:
//   magic "PDLG", u32 version, u32 N, u32 M, u64 iteration count, then per
//   iteration: regressors (N*M doubles, row-major), meas_noise (N),
//   measurements (N), lambda_prev and lambda_curr (N*M bytes), then for
//   each of {noise_w, noise_psi}: u8 present flag and, if present, per node
//   the per-neighbor M-vectors in sorted neighbor order.
namespace {
constexpr char kMagic[4] = {'P', 'D', 'L', 'G'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void save_draw_log(std::ostream& out, const std::vector<IterationDraws>& log) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, 1);
  std::uint32_t n = log.empty() ? 0 : static_cast<std::uint32_t>(
                                          log.front().regressors.rows());
  std::uint32_t m = log.empty() ? 0 : static_cast<std::uint32_t>(
                                          log.front().regressors.cols());
  put(out, n);
  put(out, m);
  put<std::uint64_t>(out, log.size());
  for (const auto& d : log) {
    for (std::uint32_t k = 0; k < n; ++k)
      for (std::uint32_t j = 0; j < m; ++j) put(out, d.regressors(k, j));
    for (std::uint32_t k = 0; k < n; ++k) put(out, d.meas_noise[k]);
    for (std::uint32_t k = 0; k < n; ++k) put(out, d.measurements[k]);
    for (const auto* lam : {&d.lambda_prev, &d.lambda_curr})
      for (const auto& s : *lam)
        out.write(reinterpret_cast<const char*>(s.diagonal.data()),
                  static_cast<std::streamsize>(s.diagonal.size()));
    for (const auto* noises : {&d.noise_w, &d.noise_psi}) {
      put<std::uint8_t>(out, noises->empty() ? 0 : 1);
      for (const auto& per_node : *noises) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(per_node.size()));
        for (const auto& v : per_node)
          out.write(reinterpret_cast<const char*>(v.data()),
                    static_cast<std::streamsize>(sizeof(double) * v.size()));
      }
    }
  }
}

std::vector<IterationDraws> load_draw_log(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != std::string_view(kMagic, 4))
    throw std::runtime_error("draw log: bad magic");
  if (get<std::uint32_t>(in) != 1)
    throw std::runtime_error("draw log: unsupported version");
  const auto n = get<std::uint32_t>(in);
  const auto m = get<std::uint32_t>(in);
  const auto count = get<std::uint64_t>(in);
  std::vector<IterationDraws> log;
  log.reserve(count);
  for (std::uint64_t it = 0; it < count; ++it) {
    IterationDraws d;
    d.regressors.resize(n, m);
    d.meas_noise.resize(n);
    d.measurements.resize(n);
    for (std::uint32_t k = 0; k < n; ++k)
      for (std::uint32_t j = 0; j < m; ++j) d.regressors(k, j) = get<double>(in);
    for (std::uint32_t k = 0; k < n; ++k) d.meas_noise[k] = get<double>(in);
    for (std::uint32_t k = 0; k < n; ++k) d.measurements[k] = get<double>(in);
    for (auto* lam : {&d.lambda_prev, &d.lambda_curr}) {
      lam->resize(n);
      for (auto& s : *lam) {
        s.diagonal.resize(m);
        in.read(reinterpret_cast<char*>(s.diagonal.data()), m);
      }
    }
    for (auto* noises : {&d.noise_w, &d.noise_psi}) {
      if (get<std::uint8_t>(in) == 0) continue;
      noises->resize(n);
      for (auto& per_node : *noises) {
        auto deg = get<std::uint32_t>(in);
        per_node.resize(deg);
        for (auto& v : per_node) {
          v.resize(m);
          in.read(reinterpret_cast<char*>(v.data()),
                  static_cast<std::streamsize>(sizeof(double) * m));
        }
      }
    }
    if (!in) throw std::runtime_error("draw log: truncated");
    log.push_back(std::move(d));
  }
  return log;
}

}  // namespace pdnet
