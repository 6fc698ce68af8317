#include "pdnet/topology.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "pdnet/rng.hpp"

namespace pdnet {

bool NetworkTopology::has_edge(int l, int k) const {
  const auto& nk = neighbor_sets[static_cast<std::size_t>(k)];
  return std::binary_search(nk.begin(), nk.end(), l);
}

double NetworkTopology::avg_degree() const {
  std::size_t total = 0;
  for (const auto& nk : neighbor_sets) total += nk.size() - 1;
  return static_cast<double>(total) / static_cast<double>(num_nodes);
}

bool NetworkTopology::is_connected() const {
  if (num_nodes <= 0) return false;
  std::vector<char> seen(static_cast<std::size_t>(num_nodes), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    int k = stack.back();
    stack.pop_back();
    for (int l : neighbor_sets[static_cast<std::size_t>(k)]) {
      if (!seen[static_cast<std::size_t>(l)]) {
        seen[static_cast<std::size_t>(l)] = 1;
        ++reached;
        stack.push_back(l);
      }
    }
  }
  return reached == num_nodes;
}

void NetworkTopology::validate() const {
  if (num_nodes < 1 ||
      neighbor_sets.size() != static_cast<std::size_t>(num_nodes))
    throw std::invalid_argument("topology: bad node count");
  for (int k = 0; k < num_nodes; ++k) {
    if (!has_edge(k, k))
      throw std::invalid_argument("topology: missing self-loop at node " +
                                  std::to_string(k));
    for (int l : neighbor_sets[static_cast<std::size_t>(k)]) {
      if (l < 0 || l >= num_nodes)
        throw std::invalid_argument("topology: neighbor index out of range");
      if (!has_edge(k, l))
        throw std::invalid_argument("topology: asymmetric edge (" +
                                    std::to_string(l) + "," +
                                    std::to_string(k) + ")");
    }
  }
  if (!is_connected()) throw std::invalid_argument("topology: not connected");
}

bool CombinationMatrix::is_identity(double tol) const {
  int n = static_cast<int>(weights.rows());
  return (weights - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <=
         tol;
}

CombinationMatrix CombinationMatrix::identity(int n, CombinationRole role) {
  return {Eigen::MatrixXd::Identity(n, n), role};
}

NetworkTopology generate_topology(int num_nodes, double target_avg_neighbors,
                                  std::uint64_t seed) {
  if (num_nodes < 2) throw std::invalid_argument("generate_topology: N >= 2");
  if (target_avg_neighbors < 1.0)
    throw std::invalid_argument(
        "generate_topology: target_avg_neighbors must be >= 1");
  if (target_avg_neighbors >= static_cast<double>(num_nodes))
    throw std::invalid_argument(
        "generate_topology: target_avg_neighbors must be < N");

  RngStream rng(seed, RngStream::id("topology"));
  const std::size_t n = static_cast<std::size_t>(num_nodes);
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  auto connect = [&](int a, int b) {
    adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = 1;
    adj[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = 1;
  };

  // Random spanning tree: attach each node (in shuffled order) to a
  // uniformly chosen already-placed node.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  for (std::size_t i = 1; i < n; ++i) {
    int parent = order[rng.uniform_int(i)];
    connect(order[i], parent);
  }

  std::size_t edges = n - 1;
  const double target_edges = target_avg_neighbors * num_nodes / 2.0;
  const std::size_t max_edges = n * (n - 1) / 2;
  while (static_cast<double>(edges) + 0.5 < target_edges &&
         edges < max_edges) {
    int a = static_cast<int>(rng.uniform_int(n));
    int b = static_cast<int>(rng.uniform_int(n));
    if (a == b || adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)])
      continue;
    connect(a, b);
    ++edges;
  }

  NetworkTopology topo;
  topo.num_nodes = num_nodes;
  topo.neighbor_sets.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    topo.neighbor_sets[k].push_back(static_cast<int>(k));
    for (std::size_t l = 0; l < n; ++l)
      if (l != k && adj[l][k]) topo.neighbor_sets[k].push_back(static_cast<int>(l));
    std::sort(topo.neighbor_sets[k].begin(), topo.neighbor_sets[k].end());
  }
  topo.validate();
  return topo;
}

CombinationMatrix build_uniform_combination(const NetworkTopology& topology,
                                            CombinationRole role) {
  topology.validate();
  int n = topology.num_nodes;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    const auto& nk = topology.neighbor_sets[static_cast<std::size_t>(k)];
    double a = 1.0 / static_cast<double>(nk.size());
    for (int l : nk) w(l, k) = a;
  }
  return {std::move(w), role};
}

CombinationValidation validate_combination(const CombinationMatrix& matrix,
                                           const NetworkTopology& topology) {
  if (matrix.weights.rows() != topology.num_nodes ||
      matrix.weights.cols() != topology.num_nodes)
    throw std::invalid_argument(
        "validate_combination: matrix/topology dimension mismatch");

  CombinationValidation result;
  int n = topology.num_nodes;
  for (int k = 0; k < n; ++k) {
    double col_sum = 0.0;
    for (int l = 0; l < n; ++l) {
      double a = matrix.weights(l, k);
      col_sum += a;
      if (a < 0.0 || a > 1.0)
        result.violations.push_back("entry (" + std::to_string(l) + "," +
                                    std::to_string(k) + ") outside [0,1]");
      if (a != 0.0 && !topology.has_edge(l, k))
        result.violations.push_back("positive weight on non-edge (" +
                                    std::to_string(l) + "," +
                                    std::to_string(k) + ")");
    }
    if (std::abs(col_sum - 1.0) > kColumnSumTol)
      result.violations.push_back("column " + std::to_string(k) +
                                  " sums to " + std::to_string(col_sum));
  }
  result.ok = result.violations.empty();
  return result;
}

}  // namespace pdnet
