#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace pdnet {

/// Undirected connected graph over N nodes. Neighbor sets always contain
/// the node itself, matching the self-inclusive neighborhood convention of
/// the combination sums.
struct NetworkTopology {
  int num_nodes = 0;
  std::vector<std::vector<int>> neighbor_sets;  // sorted, includes self

  bool has_edge(int l, int k) const;
  /// Mean number of non-self neighbors.
  double avg_degree() const;
  bool is_connected() const;
  /// Throws std::invalid_argument if self-loops, symmetry, or connectivity
  /// are violated.
  void validate() const;
};

enum class CombinationRole { A1, A2 };

/// Left-stochastic cooperation weights: entry (l, k) is node k's weight on
/// node l's estimate, supported on the neighborhood graph.
struct CombinationMatrix {
  Eigen::MatrixXd weights;
  CombinationRole role = CombinationRole::A1;

  bool is_identity(double tol = 0.0) const;
  static CombinationMatrix identity(int n, CombinationRole role);
};

struct CombinationValidation {
  bool ok = true;
  std::vector<std::string> violations;
};

/// Random spanning tree plus uniformly sampled extra edges until the mean
/// non-self degree reaches target_avg_neighbors. Connected by construction,
/// deterministic per seed.
NetworkTopology generate_topology(int num_nodes, double target_avg_neighbors,
                                  std::uint64_t seed);

/// Uniform weights a_lk = 1/|N_k| on the neighborhood, zero elsewhere.
CombinationMatrix build_uniform_combination(const NetworkTopology& topology,
                                            CombinationRole role);

/// Checks support, entry range, and unit column sums (abs tolerance 1e-12).
/// Dimension mismatch between matrix and topology throws
/// std::invalid_argument; invariant violations are reported in the result.
CombinationValidation validate_combination(const CombinationMatrix& matrix,
                                           const NetworkTopology& topology);

inline constexpr double kColumnSumTol = 1e-12;

}  // namespace pdnet
