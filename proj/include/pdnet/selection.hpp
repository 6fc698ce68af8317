#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pdnet/rng.hpp"

namespace pdnet {

enum class SelectionScheme { Sequential, Stochastic };
enum class PhaseCoupling { SharedAcrossNodes, IndependentPerNode };

/// Diagonal of a 0/1 entry-selection matrix: marks which of the M weight
/// entries a node transmits this iteration.
struct SelectionMatrix {
  std::vector<std::uint8_t> diagonal;

  int ones() const;
  Eigen::VectorXd as_vector() const;
};

/// Partition of {0..M-1} into B contiguous blocks of size <= L, cycled
/// (sequential) or sampled uniformly (stochastic) to pick the transmitted
/// subset each iteration.
struct SelectionSchedule {
  SelectionScheme scheme = SelectionScheme::Sequential;
  int param_dim = 0;        // M
  int entries_per_iter = 0; // L
  std::vector<std::vector<int>> partition;
  PhaseCoupling phase_coupling = PhaseCoupling::SharedAcrossNodes;

  int num_subsets() const { return static_cast<int>(partition.size()); }
  bool empty() const { return entries_per_iter == 0; }
  bool full() const { return entries_per_iter == param_dim; }
};

/// Contiguous blocks {0..L-1}, {L..2L-1}, ...; the last block may be
/// shorter when L does not divide M. L = 0 gives an empty partition
/// (transmit-nothing schedule); L > M is rejected.
std::vector<std::vector<int>> build_partition(int param_dim,
                                              int entries_per_iter);

SelectionSchedule make_schedule(SelectionScheme scheme, int param_dim,
                                int entries_per_iter);
SelectionSchedule make_schedule(SelectionScheme scheme, int param_dim,
                                int entries_per_iter,
                                PhaseCoupling coupling);

SelectionMatrix selection_from_subset(const SelectionSchedule& schedule,
                                      int subset_index);

/// Active subset index at time `iteration` for `node`. Sequential-shared
/// cycles (i mod B); sequential-independent staggers nodes by their index;
/// stochastic draws uniformly from the partition (per node when
/// independent). `rng` is consumed only by stochastic draws.
SelectionMatrix select(const SelectionSchedule& schedule, long iteration,
                       int node, RngStream& rng);

/// p = L/M.
double transmission_probability(int entries_per_iter, int param_dim);

/// Diagonal of E[Lambda]: per-entry selection probability (stochastic) or
/// cycle average (sequential). 1/B for every entry under the contiguous
/// partition.
Eigen::VectorXd expected_selection(const SelectionSchedule& schedule);

}  // namespace pdnet
