#include "pdnet/selection.hpp"

#include <numeric>
#include <stdexcept>

namespace pdnet {

int SelectionMatrix::ones() const {
  return static_cast<int>(
      std::accumulate(diagonal.begin(), diagonal.end(), 0));
}

Eigen::VectorXd SelectionMatrix::as_vector() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(diagonal.size()));
  for (Eigen::Index j = 0; j < v.size(); ++j)
    v[j] = diagonal[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  return v;
}

std::vector<std::vector<int>> build_partition(int param_dim,
                                              int entries_per_iter) {
  if (param_dim < 1) throw std::invalid_argument("build_partition: M >= 1");
  if (entries_per_iter < 0 || entries_per_iter > param_dim)
    throw std::invalid_argument("build_partition: need 0 <= L <= M");
  std::vector<std::vector<int>> subsets;
  if (entries_per_iter == 0) return subsets;
  for (int start = 0; start < param_dim; start += entries_per_iter) {
    std::vector<int> block;
    for (int j = start; j < std::min(start + entries_per_iter, param_dim); ++j)
      block.push_back(j);
    subsets.push_back(std::move(block));
  }
  return subsets;
}

SelectionSchedule make_schedule(SelectionScheme scheme, int param_dim,
                                int entries_per_iter) {
  return make_schedule(scheme, param_dim, entries_per_iter,
                       scheme == SelectionScheme::Sequential
                           ? PhaseCoupling::SharedAcrossNodes
                           : PhaseCoupling::IndependentPerNode);
}

SelectionSchedule make_schedule(SelectionScheme scheme, int param_dim,
                                int entries_per_iter,
                                PhaseCoupling coupling) {
  SelectionSchedule s;
  s.scheme = scheme;
  s.param_dim = param_dim;
  s.entries_per_iter = entries_per_iter;
  s.partition = build_partition(param_dim, entries_per_iter);
  s.phase_coupling = coupling;
  return s;
}

SelectionMatrix selection_from_subset(const SelectionSchedule& schedule,
                                      int subset_index) {
  SelectionMatrix m;
  m.diagonal.assign(static_cast<std::size_t>(schedule.param_dim), 0);
  if (subset_index >= 0)
    for (int j : schedule.partition[static_cast<std::size_t>(subset_index)])
      m.diagonal[static_cast<std::size_t>(j)] = 1;
  return m;
}

SelectionMatrix select(const SelectionSchedule& schedule, long iteration,
                       int node, RngStream& rng) {
  if (schedule.empty()) return selection_from_subset(schedule, -1);
  const int b = schedule.num_subsets();
  int subset;
  if (schedule.scheme == SelectionScheme::Sequential) {
    long phase = iteration;
    if (schedule.phase_coupling == PhaseCoupling::IndependentPerNode)
      phase += node;  // staggered cycles
    subset = static_cast<int>(((phase % b) + b) % b);
  } else {
    subset = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(b)));
  }
  return selection_from_subset(schedule, subset);
}

double transmission_probability(int entries_per_iter, int param_dim) {
  if (param_dim < 1 || entries_per_iter < 0 || entries_per_iter > param_dim)
    throw std::invalid_argument("transmission_probability: need 0 <= L <= M");
  return static_cast<double>(entries_per_iter) /
         static_cast<double>(param_dim);
}

Eigen::VectorXd expected_selection(const SelectionSchedule& schedule) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(schedule.param_dim);
  if (schedule.empty()) return e;
  // Each entry lives in exactly one subset; both schemes activate each
  // subset with frequency 1/B.
  const double freq = 1.0 / static_cast<double>(schedule.num_subsets());
  for (const auto& subset : schedule.partition)
    for (int j : subset) e[j] = freq;
  return e;
}

}  // namespace pdnet
