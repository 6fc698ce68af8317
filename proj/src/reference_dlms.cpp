#include "pdnet/reference_dlms.hpp"

#include <stdexcept>

namespace pdnet {

std::vector<std::vector<Eigen::VectorXd>> run_reference_dlms(
    const NetworkTopology& topology, const Eigen::MatrixXd& a1,
    const Eigen::MatrixXd& a2, const Eigen::VectorXd& step_sizes,
    const std::vector<Eigen::MatrixXd>& regressors,
    const std::vector<Eigen::VectorXd>& measurements) {
  if (regressors.size() != measurements.size())
    throw std::invalid_argument("reference: input length mismatch");
  const int n = topology.num_nodes;
  const auto m = regressors.empty() ? 0 : regressors.front().cols();

  std::vector<Eigen::VectorXd> w(static_cast<std::size_t>(n),
                                 Eigen::VectorXd::Zero(m));
  std::vector<Eigen::VectorXd> phi = w, psi = w;
  std::vector<std::vector<Eigen::VectorXd>> trajectory;
  trajectory.reserve(regressors.size());

  for (std::size_t i = 0; i < regressors.size(); ++i) {
    for (int k = 0; k < n; ++k) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
      for (int l : topology.neighbor_sets[static_cast<std::size_t>(k)])
        acc += a1(l, k) * w[static_cast<std::size_t>(l)];
      phi[static_cast<std::size_t>(k)] = acc;
    }
    for (int k = 0; k < n; ++k) {
      Eigen::RowVectorXd u = regressors[i].row(k);
      double e = measurements[i][k] - u.dot(phi[static_cast<std::size_t>(k)]);
      psi[static_cast<std::size_t>(k)] =
          phi[static_cast<std::size_t>(k)] + step_sizes[k] * e * u.transpose();
    }
    for (int k = 0; k < n; ++k) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
      for (int l : topology.neighbor_sets[static_cast<std::size_t>(k)])
        acc += a2(l, k) * psi[static_cast<std::size_t>(l)];
      w[static_cast<std::size_t>(k)] = acc;
    }
    trajectory.push_back(w);
  }
  return trajectory;
}

}  // namespace pdnet
