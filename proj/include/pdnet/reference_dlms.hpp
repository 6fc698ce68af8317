#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pdnet/topology.hpp"

namespace pdnet {

/// Plain diffusion LMS with ideal full exchange, coded independently of the
/// partial-diffusion engine. Kept as the serial reference implementation:
/// tests check that the engine reduces to it when every entry is
/// transmitted over ideal links.
///
/// Per iteration and node:
///   phi_k = sum_l a1(l,k) w_l
///   psi_k = phi_k + mu_k u_k^T (d_k - u_k phi_k)
///   w_k   = sum_l a2(l,k) psi_l
///
/// Inputs are the per-iteration regressor rows and measurements; returns
/// the weight trajectory w_{k,i} for every iteration.
std::vector<std::vector<Eigen::VectorXd>> run_reference_dlms(
    const NetworkTopology& topology, const Eigen::MatrixXd& a1,
    const Eigen::MatrixXd& a2, const Eigen::VectorXd& step_sizes,
    const std::vector<Eigen::MatrixXd>& regressors,
    const std::vector<Eigen::VectorXd>& measurements);

}  // namespace pdnet
