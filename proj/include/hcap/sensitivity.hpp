#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hcap/feeder.hpp"
#include "hcap/loadflow.hpp"

namespace hcap {

/// Linear DistFlow maps for a single-phase radial feeder.
///
/// Rows/columns are indexed by branch slot k; slot k stands both for branch k
/// and for its downstream node `node_of_slot[k]`. Sign convention: p, q are
/// injections (generation positive), branch flows run parent -> child, V is
/// the squared voltage magnitude:
///
///   V = V0 * 1 + Mp p + Mq q - H l
///   P = C p + DR l,   Q = C q + DX l
struct SensitivityMatrices {
  Eigen::MatrixXd Mp, Mq, H, C, DR, DX;
  std::vector<std::size_t> node_of_slot;
  std::vector<std::ptrdiff_t> slot_of_node;  // -1 for the slack
  double v0_squared = 1.0;

  std::size_t size() const { return node_of_slot.size(); }

  Eigen::VectorXd voltage(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::VectorXd& l) const {
    return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(size()), v0_squared) + Mp * p + Mq * q - H * l;
  }
};

SensitivityMatrices build_sensitivity_matrices(const SinglePhaseFeeder& sp);

/// Second-order model of l = (P^2 + Q^2) / V around (P0, Q0, V0) for one branch.
struct BranchTaylor {
  double P0 = 0.0, Q0 = 0.0, V0 = 1.0;  // V0 is the squared sending-node voltage
  double l0 = 0.0;
  Eigen::Vector3d J = Eigen::Vector3d::Zero();
  Eigen::Vector3d J_plus = Eigen::Vector3d::Zero();
  Eigen::Vector3d J_minus = Eigen::Vector3d::Zero();
  Eigen::Matrix3d He = Eigen::Matrix3d::Zero();
};

BranchTaylor taylor_at(double P0, double Q0, double V0);

struct TaylorPoint {
  std::vector<BranchTaylor> branches;  // per branch slot
  LoadFlowResult1Ph base;              // the load flow the point was taken from
};

/// Taylor point from the converged load flow with `base_injections` added.
/// Throws NonConvergence if that load flow does not converge.
TaylorPoint build_taylor_point(const SinglePhaseFeeder& sp, std::span<const Complex> base_injections = {});

/// Proxy deviations from the Taylor point: plus = (P+, Q+, V+) - x0,
/// minus = (P-, Q-, V-) - x0, with V taken at the sending node.
struct ProxyDeviation {
  Eigen::Vector3d plus = Eigen::Vector3d::Zero();
  Eigen::Vector3d minus = Eigen::Vector3d::Zero();
};

/// Affine lower bound l0 + J+^T d- + J-^T d+.
double eval_f_aff(const BranchTaylor& tp, const ProxyDeviation& d);

/// Convex upper bound l0 + max{2 |J+^T d+ + J-^T d-|, max_k d_k^T He d_k} over
/// the eight proxy corner combinations d_k.
double eval_f_quad(const BranchTaylor& tp, const ProxyDeviation& d);

/// The eight corner deviations, bit 0/1/2 selecting the minus proxy of P/Q/V.
std::array<Eigen::Vector3d, 8> proxy_corners(const ProxyDeviation& d);

std::vector<double> eval_f_aff(const TaylorPoint& tp, std::span<const ProxyDeviation> d);
std::vector<double> eval_f_quad(const TaylorPoint& tp, std::span<const ProxyDeviation> d);

}  // namespace hcap
