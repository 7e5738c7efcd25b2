#include "hcap/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "hcap/errors.hpp"

namespace hcap {

SensitivityMatrices build_sensitivity_matrices(const SinglePhaseFeeder& sp) {
  const RadialTree& tree = sp.tree;
  const std::size_t n_nodes = tree.node_count();
  const std::size_t n = tree.branch_count();
  if (n + 1 != n_nodes || tree.order.size() != n_nodes || sp.z.size() != n) {
    throw TopologyError("single-phase feeder is not a radial tree");
  }

  SensitivityMatrices sm;
  sm.v0_squared = sp.slack_voltage * sp.slack_voltage;
  sm.node_of_slot = tree.to_node;
  sm.slot_of_node.assign(n_nodes, -1);
  for (std::size_t k = 0; k < n; ++k) sm.slot_of_node[tree.to_node[k]] = static_cast<std::ptrdiff_t>(k);

  // Path sums of r and x from the root.
  std::vector<double> path_r(n_nodes, 0.0), path_x(n_nodes, 0.0);
  for (std::size_t node : tree.order) {
    for (std::size_t k : tree.child_branches[node]) {
      path_r[tree.to_node[k]] = path_r[node] + sp.z[k].real();
      path_x[tree.to_node[k]] = path_x[node] + sp.z[k].imag();
    }
  }

  const auto N = static_cast<Eigen::Index>(n);
  sm.Mp = Eigen::MatrixXd::Zero(N, N);
  sm.Mq = Eigen::MatrixXd::Zero(N, N);
  sm.H = Eigen::MatrixXd::Zero(N, N);
  sm.C = Eigen::MatrixXd::Zero(N, N);
  sm.DR = Eigen::MatrixXd::Zero(N, N);
  sm.DX = Eigen::MatrixXd::Zero(N, N);

  // stamp[m] == a marks m as an ancestor-or-self of node_of_slot[a].
  std::vector<std::size_t> stamp(n_nodes, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::ptrdiff_t m = static_cast<std::ptrdiff_t>(tree.to_node[a]); m >= 0; m = tree.parent[m]) {
      stamp[static_cast<std::size_t>(m)] = a;
    }
    const auto A = static_cast<Eigen::Index>(a);
    for (std::size_t b = 0; b < n; ++b) {
      const auto B = static_cast<Eigen::Index>(b);
      const std::size_t nb = tree.to_node[b];
      std::size_t lca = nb;
      while (stamp[lca] != a) lca = static_cast<std::size_t>(tree.parent[lca]);

      sm.Mp(A, B) = 2.0 * path_r[lca];
      sm.Mq(A, B) = 2.0 * path_x[lca];
      const double rb = sp.z[b].real();
      const double xb = sp.z[b].imag();
      // Branch b lies on the path to node a iff nb is an ancestor-or-self of it.
      const bool on_path = lca == nb;
      sm.H(A, B) = 2.0 * (rb * path_r[lca] + xb * path_x[lca]) - (on_path ? std::norm(sp.z[b]) : 0.0);
      if (on_path) {
        sm.C(B, A) = -1.0;
        sm.DR(B, A) = sp.z[a].real();
        sm.DX(B, A) = sp.z[a].imag();
      }
    }
  }
  return sm;
}

BranchTaylor taylor_at(double P0, double Q0, double V0) {
  if (!(V0 > 0.0)) throw ArgumentError("Taylor point needs a positive squared voltage");
  BranchTaylor t;
  t.P0 = P0;
  t.Q0 = Q0;
  t.V0 = V0;
  const double s2 = P0 * P0 + Q0 * Q0;
  t.l0 = s2 / V0;
  t.J = {2.0 * P0 / V0, 2.0 * Q0 / V0, -s2 / (V0 * V0)};
  t.J_plus = t.J.cwiseMax(0.0);
  t.J_minus = t.J.cwiseMin(0.0);
  const double v2 = V0 * V0;
  t.He << 2.0 / V0, 0.0, -2.0 * P0 / v2,
          0.0, 2.0 / V0, -2.0 * Q0 / v2,
          -2.0 * P0 / v2, -2.0 * Q0 / v2, 2.0 * s2 / (v2 * V0);
  return t;
}

TaylorPoint build_taylor_point(const SinglePhaseFeeder& sp, std::span<const Complex> base_injections) {
  TaylorPoint tp;
  tp.base = solve_single_phase(sp, base_injections);
  if (!tp.base.converged) throw NonConvergence("base-case load flow did not converge");
  const RadialTree& tree = sp.tree;
  tp.branches.reserve(tree.branch_count());
  for (std::size_t k = 0; k < tree.branch_count(); ++k) {
    const Complex s = tp.base.sending_power(tree, k);
    const double v = std::norm(tp.base.v[tree.from_node[k]]);
    tp.branches.push_back(taylor_at(s.real(), s.imag(), v));
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(tp.branches.back().He,
                                                                          Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    if (min_eig < -1e-10 * std::max(1.0, tp.branches.back().He.norm())) {
      throw SolverError("branch Hessian is not positive semi-definite");
    }
  }
  return tp;
}

double eval_f_aff(const BranchTaylor& tp, const ProxyDeviation& d) {
  return tp.l0 + tp.J_plus.dot(d.minus) + tp.J_minus.dot(d.plus);
}

std::array<Eigen::Vector3d, 8> proxy_corners(const ProxyDeviation& d) {
  std::array<Eigen::Vector3d, 8> corners;
  for (int k = 0; k < 8; ++k) {
    for (int c = 0; c < 3; ++c) corners[k](c) = ((k >> c) & 1) ? d.minus(c) : d.plus(c);
  }
  return corners;
}

double eval_f_quad(const BranchTaylor& tp, const ProxyDeviation& d) {
  const double linear = 2.0 * std::abs(tp.J_plus.dot(d.plus) + tp.J_minus.dot(d.minus));
  double psi = 0.0;
  for (const Eigen::Vector3d& c : proxy_corners(d)) psi = std::max(psi, c.dot(tp.He * c));
  return tp.l0 + std::max(linear, psi);
}

std::vector<double> eval_f_aff(const TaylorPoint& tp, std::span<const ProxyDeviation> d) {
  if (d.size() != tp.branches.size()) throw DimensionMismatch("deviation count does not match branch count");
  std::vector<double> out(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) out[k] = eval_f_aff(tp.branches[k], d[k]);
  return out;
}

std::vector<double> eval_f_quad(const TaylorPoint& tp, std::span<const ProxyDeviation> d) {
  if (d.size() != tp.branches.size()) throw DimensionMismatch("deviation count does not match branch count");
  std::vector<double> out(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) out[k] = eval_f_quad(tp.branches[k], d[k]);
  return out;
}

}  // namespace hcap
