#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "hcap/feeder.hpp"
#include "hcap/loadflow.hpp"
#include "hcap/sensitivity.hpp"

namespace hcap::test {

struct BruteMatrices {
  Eigen::MatrixXd Mp, Mq, H, C, DR, DX;
};

/// DistFlow maps by explicit path summation. Slot k is branch k and its child node.
///   V_j = V0 - sum_{k in path(j)} [2 (r_k P_k + x_k Q_k) - |z_k|^2 l_k]
///   P_k = -sum_{i below k} p_i + sum_{f at or below k} r_f l_f
inline BruteMatrices brute_matrices(const SinglePhaseFeeder& sp) {
  const RadialTree& t = sp.tree;
  const auto n = static_cast<Eigen::Index>(t.branch_count());
  BruteMatrices b{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n),
                  Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  std::vector<std::set<std::size_t>> path(t.branch_count());
  for (std::size_t k = 0; k < t.branch_count(); ++k) {
    const auto p = t.path_branches(t.to_node[k]);
    path[k] = std::set<std::size_t>(p.begin(), p.end());
  }
  // below(k, f): branch f is k or lies under k, i.e. k is on the path to f's child.
  auto below = [&](std::size_t k, std::size_t f) { return path[f].count(k) > 0; };
  for (std::size_t k = 0; k < t.branch_count(); ++k) {
    for (std::size_t f = 0; f < t.branch_count(); ++f) {
      if (below(k, f)) {
        b.C(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f)) = -1.0;
        b.DR(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f)) = sp.z[f].real();
        b.DX(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f)) = sp.z[f].imag();
      }
    }
  }
  for (std::size_t j = 0; j < t.branch_count(); ++j) {
    for (std::size_t i = 0; i < t.branch_count(); ++i) {
      double mp = 0.0, mq = 0.0, h = 0.0;
      for (std::size_t k : path[j]) {
        const double r = sp.z[k].real(), x = sp.z[k].imag();
        if (below(k, i)) {
          mp += 2.0 * r;
          mq += 2.0 * x;
          h += 2.0 * (r * sp.z[i].real() + x * sp.z[i].imag());
        }
        if (k == i) h -= std::norm(sp.z[k]);
      }
      b.Mp(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = mp;
      b.Mq(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = mq;
      b.H(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = h;
    }
  }
  return b;
}

/// Largest |V_lin - |V|^2| when the linear map is fed the true branch currents of
/// a converged nonlinear load flow.
inline double substitution_error(const SinglePhaseFeeder& sp, const SensitivityMatrices& sm) {
  const LoadFlowResult1Ph lf = solve_single_phase(sp);
  if (!lf.converged) return INFINITY;
  const auto n = static_cast<Eigen::Index>(sm.size());
  Eigen::VectorXd p(n), q(n), l(n);
  for (std::size_t k = 0; k < sm.size(); ++k) {
    const std::size_t node = sm.node_of_slot[k];
    p[static_cast<Eigen::Index>(k)] = -sp.load[node].real();
    q[static_cast<Eigen::Index>(k)] = -sp.load[node].imag();
    l[static_cast<Eigen::Index>(k)] = std::norm(lf.i[k]);
  }
  const Eigen::VectorXd v = sm.voltage(p, q, l);
  double err = 0.0;
  for (std::size_t k = 0; k < sm.size(); ++k) {
    err = std::max(err, std::abs(v[static_cast<Eigen::Index>(k)] - std::norm(lf.v[sm.node_of_slot[k]])));
  }
  return err;
}

inline double true_l(const Eigen::Vector3d& x) { return (x[0] * x[0] + x[1] * x[1]) / x[2]; }

struct SandwichCount {
  long samples = 0;
  long lower_ok = 0;
  long upper_ok = 0;
  long both_ok = 0;
};

/// Draws proxies x- <= x <= x+ componentwise with every deviation from the
/// expansion point in [-range, range] and checks f_aff <= l(x) <= f_quad.
inline SandwichCount sandwich(const BranchTaylor& bt, long samples, double range, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-range, range);
  SandwichCount c;
  const Eigen::Vector3d x0(bt.P0, bt.Q0, bt.V0);
  for (long s = 0; s < samples; ++s) {
    ProxyDeviation d;
    Eigen::Vector3d mid;
    for (int k = 0; k < 3; ++k) {
      double v[3] = {u(rng), u(rng), u(rng)};
      std::sort(v, v + 3);
      d.minus[k] = v[0];
      mid[k] = v[1];
      d.plus[k] = v[2];
    }
    const double l = true_l(x0 + mid);
    const bool lo = eval_f_aff(bt, d) <= l + 1e-12;
    const bool hi = l <= eval_f_quad(bt, d) + 1e-12;
    ++c.samples;
    c.lower_ok += lo;
    c.upper_ok += hi;
    c.both_ok += lo && hi;
  }
  return c;
}

}  // namespace hcap::test
