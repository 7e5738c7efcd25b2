#include "hcap/loadflow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hcap/errors.hpp"

namespace hcap {

Vector3c slack_phasors(double v0) {
  const double a = 2.0 * std::numbers::pi / 3.0;
  return {Complex(v0, 0.0), std::polar(v0, -a), std::polar(v0, a)};
}

LoadFlowResult3Ph solve_three_phase(const Feeder& feeder, const Injections3Ph& extra_injections,
                                    const LoadFlowOptions& options) {
  if (!(feeder.slack_voltage() > 0.0)) throw SingularBase("slack voltage must be positive");
  const std::size_t n = feeder.size();
  if (!extra_injections.empty() && extra_injections.size() != n) {
    throw ArgumentError("injection vector size does not match the feeder");
  }
  const RadialTree& tree = feeder.tree();

  // Net consumption per bus and phase.
  std::vector<std::array<Complex, 3>> demand(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Bus& b = feeder.bus(i);
    for (Phase p : kAllPhases) {
      Complex s = b.load[idx(p)];
      if (!extra_injections.empty()) {
        const Complex inj = extra_injections[i][idx(p)];
        if (!b.phases.contains(p) && inj != Complex(0.0, 0.0)) {
          throw ArgumentError("injection on absent phase of bus " + std::to_string(b.id));
        }
        s -= inj;
      }
      demand[i][idx(p)] = i == tree.root ? Complex{} : s;
    }
  }

  LoadFlowResult3Ph res;
  const Vector3c v_slack = slack_phasors(feeder.slack_voltage());
  res.voltages.v.assign(n, v_slack);
  res.currents.i.assign(feeder.branches().size(), Vector3c::Zero());
  std::vector<Vector3c> load_current(n, Vector3c::Zero());

  for (int it = 1; it <= options.max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (int p = 0; p < 3; ++p) {
        const Complex s = demand[i][p];
        load_current[i](p) = s == Complex(0.0, 0.0) ? Complex{} : std::conj(s / res.voltages.v[i](p));
      }
    }
    // Backward sweep: leaves to root.
    for (auto r = tree.order.rbegin(); r != tree.order.rend(); ++r) {
      const std::size_t node = *r;
      if (tree.parent_branch[node] < 0) continue;
      Vector3c current = load_current[node];
      for (std::size_t f : tree.child_branches[node]) current += res.currents.i[f];
      res.currents.i[static_cast<std::size_t>(tree.parent_branch[node])] = current;
    }
    // Forward sweep: root to leaves.
    for (std::size_t node : tree.order) {
      for (std::size_t k : tree.child_branches[node]) {
        res.voltages.v[tree.to_node[k]] = res.voltages.v[node] - feeder.branch(k).z * res.currents.i[k];
      }
    }
    double mismatch = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int p = 0; p < 3; ++p) {
        const Complex s_calc = res.voltages.v[i](p) * std::conj(load_current[i](p));
        mismatch = std::max(mismatch, std::abs(s_calc - demand[i][p]));
      }
    }
    res.iterations = it;
    res.max_mismatch = mismatch;
    if (!std::isfinite(mismatch)) break;
    if (mismatch <= options.tolerance) {
      res.converged = true;
      break;
    }
  }
  return res;
}

LoadFlowResult1Ph solve_single_phase(const SinglePhaseFeeder& sp, std::span<const Complex> extra_injections,
                                     const LoadFlowOptions& options) {
  if (!(sp.slack_voltage > 0.0)) throw SingularBase("slack voltage must be positive");
  const RadialTree& tree = sp.tree;
  const std::size_t n = sp.size();
  if (!extra_injections.empty() && extra_injections.size() != n) {
    throw ArgumentError("injection vector size does not match the feeder");
  }
  std::vector<Complex> demand(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == tree.root) continue;
    demand[i] = sp.load[i] - (extra_injections.empty() ? Complex{} : extra_injections[i]);
  }

  LoadFlowResult1Ph res;
  res.v.assign(n, Complex(sp.slack_voltage, 0.0));
  res.i.assign(tree.branch_count(), Complex{});
  std::vector<Complex> load_current(n);

  for (int it = 1; it <= options.max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      load_current[i] = demand[i] == Complex(0.0, 0.0) ? Complex{} : std::conj(demand[i] / res.v[i]);
    }
    for (auto r = tree.order.rbegin(); r != tree.order.rend(); ++r) {
      const std::size_t node = *r;
      if (tree.parent_branch[node] < 0) continue;
      Complex current = load_current[node];
      for (std::size_t f : tree.child_branches[node]) current += res.i[f];
      res.i[static_cast<std::size_t>(tree.parent_branch[node])] = current;
    }
    for (std::size_t node : tree.order) {
      for (std::size_t k : tree.child_branches[node]) {
        res.v[tree.to_node[k]] = res.v[node] - sp.z[k] * res.i[k];
      }
    }
    double mismatch = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mismatch = std::max(mismatch, std::abs(res.v[i] * std::conj(load_current[i]) - demand[i]));
    }
    res.iterations = it;
    res.max_mismatch = mismatch;
    if (!std::isfinite(mismatch)) break;
    if (mismatch <= options.tolerance) {
      res.converged = true;
      break;
    }
  }
  return res;
}

VoltageProfile3Ph estimate_phase_voltages(const Feeder& feeder, const CurrentProfile3Ph& currents) {
  if (currents.i.size() != feeder.branches().size()) {
    throw ArgumentError("current profile size does not match the feeder");
  }
  const RadialTree& tree = feeder.tree();
  VoltageProfile3Ph est;
  est.v.assign(feeder.size(), slack_phasors(feeder.slack_voltage()));
  for (std::size_t node : tree.order) {
    for (std::size_t k : tree.child_branches[node]) {
      est.v[tree.to_node[k]] = est.v[node] - feeder.branch(k).z * currents.i[k];
    }
  }
  return est;
}

}  // namespace hcap
