#pragma once

#include <array>
#include <span>
#include <vector>

#include "hcap/feeder.hpp"

namespace hcap {

/// Per-bus, per-phase complex power in pu. Positive real part = generation.
using Injections3Ph = std::vector<std::array<Complex, 3>>;

struct LoadFlowOptions {
  double tolerance = 1e-9;  // max nodal complex-power mismatch, pu
  int max_iter = 100;
};

struct VoltageProfile3Ph {
  std::vector<Vector3c> v;  // per bus

  double magnitude(std::size_t bus, Phase p) const { return std::abs(v[bus](idx(p))); }
};

struct CurrentProfile3Ph {
  std::vector<Vector3c> i;  // per branch, parent -> child

  double squared_magnitude(std::size_t branch, Phase p) const { return std::norm(i[branch](idx(p))); }
};

struct LoadFlowResult3Ph {
  VoltageProfile3Ph voltages;
  CurrentProfile3Ph currents;
  int iterations = 0;
  double max_mismatch = 0.0;
  bool converged = false;
};

struct LoadFlowResult1Ph {
  std::vector<Complex> v;  // per node
  std::vector<Complex> i;  // per branch, parent -> child
  int iterations = 0;
  double max_mismatch = 0.0;
  bool converged = false;

  /// Sending-end complex power of branch k.
  Complex sending_power(const RadialTree& tree, std::size_t k) const {
    return v[tree.from_node[k]] * std::conj(i[k]);
  }
};

/// Slack phasors V0 * {1, e^{-j120}, e^{+j120}}.
Vector3c slack_phasors(double v0);

/// Unbalanced backward-forward sweep with full 3x3 coupling and constant-power
/// wye loads. Net nodal consumption is load - extra_injections.
LoadFlowResult3Ph solve_three_phase(const Feeder& feeder, const Injections3Ph& extra_injections = {},
                                    const LoadFlowOptions& options = {});

LoadFlowResult1Ph solve_single_phase(const SinglePhaseFeeder& sp,
                                     std::span<const Complex> extra_injections = {},
                                     const LoadFlowOptions& options = {});

/// Propagates V_j = V_i - z3_ij I_ij from the slack phasors down the tree.
VoltageProfile3Ph estimate_phase_voltages(const Feeder& feeder, const CurrentProfile3Ph& currents);

}  // namespace hcap
