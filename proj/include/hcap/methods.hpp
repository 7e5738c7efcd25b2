#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hcap/cia.hpp"
#include "hcap/feeder.hpp"
#include "hcap/loadflow.hpp"

namespace hcap {

enum class MethodKind { m1i, m1ii, m2i_a, m2i_b, m2i_c, m2ii, modz, iterative, random_search };

/// How the iterative method moves the per-node voltage bounds.
///   literal:   vmax += alpha dV, vmin -= alpha dV (dV signed, may tighten)
///   magnitude: vmax += alpha |dV|, vmin -= alpha |dV| (bounds only relax)
enum class BoundUpdate { literal, magnitude };

struct MethodId {
  MethodKind kind = MethodKind::m2ii;
  double epsilon = 0.0;  // modz, pu; +inf selects no node
  int modz_passes = 1;
  bool calibrate = false;  // modz: double epsilon until validation is clean
  double alpha = 0.5;    // iterative
  int max_iter = 20;
  BoundUpdate bound_update = BoundUpdate::magnitude;
  int samples = 200;     // random_search
  std::uint64_t seed = 1;

  /// Short name as used on the command line ("2ii", "modz", ...).
  std::string name() const;
  /// Throws ArgumentError on unknown names or out-of-range parameters.
  void validate() const;
};

MethodKind method_kind_from_string(std::string_view s);
std::string to_string(MethodKind k);
std::string to_string(BoundUpdate u);
BoundUpdate bound_update_from_string(std::string_view s);

struct ViolationMetrics {
  int N_v = 0;
  double M_v = 0.0;
  double S_v = 0.0;
  double W_M = 0.0;
  double VUF = 0.0;  // percent
};

/// Voltage limits in magnitude pu.
struct VoltageLimits {
  double v_min = 0.95;
  double v_max = 1.05;
};

/// Five voltage metrics over every (bus, phase) entry. `phases` restricts the
/// entries to phases present at each bus (all three when empty). Excursions
/// up to `tolerance` are not counted as violations.
ViolationMetrics compute_metrics(const VoltageProfile3Ph& v, VoltageLimits limits,
                                 std::span<const PhaseSet> phases = {}, double tolerance = 0.0);

/// Phases present at every bus of a feeder, in bus order.
std::vector<PhaseSet> bus_phases(const Feeder& feeder);

struct HcSettings {
  VoltageLimits limits;
  /// Template for every per-phase program. Voltage bounds are taken from
  /// `limits`; weights are per bus.
  CiaConfig cia;
  bool run_up = true;
  bool run_down = true;
  solver::SolverOptions solver;
  LoadFlowOptions loadflow;
  double violation_tolerance = 1e-9;  // pu, for the iterative stop test and reports
};

/// One direction (up = injection, down = consumption) of a method run.
struct DirectionResult {
  Direction direction = Direction::maximize;
  std::string status;  // "optimal", "infeasible", "solver_error", "search"
  std::string message;
  bool feasible = false;
  std::vector<std::array<double, 3>> p_mw;  // per bus and phase
  std::vector<std::array<double, 3>> q_mvar;
  std::array<double, 3> hc_phase_mw{};
  double hc_mw = 0.0;

  bool validation_converged = false;
  ViolationMetrics metrics;
  std::vector<std::array<double, 3>> v3_mag;       // three-phase validation
  std::vector<std::array<double, 3>> v_pred_mag;   // per-phase model prediction

  int iterations = 0;
  std::vector<std::string> modified_lines;  // "from-to" bus ids
  std::optional<double> accepted_epsilon;   // modz only
  std::vector<std::array<double, 3>> v_min_final, v_max_final;  // iterative only
};

struct HcReport {
  MethodId method;
  VoltageLimits limits;
  std::optional<DirectionResult> up;
  std::optional<DirectionResult> down;
  double runtime_seconds = 0.0;

  double hc_upper_mw() const { return up ? up->hc_mw : 0.0; }
  double hc_lower_mw() const { return down ? down->hc_mw : 0.0; }
};

/// Methods 1i, 1ii, 2i^a/b/c and 2ii.
HcReport run_method(const Feeder& feeder, const MethodId& method, const HcSettings& settings);
HcReport run_modz(const Feeder& feeder, const MethodId& method, const HcSettings& settings);
HcReport run_iterative(const Feeder& feeder, const MethodId& method, const HcSettings& settings);
HcReport run_random_search(const Feeder& feeder, const MethodId& method, const HcSettings& settings);

/// Dispatches on method.kind.
HcReport run(const Feeder& feeder, const MethodId& method, const HcSettings& settings);

/// Per-bus weights: all ones, or leaf buses doubled.
std::vector<double> uniform_weights(const Feeder& feeder);
std::vector<double> leaf2x_weights(const Feeder& feeder);

/// Three-phase validation of per-bus, per-phase injections (MW, MVAr).
struct Validation {
  LoadFlowResult3Ph flow;
  ViolationMetrics metrics;
};
Validation validate_injections(const Feeder& feeder, const std::vector<std::array<double, 3>>& p_mw,
                               const std::vector<std::array<double, 3>>& q_mvar, const HcSettings& settings);

/// Scenario-suite summary: N_v and S_v summed, M_v maximum, W_M, VUF and HC
/// averaged. HC is absent when any scenario was infeasible.
struct ScenarioSummary {
  ViolationMetrics metrics;
  std::optional<double> hc_mw;
};
ScenarioSummary summarize_scenarios(std::span<const DirectionResult> results);

}  // namespace hcap
