#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hcap/convex_solver.hpp"
#include "hcap/feeder.hpp"
#include "hcap/sensitivity.hpp"

namespace hcap {

enum class Direction { maximize, minimize };
enum class QMode { fixed_at_base, free_within_cone };

std::string to_string(Direction d);
std::string to_string(QMode m);

/// Settings of one hosting-capacity program. Voltage bounds are squared
/// magnitudes; per-node vectors override the scalar defaults when non-empty.
struct CiaConfig {
  double v_min = 0.95 * 0.95;
  double v_max = 1.05 * 1.05;
  std::vector<double> v_min_node;  // per node, squared
  std::vector<double> v_max_node;
  std::vector<double> weights;  // per node, empty = all ones

  /// Upper bound on l+ per branch, pu^2. `l_max` (per branch) wins over
  /// `l_max_factor`, which scales the base-case l0 of each branch.
  std::vector<double> l_max;
  std::optional<double> l_max_factor;
  std::optional<double> l_min;  // lower bound on l- for every branch

  /// Per-phase apparent-power cap on the DER at every node, pu. A node's own
  /// s_max from the feeder file takes precedence.
  std::optional<double> s_max;

  QMode q_mode = QMode::fixed_at_base;
  Direction direction = Direction::maximize;

  double v_min_at(std::size_t node) const { return v_min_node.empty() ? v_min : v_min_node[node]; }
  double v_max_at(std::size_t node) const { return v_max_node.empty() ? v_max : v_max_node[node]; }
  double weight_at(std::size_t node) const { return weights.empty() ? 1.0 : weights[node]; }

  /// Config with magnitude limits, squared on the way in.
  static CiaConfig from_magnitudes(double v_min_mag, double v_max_mag);
};

/// Variable handles of an assembled program; -1 means "not a variable".
struct CiaLayout {
  std::vector<int> p, q;                    // per node
  std::vector<int> P_plus, P_minus, Q_plus, Q_minus, l_plus, l_minus, t;  // per branch
  std::vector<int> V_plus, V_minus;         // per node, -1 at the slack
};

struct CiaProblem {
  solver::ConvexProgram program;
  CiaLayout layout;
  CiaConfig config;
  SinglePhaseFeeder feeder;
  SensitivityMatrices matrices;
  TaylorPoint taylor;

  std::size_t decision_count() const;   // p (and q) variables
  std::size_t proxy_count() const;      // P, Q, V, l proxies (both signs)
  std::size_t auxiliary_count() const;  // t per branch
  std::size_t curvature_constraint_count() const;  // absolute-value pair + eight quadratics per branch
  std::size_t bound_constraint_count() const;      // voltage and current bounds
};

/// Builds the convex program over one single-phase feeder. The decision p is
/// DER injection added on top of the fixed base load.
CiaProblem assemble_problem(const SinglePhaseFeeder& sp, const SensitivityMatrices& sm, const TaylorPoint& tp,
                            const CiaConfig& cfg);

/// Convenience: matrices and Taylor point from the base case, then assembly.
CiaProblem assemble_problem(const SinglePhaseFeeder& sp, const CiaConfig& cfg);

struct CiaSolution {
  solver::SolveStatus status = solver::SolveStatus::solver_error;
  Direction direction = Direction::maximize;
  std::vector<double> p_star;  // per node, pu
  std::vector<double> q_star;  // per node, pu (DER reactive, zero unless free)
  std::vector<double> V_plus, V_minus;  // per node
  std::vector<double> P_plus, P_minus, Q_plus, Q_minus, l_plus, l_minus;  // per branch
  double hc_total_pu = 0.0;
  double hc_total_mw = 0.0;
  std::vector<std::string> active_constraints;
  double max_residual = 0.0;  // independent post-solve check
  int iterations = 0;
  double seconds = 0.0;
  std::string message;

  bool optimal() const { return status == solver::SolveStatus::optimal; }
};

/// Solves the program, then recomputes the proxies from p* with the dense
/// sensitivity matrices and re-checks every bound; a violation above 1e-8
/// downgrades the status to solver_error.
CiaSolution solve_hc_direction(const CiaProblem& problem, const solver::SolverOptions& options = {});

enum class Aggregation { sum_phases, replicate_one };

struct HostingCapacity {
  double lower_mw = 0.0;
  double upper_mw = 0.0;
};

/// Sums per-phase totals (sum_phases) or triples the single total
/// (replicate_one). Throws MixedStatus on any non-optimal solution.
double hosting_capacity(const std::vector<CiaSolution>& solutions, Aggregation aggregation);
HostingCapacity hosting_capacity(const std::vector<CiaSolution>& lower, const std::vector<CiaSolution>& upper,
                                 Aggregation aggregation);

}  // namespace hcap
