#include "hcap/methods.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "hcap/errors.hpp"

namespace hcap {

namespace {

using PerPhase = std::vector<std::array<double, 3>>;

PerPhase zeros(std::size_t n) { return PerPhase(n, std::array<double, 3>{0.0, 0.0, 0.0}); }

std::string branch_label(const Feeder& feeder, std::size_t k) {
  return std::to_string(feeder.branch(k).from) + "-" + std::to_string(feeder.branch(k).to);
}

/// Per-phase program settings; node bounds are magnitudes (empty = scalar limits).
CiaConfig phase_config(const HcSettings& s, Direction dir, const std::vector<double>& v_min_node = {},
                       const std::vector<double>& v_max_node = {}) {
  CiaConfig cfg = s.cia;
  cfg.direction = dir;
  cfg.v_min = s.limits.v_min * s.limits.v_min;
  cfg.v_max = s.limits.v_max * s.limits.v_max;
  cfg.v_min_node.clear();
  cfg.v_max_node.clear();
  for (double v : v_min_node) cfg.v_min_node.push_back(v * v);
  for (double v : v_max_node) cfg.v_max_node.push_back(v * v);
  return cfg;
}

std::string status_of(const std::vector<CiaSolution>& sols) {
  for (const CiaSolution& s : sols) {
    if (s.status == solver::SolveStatus::infeasible) return "infeasible";
  }
  for (const CiaSolution& s : sols) {
    if (s.status != solver::SolveStatus::optimal) return "solver_error";
  }
  return "optimal";
}

std::string first_message(const std::vector<CiaSolution>& sols) {
  for (const CiaSolution& s : sols) {
    if (!s.optimal()) return s.message;
  }
  return sols.empty() ? std::string{} : sols.front().message;
}

std::vector<double> magnitudes(const LoadFlowResult1Ph& lf) {
  std::vector<double> out(lf.v.size());
  for (std::size_t i = 0; i < lf.v.size(); ++i) out[i] = std::abs(lf.v[i]);
  return out;
}

/// Fills the validation part of a direction result from its injections.
void validate_into(const Feeder& feeder, const HcSettings& s, DirectionResult& r, LoadFlowResult3Ph* flow_out = nullptr) {
  Validation v = validate_injections(feeder, r.p_mw, r.q_mvar, s);
  r.validation_converged = v.flow.converged;
  r.metrics = v.metrics;
  r.v3_mag = zeros(feeder.size());
  for (std::size_t i = 0; i < feeder.size(); ++i) {
    for (Phase p : kAllPhases) r.v3_mag[i][idx(p)] = v.flow.voltages.magnitude(i, p);
  }
  if (flow_out) *flow_out = std::move(v.flow);
}

void sum_hc(DirectionResult& r) {
  r.hc_phase_mw = {0.0, 0.0, 0.0};
  for (const auto& row : r.p_mw) {
    for (std::size_t p = 0; p < 3; ++p) r.hc_phase_mw[p] += row[p];
  }
  r.hc_mw = r.hc_phase_mw[0] + r.hc_phase_mw[1] + r.hc_phase_mw[2];
}

/// Result of solving one CIA program per phase on the given single-phase feeders.
struct PhaseRun {
  std::array<SinglePhaseFeeder, 3> sp;
  std::vector<CiaSolution> sols;
  DirectionResult result;
};

PhaseRun solve_per_phase(const Feeder& feeder, const HcSettings& s, Direction dir, std::array<SinglePhaseFeeder, 3> sp,
                         const std::array<CiaConfig, 3>& cfg) {
  PhaseRun run{std::move(sp), {}, {}};
  DirectionResult& r = run.result;
  r.direction = dir;
  for (Phase p : kAllPhases) {
    run.sols.push_back(solve_hc_direction(assemble_problem(run.sp[idx(p)], cfg[idx(p)]), s.solver));
  }
  r.status = status_of(run.sols);
  r.message = first_message(run.sols);
  r.feasible = r.status == "optimal";
  r.iterations = 1;
  if (!r.feasible) return run;

  const std::size_t n = feeder.size();
  r.p_mw = zeros(n);
  r.q_mvar = zeros(n);
  r.v_pred_mag = zeros(n);
  for (Phase p : kAllPhases) {
    const SinglePhaseFeeder& f = run.sp[idx(p)];
    const CiaSolution& sol = run.sols[idx(p)];
    std::vector<Complex> inj(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!f.present[i]) continue;
      r.p_mw[i][idx(p)] = sol.p_star[i] * f.power_base_mva;
      r.q_mvar[i][idx(p)] = sol.q_star[i] * f.power_base_mva;
      inj[i] = Complex(sol.p_star[i], sol.q_star[i]);
    }
    const auto mag = magnitudes(solve_single_phase(f, inj, s.loadflow));
    for (std::size_t i = 0; i < n; ++i) r.v_pred_mag[i][idx(p)] = mag[i];
  }
  sum_hc(r);
  validate_into(feeder, s, r);
  return run;
}

std::array<CiaConfig, 3> same_config(const CiaConfig& c) { return {c, c, c}; }

std::array<SinglePhaseFeeder, 3> extract_all(const Feeder& feeder, ImpedanceMode mode, const BranchMask& mask = {}) {
  return {extract_phase(feeder, Phase::a, mode, mask), extract_phase(feeder, Phase::b, mode, mask),
          extract_phase(feeder, Phase::c, mode, mask)};
}

/// Method 1 and 2i: one single-phase solve replicated to every present phase.
DirectionResult replicate(const Feeder& feeder, const HcSettings& s, Direction dir, const SinglePhaseFeeder& sp) {
  DirectionResult r;
  r.direction = dir;
  const CiaSolution sol = solve_hc_direction(assemble_problem(sp, phase_config(s, dir)), s.solver);
  r.status = status_of({sol});
  r.message = sol.message;
  r.feasible = sol.optimal();
  r.iterations = 1;
  if (!r.feasible) return r;

  const std::size_t n = feeder.size();
  r.p_mw = zeros(n);
  r.q_mvar = zeros(n);
  std::vector<Complex> inj(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (sp.present[i]) inj[i] = Complex(sol.p_star[i], sol.q_star[i]);
    for (Phase p : kAllPhases) {
      if (!feeder.bus(i).phases.contains(p) || !sp.present[i]) continue;
      r.p_mw[i][idx(p)] = sol.p_star[i] * sp.power_base_mva;
      r.q_mvar[i][idx(p)] = sol.q_star[i] * sp.power_base_mva;
    }
  }
  const auto mag = magnitudes(solve_single_phase(sp, inj, s.loadflow));
  r.v_pred_mag = zeros(n);
  for (std::size_t i = 0; i < n; ++i) r.v_pred_mag[i] = {mag[i], mag[i], mag[i]};
  sum_hc(r);
  validate_into(feeder, s, r);
  return r;
}

std::vector<Direction> directions(const HcSettings& s) {
  std::vector<Direction> out;
  if (s.run_up) out.push_back(Direction::maximize);
  if (s.run_down) out.push_back(Direction::minimize);
  if (out.empty()) throw ArgumentError("no direction selected");
  return out;
}

void store(HcReport& rep, DirectionResult r) {
  if (r.direction == Direction::maximize) {
    rep.up = std::move(r);
  } else {
    rep.down = std::move(r);
  }
}

constexpr double kModzLadderStart = 0.0005;
constexpr double kModzLadderEnd = 0.05;

/// Branches incident to any node whose predicted and validated voltage
/// magnitudes differ by more than epsilon on some phase.

BranchMask select_branches(const Feeder& feeder, const DirectionResult& r, double epsilon) {
  const RadialTree& tree = feeder.tree();
  std::vector<bool> node(feeder.size(), false);
  if (std::isfinite(epsilon)) {
    for (std::size_t i = 0; i < feeder.size(); ++i) {
      for (Phase p : kAllPhases) {
        if (!feeder.bus(i).phases.contains(p)) continue;
        if (std::abs(r.v3_mag[i][idx(p)] - r.v_pred_mag[i][idx(p)]) > epsilon) node[i] = true;
      }
    }
  }
  BranchMask mask(tree.branch_count(), false);
  for (std::size_t k = 0; k < tree.branch_count(); ++k) mask[k] = node[tree.from_node[k]] || node[tree.to_node[k]];
  return mask;
}

bool violates(const DirectionResult& r, double tol) { return !r.validation_converged || r.metrics.N_v > 0 || r.metrics.M_v > tol; }

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::m1i: return "1i";
    case MethodKind::m1ii: return "1ii";
    case MethodKind::m2i_a: return "2ia";
    case MethodKind::m2i_b: return "2ib";
    case MethodKind::m2i_c: return "2ic";
    case MethodKind::m2ii: return "2ii";
    case MethodKind::modz: return "modz";
    case MethodKind::iterative: return "iterative";
    case MethodKind::random_search: return "random";
  }
  return "?";
}

MethodKind method_kind_from_string(std::string_view s) {
  for (MethodKind k : {MethodKind::m1i, MethodKind::m1ii, MethodKind::m2i_a, MethodKind::m2i_b, MethodKind::m2i_c,
                       MethodKind::m2ii, MethodKind::modz, MethodKind::iterative, MethodKind::random_search}) {
    if (to_string(k) == s) return k;
  }
  throw ArgumentError("unknown method '" + std::string(s) + "'");
}

std::string to_string(BoundUpdate u) { return u == BoundUpdate::literal ? "literal" : "magnitude"; }

BoundUpdate bound_update_from_string(std::string_view s) {
  if (s == "literal") return BoundUpdate::literal;
  if (s == "magnitude") return BoundUpdate::magnitude;
  throw ArgumentError("unknown bound update '" + std::string(s) + "'");
}

std::string MethodId::name() const { return to_string(kind); }

void MethodId::validate() const {
  if (!(epsilon >= 0.0)) throw ArgumentError("epsilon must be >= 0");
  if (modz_passes < 1) throw ArgumentError("Mod-Z needs at least one pass");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0, 1]");
  if (max_iter < 1) throw ArgumentError("max-iter must be >= 1");
  if (samples < 1) throw ArgumentError("samples must be >= 1");
}

std::vector<PhaseSet> bus_phases(const Feeder& feeder) {
  std::vector<PhaseSet> out;
  out.reserve(feeder.size());
  for (const Bus& b : feeder.buses()) out.push_back(b.phases);
  return out;
}

ViolationMetrics compute_metrics(const VoltageProfile3Ph& v, VoltageLimits limits, std::span<const PhaseSet> phases,
                                 double tolerance) {
  if (!phases.empty() && phases.size() != v.v.size()) throw DimensionMismatch("phase list does not match the profile");
  ViolationMetrics m;
  double margin_sum = 0.0;
  std::size_t entries = 0;
  double vuf_sum = 0.0;
  for (std::size_t i = 0; i < v.v.size(); ++i) {
    const PhaseSet present = phases.empty() ? PhaseSet::all() : phases[i];
    double mean = 0.0;
    int count = 0;
    for (Phase p : kAllPhases) {
      if (!present.contains(p)) continue;
      const double mag = v.magnitude(i, p);
      const double excess = std::max({0.0, mag - limits.v_max, limits.v_min - mag});
      if (excess > tolerance) {
        ++m.N_v;
        m.M_v = std::max(m.M_v, excess);
        m.S_v += excess;
      }
      margin_sum += std::max(0.0, std::min(mag - limits.v_min, limits.v_max - mag));
      ++entries;
      mean += mag;
      ++count;
    }
    if (count > 1) {
      mean /= count;
      double dev = 0.0;
      for (Phase p : kAllPhases) {
        if (present.contains(p)) dev = std::max(dev, v.magnitude(i, p) - mean);
      }
      if (mean > 0.0) vuf_sum += dev / mean;
    }
  }
  if (entries > 0) m.W_M = margin_sum / static_cast<double>(entries);
  if (!v.v.empty()) m.VUF = 100.0 * vuf_sum / static_cast<double>(v.v.size());
  return m;
}

Validation validate_injections(const Feeder& feeder, const PerPhase& p_mw, const PerPhase& q_mvar,
                               const HcSettings& settings) {
  if (p_mw.size() != feeder.size() || (!q_mvar.empty() && q_mvar.size() != feeder.size())) {
    throw DimensionMismatch("injections do not match the feeder size");
  }
  const double base = feeder.phase_power_base_mva();
  Injections3Ph inj(feeder.size());
  for (std::size_t i = 0; i < feeder.size(); ++i) {
    for (Phase p : kAllPhases) {
      if (!feeder.bus(i).phases.contains(p)) continue;
      const double q = q_mvar.empty() ? 0.0 : q_mvar[i][idx(p)];
      inj[i][idx(p)] = Complex(p_mw[i][idx(p)] / base, q / base);
    }
  }
  Validation v;
  v.flow = solve_three_phase(feeder, inj, settings.loadflow);
  if (v.flow.converged) {
    const auto phases = bus_phases(feeder);
    v.metrics = compute_metrics(v.flow.voltages, settings.limits, phases, settings.violation_tolerance);
  }
  return v;
}

std::vector<double> uniform_weights(const Feeder& feeder) { return std::vector<double>(feeder.size(), 1.0); }

std::vector<double> leaf2x_weights(const Feeder& feeder) {
  const RadialTree& tree = feeder.tree();
  std::vector<double> w(feeder.size(), 1.0);
  for (std::size_t i = 0; i < feeder.size(); ++i) {
    if (i != tree.root && tree.child_branches[i].empty()) w[i] = 2.0;
  }
  return w;
}

// ---------------------------------------------------------------------------

HcReport run_method(const Feeder& feeder, const MethodId& method, const HcSettings& settings) {
  method.validate();
  HcReport rep;
  rep.method = method;
  rep.limits = settings.limits;
  for (Direction dir : directions(settings)) {
    switch (method.kind) {
      case MethodKind::m1i:
        store(rep, replicate(feeder, settings, dir, balance_approximation(feeder, BalanceVariant::worst_case)));
        break;
      case MethodKind::m1ii:
        store(rep, replicate(feeder, settings, dir, balance_approximation(feeder, BalanceVariant::average)));
        break;
      case MethodKind::m2i_a:
      case MethodKind::m2i_b:
      case MethodKind::m2i_c: {
        const Phase ph = method.kind == MethodKind::m2i_a   ? Phase::a
                         : method.kind == MethodKind::m2i_b ? Phase::b
                                                            : Phase::c;
        store(rep, replicate(feeder, settings, dir, extract_phase(feeder, ph, ImpedanceMode::diagonal)));
        break;
      }
      case MethodKind::m2ii: {
        PhaseRun run = solve_per_phase(feeder, settings, dir, extract_all(feeder, ImpedanceMode::diagonal),
                                       same_config(phase_config(settings, dir)));
        store(rep, std::move(run.result));
        break;
      }
      default:
        throw ArgumentError("run_method does not handle method " + method.name());
    }
  }
  return rep;
}

HcReport run_modz(const Feeder& feeder, const MethodId& method, const HcSettings& settings) {
  method.validate();
  HcReport rep;
  rep.method = method;
  rep.limits = settings.limits;
  const std::size_t m = feeder.branches().size();
  for (Direction dir : directions(settings)) {
    const auto cfg = same_config(phase_config(settings, dir));
    // The all-lines solve does not depend on epsilon.
    std::optional<DirectionResult> all_lines;
    auto attempt = [&](double epsilon) {
      BranchMask mask(m, false);
      DirectionResult result;
      if (std::isfinite(epsilon)) {
        if (!all_lines) {
          all_lines = solve_per_phase(feeder, settings, dir,
                                      extract_all(feeder, ImpedanceMode::theorem1_approx, BranchMask(m, true)), cfg)
                          .result;
        }
        result = *all_lines;
        for (int pass = 0; pass < method.modz_passes && result.feasible; ++pass) {
          const BranchMask picked = select_branches(feeder, result, epsilon);
          bool grew = pass == 0;
          for (std::size_t k = 0; k < m; ++k) {
            grew = grew || (picked[k] && !mask[k]);
            mask[k] = mask[k] || picked[k];
          }
          if (!grew) break;
          result =
              solve_per_phase(feeder, settings, dir, extract_all(feeder, ImpedanceMode::theorem1_approx, mask), cfg)
                  .result;
        }
      } else {
        result =
            solve_per_phase(feeder, settings, dir, extract_all(feeder, ImpedanceMode::theorem1_approx, mask), cfg)
                .result;
      }
      for (std::size_t k = 0; k < m; ++k) {
        if (mask[k]) result.modified_lines.push_back(branch_label(feeder, k));
      }
      result.accepted_epsilon = epsilon;
      return result;
    };

    DirectionResult result = attempt(method.epsilon);
    if (method.calibrate) {
      // Raise epsilon until the validated injections are violation free.
      double epsilon = method.epsilon;
      while (result.feasible && violates(result, settings.violation_tolerance) && std::isfinite(epsilon)) {
        if (epsilon <= 0.0) {
          epsilon = kModzLadderStart;
        } else if (epsilon < kModzLadderEnd) {
          epsilon *= 2.0;
        } else {
          epsilon = std::numeric_limits<double>::infinity();
        }
        result = attempt(epsilon);
      }
    }
    store(rep, std::move(result));
  }
  return rep;
}

HcReport run_iterative(const Feeder& feeder, const MethodId& method, const HcSettings& settings) {
  method.validate();
  HcReport rep;
  rep.method = method;
  rep.limits = settings.limits;
  const std::size_t n = feeder.size();
  const auto sp = extract_all(feeder, ImpedanceMode::diagonal);

  for (Direction dir : directions(settings)) {
    PerPhase v_min(n, {settings.limits.v_min, settings.limits.v_min, settings.limits.v_min});
    PerPhase v_max(n, {settings.limits.v_max, settings.limits.v_max, settings.limits.v_max});
    std::optional<DirectionResult> accepted;
    std::string stop = "iteration limit reached";
    int rounds = 0;

    for (int it = 0; it < method.max_iter; ++it) {
      // Step 1: per-phase programs with the current node bounds.
      std::array<CiaConfig, 3> cfg;
      bool bounds_ok = true;
      for (Phase p : kAllPhases) {
        std::vector<double> lo(n), hi(n);
        for (std::size_t i = 0; i < n; ++i) {
          lo[i] = v_min[i][idx(p)];
          hi[i] = v_max[i][idx(p)];
          if (!(lo[i] > 0.0 && lo[i] < hi[i])) bounds_ok = false;
        }
        cfg[idx(p)] = phase_config(settings, dir, lo, hi);
      }
      if (!bounds_ok) {
        stop = "voltage bounds crossed";
        break;
      }
      // Steps 2 and 3: per-phase and three-phase load flows.
      PhaseRun run = solve_per_phase(feeder, settings, dir, sp, cfg);
      ++rounds;
      if (!run.result.feasible) {
        if (it == 0) {
          run.result.iterations = rounds;
          store(rep, std::move(run.result));
          accepted.reset();
          stop.clear();
          break;
        }
        stop = "program " + run.result.status + " at iteration " + std::to_string(it) + ": " + run.result.message;
        break;
      }
      // Step 4: stop at the first violation of the original limits.
      if (violates(run.result, settings.violation_tolerance)) {
        stop = "violation at iteration " + std::to_string(it);
        if (it == 0) accepted = std::move(run.result);
        break;
      }
      run.result.v_min_final = v_min;
      run.result.v_max_final = v_max;
      accepted = std::move(run.result);

      // Steps 5 and 6: coupled estimate from the three-phase currents.
      Validation val = validate_injections(feeder, accepted->p_mw, accepted->q_mvar, settings);
      const VoltageProfile3Ph est = estimate_phase_voltages(feeder, val.flow.currents);
      // Step 7: bound update.
      bool moved = false;
      for (std::size_t i = 0; i < n; ++i) {
        for (Phase p : kAllPhases) {
          if (!feeder.bus(i).phases.contains(p)) continue;
          double dv = est.magnitude(i, p) - accepted->v_pred_mag[i][idx(p)];
          if (method.bound_update == BoundUpdate::magnitude) dv = std::abs(dv);
          const double step = method.alpha * dv;
          if (std::abs(step) > 1e-12) moved = true;
          v_max[i][idx(p)] += step;
          v_min[i][idx(p)] -= step;
        }
      }
      if (!moved) {
        stop = "bounds stationary";
        break;
      }
    }
    if (accepted) {
      accepted->iterations = rounds;
      accepted->message = stop;
      store(rep, std::move(*accepted));
    }
  }
  return rep;
}

HcReport run_random_search(const Feeder& feeder, const MethodId& method, const HcSettings& settings) {
  method.validate();
  HcReport rep;
  rep.method = method;
  rep.limits = settings.limits;
  const std::size_t n = feeder.size();
  const std::size_t slack = feeder.slack_index();

  for (Direction dir : directions(settings)) {
    const double sign = dir == Direction::maximize ? 1.0 : -1.0;
    std::mt19937_64 rng(method.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto scaled = [&](const PerPhase& d, double t) {
      PerPhase p = zeros(n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) p[i][c] = sign * t * d[i][c];
      }
      return p;
    };
    auto feasible = [&](const PerPhase& d, double t) {
      const Validation v = validate_injections(feeder, scaled(d, t), {}, settings);
      return v.flow.converged && v.metrics.N_v == 0;
    };

    PerPhase best_dir = zeros(n);
    double best = 0.0;
    const bool base_ok = feasible(best_dir, 0.0);
    for (int k = 0; k < method.samples && base_ok; ++k) {
      PerPhase d = zeros(n);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (Phase p : kAllPhases) {
          if (i == slack || !feeder.bus(i).phases.contains(p)) continue;
          d[i][idx(p)] = unit(rng);
          total += d[i][idx(p)];
        }
      }
      if (!(total > 0.0)) continue;
      for (auto& row : d) {
        for (double& x : row) x /= total;  // multiplier t is then the total in MW
      }
      double lo = 0.0;
      double hi = std::max(1.0, best);
      while (feasible(d, hi) && hi < 1e4) {
        lo = hi;
        hi *= 2.0;
      }
      if (lo < best && !feasible(d, best)) continue;  // cannot beat the incumbent
      if (lo < best) lo = best;
      for (int b = 0; b < 40 && hi - lo > 1e-6 * std::max(1.0, hi); ++b) {
        const double mid = 0.5 * (lo + hi);
        (feasible(d, mid) ? lo : hi) = mid;
      }
      if (lo > best) {
        best = lo;
        best_dir = d;
      }
    }

    DirectionResult r;
    r.direction = dir;
    r.status = "search";
    r.message = base_ok ? "best of " + std::to_string(method.samples) + " samples" : "base case violates the limits";
    r.feasible = true;
    r.iterations = method.samples;
    r.p_mw = scaled(best_dir, best);
    r.q_mvar = zeros(n);
    sum_hc(r);
    validate_into(feeder, settings, r);
    store(rep, std::move(r));
  }
  return rep;
}

HcReport run(const Feeder& feeder, const MethodId& method, const HcSettings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  HcReport rep;
  switch (method.kind) {
    case MethodKind::modz: rep = run_modz(feeder, method, settings); break;
    case MethodKind::iterative: rep = run_iterative(feeder, method, settings); break;
    case MethodKind::random_search: rep = run_random_search(feeder, method, settings); break;
    default: rep = run_method(feeder, method, settings); break;
  }
  rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

ScenarioSummary summarize_scenarios(std::span<const DirectionResult> results) {
  ScenarioSummary s;
  if (results.empty()) return s;
  double hc = 0.0;
  bool all_feasible = true;
  for (const DirectionResult& r : results) {
    s.metrics.N_v += r.metrics.N_v;
    s.metrics.S_v += r.metrics.S_v;
    s.metrics.M_v = std::max(s.metrics.M_v, r.metrics.M_v);
    s.metrics.W_M += r.metrics.W_M;
    s.metrics.VUF += r.metrics.VUF;
    hc += r.hc_mw;
    all_feasible = all_feasible && r.feasible;
  }
  const auto count = static_cast<double>(results.size());
  s.metrics.W_M /= count;
  s.metrics.VUF /= count;
  if (all_feasible) s.hc_mw = hc / count;
  return s;
}

}  // namespace hcap
