#include "hcap/cia.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hcap/errors.hpp"

namespace hcap {

using solver::AffineExpr;
using solver::ConvexInequality;

std::string to_string(Direction d) { return d == Direction::maximize ? "maximize" : "minimize"; }
std::string to_string(QMode m) { return m == QMode::fixed_at_base ? "fixed_at_base" : "free_within_cone"; }

CiaConfig CiaConfig::from_magnitudes(double v_min_mag, double v_max_mag) {
  CiaConfig cfg;
  cfg.v_min = v_min_mag * v_min_mag;
  cfg.v_max = v_max_mag * v_max_mag;
  return cfg;
}

namespace {

std::size_t count_valid(const std::vector<int>& handles) {
  return static_cast<std::size_t>(std::count_if(handles.begin(), handles.end(), [](int h) { return h >= 0; }));
}

void check_config(const SinglePhaseFeeder& sp, const CiaConfig& cfg) {
  const std::size_t n = sp.size();
  const std::size_t m = sp.tree.branch_count();
  auto check_size = [](std::size_t got, std::size_t want, const char* what) {
    if (got != 0 && got != want) {
      throw DimensionMismatch(std::string(what) + " has " + std::to_string(got) + " entries, expected " +
                              std::to_string(want));
    }
  };
  check_size(cfg.v_min_node.size(), n, "v_min");
  check_size(cfg.v_max_node.size(), n, "v_max");
  check_size(cfg.weights.size(), n, "weights");
  check_size(cfg.l_max.size(), m, "l_max");

  for (std::size_t i = 0; i < n; ++i) {
    if (!(cfg.v_min_at(i) > 0.0 && cfg.v_min_at(i) < cfg.v_max_at(i))) {
      throw InvalidConfig("voltage bounds at bus " + std::to_string(sp.bus_ids[i]) + " need 0 < v_min < v_max");
    }
  }
  bool any_weight = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = cfg.weight_at(i);
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidConfig("weights must be finite and nonnegative");
    if (i != sp.tree.root && sp.present[i] && w > 0.0) any_weight = true;
  }
  if (!any_weight) throw InvalidConfig("at least one injectable bus needs a positive weight");
  for (std::size_t k = 0; k < m; ++k) {
    if (sp.z[k].real() < 0.0 || sp.z[k].imag() < 0.0) {
      throw InvalidConfig("branch impedances must have nonnegative r and x");
    }
  }
  if (cfg.l_max_factor && !(*cfg.l_max_factor > 0.0)) throw InvalidConfig("l_max_factor must be positive");
  if (cfg.s_max && !(*cfg.s_max > 0.0)) throw InvalidConfig("s_max must be positive");
  if (cfg.q_mode == QMode::free_within_cone) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i != sp.tree.root && sp.present[i] && !sp.s_max[i] && !cfg.s_max) {
        throw InvalidConfig("free reactive power needs an s_max at every bus");
      }
    }
  }
}

std::string bus_label(const SinglePhaseFeeder& sp, std::size_t node) { return std::to_string(sp.bus_ids[node]); }

std::string branch_label(const SinglePhaseFeeder& sp, std::size_t k) {
  return bus_label(sp, sp.tree.from_node[k]) + "-" + bus_label(sp, sp.tree.to_node[k]);
}

std::optional<double> branch_l_max(const CiaConfig& cfg, const TaylorPoint& tp, std::size_t k) {
  if (!cfg.l_max.empty()) return cfg.l_max[k];
  if (cfg.l_max_factor) return *cfg.l_max_factor * tp.branches[k].l0;
  return std::nullopt;
}

std::optional<double> node_s_max(const SinglePhaseFeeder& sp, const CiaConfig& cfg, std::size_t node) {
  if (sp.s_max[node]) return sp.s_max[node];
  return cfg.s_max;
}

}  // namespace

std::size_t CiaProblem::decision_count() const { return count_valid(layout.p) + count_valid(layout.q); }

std::size_t CiaProblem::proxy_count() const {
  return count_valid(layout.P_plus) + count_valid(layout.P_minus) + count_valid(layout.Q_plus) +
         count_valid(layout.Q_minus) + count_valid(layout.l_plus) + count_valid(layout.l_minus) +
         count_valid(layout.V_plus) + count_valid(layout.V_minus);
}

std::size_t CiaProblem::auxiliary_count() const { return count_valid(layout.t); }

std::size_t CiaProblem::curvature_constraint_count() const {
  std::size_t c = 0;
  for (const ConvexInequality& in : program.inequalities()) {
    if (in.label.starts_with("abs") || in.label.starts_with("quad")) ++c;
  }
  return c;
}

std::size_t CiaProblem::bound_constraint_count() const {
  std::size_t c = 0;
  for (const ConvexInequality& in : program.inequalities()) {
    if (in.label.starts_with("v_min") || in.label.starts_with("v_max") || in.label.starts_with("l_min") ||
        in.label.starts_with("l_max")) {
      ++c;
    }
  }
  return c;
}

CiaProblem assemble_problem(const SinglePhaseFeeder& sp, const SensitivityMatrices& sm, const TaylorPoint& tp,
                            const CiaConfig& cfg) {
  const RadialTree& tree = sp.tree;
  const std::size_t n = sp.size();
  const std::size_t m = tree.branch_count();
  if (sm.size() != m || tp.branches.size() != m || sp.load.size() != n || sp.present.size() != n) {
    throw DimensionMismatch("sensitivity data does not match the feeder");
  }
  check_config(sp, cfg);

  CiaProblem pr{.program = {}, .layout = {}, .config = cfg, .feeder = sp, .matrices = sm, .taylor = tp};
  solver::ConvexProgram& prog = pr.program;
  CiaLayout& L = pr.layout;
  const double v0sq = sp.slack_voltage * sp.slack_voltage;

  L.p.assign(n, -1);
  L.q.assign(n, -1);
  L.V_plus.assign(n, -1);
  L.V_minus.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == tree.root) continue;
    const double v_base = std::norm(tp.base.v[i]);
    L.V_plus[i] = prog.add_variable("V+[" + bus_label(sp, i) + "]", v_base);
    L.V_minus[i] = prog.add_variable("V-[" + bus_label(sp, i) + "]", v_base);
    if (!sp.present[i]) continue;
    L.p[i] = prog.add_variable("p[" + bus_label(sp, i) + "]", 0.0);
    if (cfg.q_mode == QMode::free_within_cone) L.q[i] = prog.add_variable("q[" + bus_label(sp, i) + "]", 0.0);
  }
  for (auto* v : {&L.P_plus, &L.P_minus, &L.Q_plus, &L.Q_minus, &L.l_plus, &L.l_minus, &L.t}) v->assign(m, -1);
  for (std::size_t k = 0; k < m; ++k) {
    const BranchTaylor& bt = tp.branches[k];
    const std::string b = "[" + branch_label(sp, k) + "]";
    L.P_plus[k] = prog.add_variable("P+" + b, bt.P0);
    L.P_minus[k] = prog.add_variable("P-" + b, bt.P0);
    L.Q_plus[k] = prog.add_variable("Q+" + b, bt.Q0);
    L.Q_minus[k] = prog.add_variable("Q-" + b, bt.Q0);
    L.l_plus[k] = prog.add_variable("l+" + b, bt.l0);
    L.l_minus[k] = prog.add_variable("l-" + b, bt.l0);
    L.t[k] = prog.add_variable("t" + b, 0.0);
  }

  auto var = [](int h) { return AffineExpr{}.add(h, 1.0); };
  auto voltage = [&](const std::vector<int>& handles, std::size_t node) {
    return node == tree.root ? AffineExpr{{}, v0sq} : var(handles[node]);
  };

  // Proxy propagation.
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = tree.from_node[k];
    const std::size_t j = tree.to_node[k];
    const double r = sp.z[k].real();
    const double x = sp.z[k].imag();
    const std::string b = "[" + branch_label(sp, k) + "]";

    // P_k = -(p_j - load_j) + r l_k + sum of child flows
    auto flow = [&](const std::vector<int>& flow_var, const std::vector<int>& l_var, const std::vector<int>& inj,
                    double load, double coef) {
      AffineExpr e = var(flow_var[k]);
      if (inj[j] >= 0) e.add(inj[j], 1.0);
      e.shift(-load);
      e.add(l_var[k], -coef);
      for (std::size_t f : tree.child_branches[j]) e.add(flow_var[f], -1.0);
      return e;
    };
    prog.add_equality(flow(L.P_plus, L.l_plus, L.p, sp.load[j].real(), r), "P+" + b);
    prog.add_equality(flow(L.P_minus, L.l_minus, L.p, sp.load[j].real(), r), "P-" + b);
    prog.add_equality(flow(L.Q_plus, L.l_plus, L.q, sp.load[j].imag(), x), "Q+" + b);
    prog.add_equality(flow(L.Q_minus, L.l_minus, L.q, sp.load[j].imag(), x), "Q-" + b);

    // V_j = V_i - 2 (r P + x Q) + |z|^2 l, with the proxy signs crossed.
    const double z2 = std::norm(sp.z[k]);
    AffineExpr vp = var(L.V_plus[j]);
    vp.add(voltage(L.V_plus, i), -1.0).add(L.P_minus[k], 2.0 * r).add(L.Q_minus[k], 2.0 * x).add(L.l_minus[k], -z2);
    prog.add_equality(vp, "V+" + b);
    AffineExpr vm = var(L.V_minus[j]);
    vm.add(voltage(L.V_minus, i), -1.0).add(L.P_plus[k], 2.0 * r).add(L.Q_plus[k], 2.0 * x).add(L.l_plus[k], -z2);
    prog.add_equality(vm, "V-" + b);
  }

  // Current proxies around the Taylor point.
  for (std::size_t k = 0; k < m; ++k) {
    const BranchTaylor& bt = tp.branches[k];
    const std::size_t i = tree.from_node[k];
    const std::string b = "[" + branch_label(sp, k) + "]";
    const std::array<AffineExpr, 3> d_plus{AffineExpr(var(L.P_plus[k])).shift(-bt.P0),
                                           AffineExpr(var(L.Q_plus[k])).shift(-bt.Q0),
                                           voltage(L.V_plus, i).shift(-bt.V0)};
    const std::array<AffineExpr, 3> d_minus{AffineExpr(var(L.P_minus[k])).shift(-bt.P0),
                                            AffineExpr(var(L.Q_minus[k])).shift(-bt.Q0),
                                            voltage(L.V_minus, i).shift(-bt.V0)};

    // l- = l0 + J+ . d- + J- . d+
    AffineExpr aff = var(L.l_minus[k]);
    aff.shift(-bt.l0);
    for (int c = 0; c < 3; ++c) {
      aff.add(d_minus[c], -bt.J_plus[c]);
      aff.add(d_plus[c], -bt.J_minus[c]);
    }
    prog.add_equality(aff, "l-" + b);

    AffineExpr lin;
    for (int c = 0; c < 3; ++c) {
      lin.add(d_plus[c], 2.0 * bt.J_plus[c]);
      lin.add(d_minus[c], 2.0 * bt.J_minus[c]);
    }
    for (double sign : {1.0, -1.0}) {
      ConvexInequality in;
      in.linear.add(lin, sign).add(L.t[k], -1.0);
      in.label = (sign > 0 ? "abs+" : "abs-") + b;
      prog.add_inequality(std::move(in));
    }

    // d^T He d = (2/V0) ((dP - a dV)^2 + (dQ - b dV)^2)
    const double scale = std::sqrt(2.0 / bt.V0);
    const double a = bt.P0 / bt.V0;
    const double bq = bt.Q0 / bt.V0;
    for (int corner = 0; corner < 8; ++corner) {
      const AffineExpr& dP = (corner & 1) ? d_minus[0] : d_plus[0];
      const AffineExpr& dQ = (corner & 2) ? d_minus[1] : d_plus[1];
      const AffineExpr& dV = (corner & 4) ? d_minus[2] : d_plus[2];
      ConvexInequality in;
      in.squares.push_back(AffineExpr{}.add(dP, scale).add(dV, -scale * a));
      in.squares.push_back(AffineExpr{}.add(dQ, scale).add(dV, -scale * bq));
      in.linear.add(L.t[k], -1.0);
      in.label = "quad" + std::to_string(corner) + b;
      prog.add_inequality(std::move(in));
    }

    ConvexInequality lp;
    lp.linear.add(L.t[k], 1.0).add(L.l_plus[k], -1.0).shift(bt.l0);
    lp.label = "l+" + b;
    prog.add_inequality(std::move(lp));
  }

  // Operating limits.
  for (std::size_t i = 0; i < n; ++i) {
    if (i == tree.root) continue;
    const std::string b = "[" + bus_label(sp, i) + "]";
    ConvexInequality lo;
    lo.linear.add(L.V_minus[i], -1.0).shift(cfg.v_min_at(i));
    lo.label = "v_min" + b;
    prog.add_inequality(std::move(lo));
    ConvexInequality hi;
    hi.linear.add(L.V_plus[i], 1.0).shift(-cfg.v_max_at(i));
    hi.label = "v_max" + b;
    prog.add_inequality(std::move(hi));
  }
  for (std::size_t k = 0; k < m; ++k) {
    const std::string b = "[" + branch_label(sp, k) + "]";
    if (cfg.l_min) {
      ConvexInequality lo;
      lo.linear.add(L.l_minus[k], -1.0).shift(*cfg.l_min);
      lo.label = "l_min" + b;
      prog.add_inequality(std::move(lo));
    }
    if (const auto cap = branch_l_max(cfg, tp, k)) {
      ConvexInequality hi;
      hi.linear.add(L.l_plus[k], 1.0).shift(-*cap);
      hi.label = "l_max" + b;
      prog.add_inequality(std::move(hi));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (L.p[i] < 0) continue;
    const auto s = node_s_max(sp, cfg, i);
    if (!s) continue;
    const std::string b = "[" + bus_label(sp, i) + "]";
    if (cfg.q_mode == QMode::free_within_cone) {
      ConvexInequality cone;
      cone.squares.push_back(var(L.p[i]));
      cone.squares.push_back(var(L.q[i]));
      cone.linear.shift(-*s * *s);
      cone.label = "s_max" + b;
      prog.add_inequality(std::move(cone));
    } else {
      const double q_bar = sp.load[i].imag();
      if (*s <= std::abs(q_bar)) throw InvalidConfig("s_max at bus " + bus_label(sp, i) + " is below its reactive load");
      const double cap = std::sqrt(*s * *s - q_bar * q_bar);
      for (double sign : {1.0, -1.0}) {
        ConvexInequality in;
        in.linear.add(L.p[i], sign).shift(-cap);
        in.label = (sign > 0 ? "s_max+" : "s_max-") + b;
        prog.add_inequality(std::move(in));
      }
    }
  }

  AffineExpr obj;
  const double sense = cfg.direction == Direction::maximize ? -1.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (L.p[i] >= 0) obj.add(L.p[i], sense * cfg.weight_at(i));
  }
  prog.set_objective(std::move(obj));
  return pr;
}

CiaProblem assemble_problem(const SinglePhaseFeeder& sp, const CiaConfig& cfg) {
  return assemble_problem(sp, build_sensitivity_matrices(sp), build_taylor_point(sp), cfg);
}

CiaSolution solve_hc_direction(const CiaProblem& pr, const solver::SolverOptions& options) {
  const solver::SolverResult res = solver::solve(pr.program, options);
  CiaSolution sol;
  sol.direction = pr.config.direction;
  sol.status = res.status;
  sol.iterations = res.iterations;
  sol.seconds = res.seconds;
  sol.message = res.message;
  if (res.status != solver::SolveStatus::optimal) return sol;

  const SinglePhaseFeeder& sp = pr.feeder;
  const RadialTree& tree = sp.tree;
  const CiaLayout& L = pr.layout;
  const std::size_t n = sp.size();
  const std::size_t m = tree.branch_count();
  const Eigen::VectorXd& x = res.x;
  auto value = [&](int h) { return h >= 0 ? x[h] : 0.0; };
  const double v0sq = sp.slack_voltage * sp.slack_voltage;

  sol.p_star.assign(n, 0.0);
  sol.q_star.assign(n, 0.0);
  sol.V_plus.assign(n, v0sq);
  sol.V_minus.assign(n, v0sq);
  for (std::size_t i = 0; i < n; ++i) {
    sol.p_star[i] = value(L.p[i]);
    sol.q_star[i] = value(L.q[i]);
    if (i != tree.root) {
      sol.V_plus[i] = value(L.V_plus[i]);
      sol.V_minus[i] = value(L.V_minus[i]);
    }
  }
  auto gather = [&](const std::vector<int>& h) {
    std::vector<double> out(m);
    for (std::size_t k = 0; k < m; ++k) out[k] = value(h[k]);
    return out;
  };
  sol.P_plus = gather(L.P_plus);
  sol.P_minus = gather(L.P_minus);
  sol.Q_plus = gather(L.Q_plus);
  sol.Q_minus = gather(L.Q_minus);
  sol.l_plus = gather(L.l_plus);
  sol.l_minus = gather(L.l_minus);

  for (std::size_t i = 0; i < n; ++i) sol.hc_total_pu += sol.p_star[i];
  sol.hc_total_mw = sol.hc_total_pu * sp.power_base_mva;

  // Polish: hold p and q fixed and settle the proxy currents through the dense
  // maps, so the flow and voltage proxies are exactly consistent. l+ only ever
  // moves up, which is conservative.
  const SensitivityMatrices& sm = pr.matrices;
  const auto M = static_cast<Eigen::Index>(m);
  Eigen::VectorXd p(M), q(M), lp(M), lm(M);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t j = sm.node_of_slot[k];
    p[k] = sol.p_star[j] - sp.load[j].real();
    q[k] = sol.q_star[j] - sp.load[j].imag();
    lp[k] = sol.l_plus[k];
    lm[k] = sol.l_minus[k];
  }
  std::vector<ProxyDeviation> dev(m);
  auto settle = [&]() {
    const Eigen::VectorXd P_plus = sm.C * p + sm.DR * lp;
    const Eigen::VectorXd P_minus = sm.C * p + sm.DR * lm;
    const Eigen::VectorXd Q_plus = sm.C * q + sm.DX * lp;
    const Eigen::VectorXd Q_minus = sm.C * q + sm.DX * lm;
    const Eigen::VectorXd V_plus = sm.voltage(p, q, lm);
    const Eigen::VectorXd V_minus = sm.voltage(p, q, lp);
    for (std::size_t k = 0; k < m; ++k) {
      const auto K = static_cast<Eigen::Index>(k);
      const std::size_t j = tree.to_node[k];
      sol.P_plus[k] = P_plus[K];
      sol.P_minus[k] = P_minus[K];
      sol.Q_plus[k] = Q_plus[K];
      sol.Q_minus[k] = Q_minus[K];
      sol.V_plus[j] = V_plus[K];
      sol.V_minus[j] = V_minus[K];
    }
    double change = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const auto K = static_cast<Eigen::Index>(k);
      const std::size_t i = tree.from_node[k];
      const BranchTaylor& bt = pr.taylor.branches[k];
      dev[k].plus = {sol.P_plus[k] - bt.P0, sol.Q_plus[k] - bt.Q0, sol.V_plus[i] - bt.V0};
      dev[k].minus = {sol.P_minus[k] - bt.P0, sol.Q_minus[k] - bt.Q0, sol.V_minus[i] - bt.V0};
      const double new_lm = eval_f_aff(bt, dev[k]);
      const double new_lp = std::max(lp[K], eval_f_quad(bt, dev[k]));
      change = std::max({change, std::abs(new_lm - lm[K]), new_lp - lp[K]});
      lm[K] = new_lm;
      lp[K] = new_lp;
    }
    return change;
  };
  double polish = 0.0;
  for (int round = 0; round < 50; ++round) {
    const double change = settle();
    if (round == 0) polish = change;
    if (change < 1e-15) break;
  }
  settle();
  for (std::size_t k = 0; k < m; ++k) {
    sol.l_plus[k] = lp[static_cast<Eigen::Index>(k)];
    sol.l_minus[k] = lm[static_cast<Eigen::Index>(k)];
  }

  double worst = 0.0;
  std::string worst_at;
  auto track = [&](double r, const char* what, int bus) {
    if (r > worst) {
      worst = r;
      worst_at = std::string(what) + "[" + std::to_string(bus) + "]";
    }
  };
  if (polish > 1e-6) track(polish, "polish", -1);
  for (std::size_t k = 0; k < m; ++k) {
    const int bj = sp.bus_ids[tree.to_node[k]];
    const BranchTaylor& bt = pr.taylor.branches[k];
    track(std::abs(eval_f_aff(bt, dev[k]) - sol.l_minus[k]), "l-", bj);
    track(eval_f_quad(bt, dev[k]) - sol.l_plus[k], "l+", bj);
    if (const auto cap = branch_l_max(pr.config, pr.taylor, k)) track(sol.l_plus[k] - *cap, "l_max", bj);
    if (pr.config.l_min) track(*pr.config.l_min - sol.l_minus[k], "l_min", bj);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i == tree.root) continue;
    track(pr.config.v_min_at(i) - sol.V_minus[i], "v_min", sp.bus_ids[i]);
    track(sol.V_plus[i] - pr.config.v_max_at(i), "v_max", sp.bus_ids[i]);
    if (L.p[i] < 0) continue;
    if (const auto s = node_s_max(sp, pr.config, i)) {
      if (pr.config.q_mode == QMode::free_within_cone) {
        track(sol.p_star[i] * sol.p_star[i] + sol.q_star[i] * sol.q_star[i] - *s * *s, "s_max", sp.bus_ids[i]);
      } else {
        const double q_bar = sp.load[i].imag();
        track(std::abs(sol.p_star[i]) - std::sqrt(*s * *s - q_bar * q_bar), "s_max", sp.bus_ids[i]);
      }
    }
  }
  sol.max_residual = worst;
  if (worst > 1e-8) {
    sol.status = solver::SolveStatus::solver_error;
    char buf[96];
    std::snprintf(buf, sizeof buf, "post-solve residual %.3g exceeds 1e-8 at ", worst);
    sol.message = buf + worst_at + " (" + sol.message + ")";
    return sol;
  }

  for (const ConvexInequality& in : pr.program.inequalities()) {
    if (std::abs(in.evaluate(x)) <= 1e-7) sol.active_constraints.push_back(in.label);
  }
  return sol;
}

double hosting_capacity(const std::vector<CiaSolution>& solutions, Aggregation aggregation) {
  if (solutions.empty()) throw ArgumentError("no solutions to aggregate");
  double total = 0.0;
  for (const CiaSolution& s : solutions) {
    if (!s.optimal()) throw MixedStatus("cannot aggregate a non-optimal solution (" + solver::to_string(s.status) + ")");
    total += s.hc_total_mw;
  }
  if (aggregation == Aggregation::replicate_one) {
    if (solutions.size() != 1) throw ArgumentError("replication expects a single solution");
    total *= 3.0;
  }
  return total;
}

HostingCapacity hosting_capacity(const std::vector<CiaSolution>& lower, const std::vector<CiaSolution>& upper,
                                 Aggregation aggregation) {
  return {hosting_capacity(lower, aggregation), hosting_capacity(upper, aggregation)};
}

}  // namespace hcap
