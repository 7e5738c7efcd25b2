// hcap: hosting capacity of unbalanced radial feeders.
//
//   hcap compute  --feeder F --method M [options]
//   hcap validate --feeder F --injections FILE [--direction up|down]
//   hcap generate --buses N --seed S --unbalance U --out FILE

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hcap/errors.hpp"
#include "hcap/feeder.hpp"
#include "hcap/loadflow.hpp"
#include "hcap/methods.hpp"
#include "hcap/report_io.hpp"

namespace fs = std::filesystem;
using namespace hcap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitViolation = 3;

struct CommonArgs {
  std::string feeder;
  std::string scenario;
  double vmin = 0.95;
  double vmax = 1.05;
};

struct ComputeArgs {
  std::string method = "2ii";
  std::string epsilon = "0";
  bool calibrate = false;
  int modz_passes = 1;
  double alpha = 0.5;
  int max_iter = 20;
  std::string bound_update = "magnitude";
  std::optional<double> smax_kva;
  std::optional<double> lmax_factor;
  std::string weights = "uniform";
  std::string direction = "both";
  std::uint64_t seed = 1;
  int samples = 200;
  std::string out = ".";
  std::vector<std::string> formats{"json"};
  bool quiet = false;
};

struct ValidateArgs {
  std::string injections;
  std::string direction = "up";
  double tolerance = 0.0;
};

struct GenerateArgs {
  int buses = 0;
  std::uint64_t seed = 1;
  double unbalance = 0.0;
  bool transposed = false;
  double mutual_ratio = 1.0 / 3.0;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--feeder", a.feeder, "feeder JSON file")->required();
  cmd->add_option("--scenario", a.scenario, "load scenario")->check(CLI::IsMember({"i", "ii", "iii"}));
  cmd->add_option("--vmin", a.vmin, "lower voltage limit, pu");
  cmd->add_option("--vmax", a.vmax, "upper voltage limit, pu");
}

Feeder load(const CommonArgs& a) {
  Feeder f = load_feeder(a.feeder);
  if (!a.scenario.empty()) f = apply_scenario(f, scenario_from_string(a.scenario));
  return f;
}

VoltageLimits limits_of(const CommonArgs& a) {
  if (!(a.vmin > 0.0 && a.vmin < a.vmax)) throw ArgumentError("need 0 < vmin < vmax");
  return {a.vmin, a.vmax};
}

double parse_epsilon(const std::string& s) {
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ArgumentError("epsilon '" + s + "' is not a number");
  return v;
}

void print_metrics_header() {
  std::printf("%-9s %-6s %-12s %10s %5s %9s %9s %8s %7s\n", "method", "dir", "status", "HC [MW]", "N_v", "M_v",
              "S_v", "W_M", "VUF %");
}

void print_row(const std::string& method, const char* dir, const DirectionResult& d) {
  const ViolationMetrics& m = d.metrics;
  std::printf("%-9s %-6s %-12s %10.4f %5d %9.2e %9.2e %8.4f %7.3f\n", method.c_str(), dir, d.status.c_str(), d.hc_mw,
              m.N_v, m.M_v, m.S_v, m.W_M, m.VUF);
  if (!d.modified_lines.empty()) std::printf("%-9s %-6s modified lines: %zu\n", "", dir, d.modified_lines.size());
  if (d.accepted_epsilon) std::printf("%-9s %-6s accepted epsilon: %g\n", "", dir, *d.accepted_epsilon);
  if (!d.message.empty() && d.status != "optimal") std::printf("%-9s %-6s %s\n", "", dir, d.message.c_str());
}

int cmd_compute(const CommonArgs& common, const ComputeArgs& a) {
  const Feeder feeder = load(common);

  MethodId method;
  method.kind = method_kind_from_string(a.method);
  method.epsilon = parse_epsilon(a.epsilon);
  method.calibrate = a.calibrate;
  method.modz_passes = a.modz_passes;
  method.alpha = a.alpha;
  method.max_iter = a.max_iter;
  method.bound_update = bound_update_from_string(a.bound_update);
  method.samples = a.samples;
  method.seed = a.seed;
  method.validate();

  HcSettings settings;
  settings.limits = limits_of(common);
  settings.run_up = a.direction != "down";
  settings.run_down = a.direction != "up";
  if (a.lmax_factor) {
    if (!(*a.lmax_factor > 0.0)) throw ArgumentError("lmax-factor must be positive");
    settings.cia.l_max_factor = *a.lmax_factor;
  }
  if (a.smax_kva) {
    if (!(*a.smax_kva > 0.0)) throw ArgumentError("smax-kva must be positive");
    settings.cia.s_max = *a.smax_kva / 1000.0 / feeder.phase_power_base_mva();
  }
  if (a.weights == "uniform") {
    settings.cia.weights = uniform_weights(feeder);
  } else if (a.weights == "leaf2x") {
    settings.cia.weights = leaf2x_weights(feeder);
  } else {
    settings.cia.weights = io::read_weights(a.weights, feeder);
  }

  const fs::path out_dir = a.out;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw ArgumentError("cannot create output directory " + out_dir.string());

  const HcReport report = run(feeder, method, settings);

  const std::string source = fs::path(common.feeder).filename().string();
  for (const std::string& f : a.formats) {
    if (f == "json") {
      io::write_file_atomic(out_dir / "report.json", io::report_json(report, feeder, source));
      io::write_file_atomic(out_dir / "report.meta.json", io::report_meta_json(report));
    } else {
      io::write_file_atomic(out_dir / "injections.csv", io::injections_csv(report, feeder));
      io::write_file_atomic(out_dir / "voltage_profile.csv", io::voltage_profile_csv(report, feeder));
      io::write_file_atomic(out_dir / "predicted_vs_actual.csv", io::predicted_vs_actual_csv(report, feeder));
      io::write_file_atomic(out_dir / "hc_per_node.csv", io::hc_per_node_csv(report, feeder));
    }
  }

  bool infeasible = false;
  bool failed = false;
  for (const auto* d : {report.up ? &*report.up : nullptr, report.down ? &*report.down : nullptr}) {
    if (!d) continue;
    infeasible = infeasible || d->status == "infeasible";
    failed = failed || d->status == "solver_error";
  }
  if (!a.quiet) {
    print_metrics_header();
    if (report.up) print_row(method.name(), "up", *report.up);
    if (report.down) print_row(method.name(), "down", *report.down);
    std::printf("HC_lower %.4f MW  HC_upper %.4f MW  (%.2f s)\n", report.hc_lower_mw(), report.hc_upper_mw(),
                report.runtime_seconds);
  }
  if (failed) {
    std::fprintf(stderr, "error: solver failed\n");
    return kExitError;
  }
  return infeasible ? kExitInfeasible : kExitOk;
}

int cmd_validate(const CommonArgs& common, const ValidateArgs& a) {
  const Feeder feeder = load(common);
  HcSettings settings;
  settings.limits = limits_of(common);
  settings.violation_tolerance = a.tolerance;
  const io::InjectionSet inj = io::read_injections(a.injections, feeder, a.direction);
  const Validation v = validate_injections(feeder, inj.p_mw, inj.q_mvar, settings);
  if (!v.flow.converged) throw NonConvergence("three-phase load flow did not converge");
  const ViolationMetrics& m = v.metrics;
  std::printf("N_v %d\nM_v %.6e\nS_v %.6e\nW_M %.6f\nVUF %.6f\n", m.N_v, m.M_v, m.S_v, m.W_M, m.VUF);
  return m.N_v == 0 ? kExitOk : kExitViolation;
}

int cmd_generate(const GenerateArgs& a) {
  SyntheticOptions opt;
  opt.transposed = a.transposed;
  opt.mutual_ratio = a.mutual_ratio;
  const Feeder feeder = generate_synthetic_feeder(a.buses, a.seed, a.unbalance, opt);
  const std::string text = serialize_feeder(feeder);
  // Self-check: the file parses back and its base case converges.
  const Feeder back = parse_feeder(text);
  if (!solve_three_phase(back).converged) throw NonConvergence("base case of the generated feeder did not converge");
  io::write_file_atomic(a.out, text);
  std::printf("wrote %s (%zu buses)\n", a.out.c_str(), back.size());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hosting capacity of unbalanced radial feeders"};
  app.require_subcommand(1);

  CommonArgs common;
  ComputeArgs compute;
  ValidateArgs validate;
  GenerateArgs generate;

  auto* c = app.add_subcommand("compute", "compute hosting capacity");
  add_common(c, common);
  c->add_option("--method", compute.method, "method")
      ->check(CLI::IsMember({"1i", "1ii", "2ia", "2ib", "2ic", "2ii", "modz", "iterative", "random"}));
  c->add_option("--epsilon", compute.epsilon, "Mod-Z selection threshold, pu (or inf)");
  c->add_flag("--calibrate", compute.calibrate, "Mod-Z: double epsilon until validation is violation free");
  c->add_option("--modz-passes", compute.modz_passes, "Mod-Z selection passes");
  c->add_option("--alpha", compute.alpha, "iterative bound update factor");
  c->add_option("--max-iter", compute.max_iter, "iterative iteration limit");
  c->add_option("--bound-update", compute.bound_update, "iterative bound update")
      ->check(CLI::IsMember({"literal", "magnitude"}));
  c->add_option("--lmax-factor", compute.lmax_factor, "cap each branch at this multiple of its base-case squared current");
  c->add_option("--smax-kva", compute.smax_kva, "per-phase DER apparent power cap at every bus, kVA");
  c->add_option("--weights", compute.weights, "uniform, leaf2x or a CSV of bus,weight");
  c->add_option("--direction", compute.direction, "up, down or both")->check(CLI::IsMember({"up", "down", "both"}));
  c->add_option("--seed", compute.seed, "random search seed");
  c->add_option("--samples", compute.samples, "random search samples");
  c->add_option("--out", compute.out, "output directory");
  c->add_option("--format", compute.formats, "json and/or csv")
      ->delimiter(',')
      ->check(CLI::IsMember({"json", "csv"}));
  c->add_flag("--quiet", compute.quiet, "no summary table");

  auto* v = app.add_subcommand("validate", "three-phase check of an injection file");
  add_common(v, common);
  v->add_option("--injections", validate.injections, "CSV (bus,phase,p_mw[,q_mvar]) or JSON report")->required();
  v->add_option("--direction", validate.direction, "report direction to read")->check(CLI::IsMember({"up", "down"}));
  v->add_option("--tolerance", validate.tolerance, "excursion ignored by the metrics, pu");

  auto* g = app.add_subcommand("generate", "write a synthetic feeder");
  g->add_option("--buses", generate.buses, "number of buses")->required();
  g->add_option("--seed", generate.seed, "random seed");
  g->add_option("--unbalance", generate.unbalance, "load unbalance in [0, 0.5]");
  g->add_flag("--transposed", generate.transposed, "equal self and mutual impedances");
  g->add_option("--mutual-ratio", generate.mutual_ratio, "|z_mutual| / |z_self|");
  g->add_option("--out", generate.out, "output feeder JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*c) return cmd_compute(common, compute);
    if (*v) return cmd_validate(common, validate);
    return cmd_generate(generate);
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "SchemaError: %s\n", e.what());
    return kExitError;
  } catch (const TopologyError& e) {
    std::fprintf(stderr, "TopologyError: %s\n", e.what());
    return kExitError;
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "ArgumentError: %s\n", e.what());
    return kExitError;
  } catch (const NonConvergence& e) {
    std::fprintf(stderr, "NonConvergence: %s\n", e.what());
    return kExitError;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
}
