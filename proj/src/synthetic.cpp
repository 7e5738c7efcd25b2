#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hcap/errors.hpp"
#include "hcap/feeder.hpp"
#include "hcap/loadflow.hpp"

namespace hcap {

namespace {

double max_voltage_drop(const Feeder& f) {
  const LoadFlowResult3Ph lf = solve_three_phase(f);
  if (!lf.converged) return std::numeric_limits<double>::infinity();
  double drop = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (Phase p : kAllPhases) {
      drop = std::max(drop, f.slack_voltage() - lf.voltages.magnitude(i, p));
    }
  }
  return drop;
}

Feeder scaled_impedances(const Feeder& f, double factor) {
  std::vector<Bus> buses(f.buses().begin(), f.buses().end());
  std::vector<Branch> branches(f.branches().begin(), f.branches().end());
  for (Branch& br : branches) br.z *= factor;
  return Feeder(std::move(buses), std::move(branches), f.slack_bus(), f.slack_voltage(), f.s_base_mva(),
                f.v_base_kv());
}

}  // namespace

Feeder generate_synthetic_feeder(int n_buses, std::uint64_t seed, double unbalance,
                                 const SyntheticOptions& options) {
  if (n_buses < 2) throw ArgumentError("synthetic feeder needs at least 2 buses");
  if (!(unbalance >= 0.0 && unbalance <= 0.5)) throw ArgumentError("unbalance must lie in [0, 0.5]");
  if (!(options.target_drop > 0.0 && options.target_drop <= 0.05)) {
    throw ArgumentError("target voltage drop must lie in (0, 0.05]");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto jitter = [&](double amplitude) { return 1.0 + amplitude * uniform(-1.0, 1.0); };

  const auto n = static_cast<std::size_t>(n_buses);

  // A trunk of ceil(log2 n) branches guarantees the depth bound; the rest attach
  // to random existing non-slack buses.
  const auto trunk = static_cast<std::size_t>(std::max(1.0, std::ceil(std::log2(static_cast<double>(n)))));
  std::vector<std::size_t> parent(n, 0);
  for (std::size_t k = 1; k < n; ++k) {
    if (k <= trunk || k == 1) {
      parent[k] = k - 1;
    } else {
      parent[k] = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(k - 1));
      parent[k] = std::min(parent[k], k - 1);
    }
  }

  std::vector<Branch> branches;
  branches.reserve(n - 1);
  for (std::size_t k = 1; k < n; ++k) {
    const double magnitude = uniform(0.5, 1.5);
    const double r_over_x = uniform(0.5, 2.0);
    const double angle = std::atan2(1.0, r_over_x);
    const Complex z_self = std::polar(magnitude, angle);
    Branch br;
    br.from = static_cast<int>(parent[k]);
    br.to = static_cast<int>(k);
    for (int p = 0; p < 3; ++p) {
      br.z(p, p) = options.transposed ? z_self : z_self * jitter(0.25 * unbalance);
    }
    for (int r = 0; r < 3; ++r) {
      for (int c = r + 1; c < 3; ++c) {
        const Complex zm = options.transposed ? z_self * options.mutual_ratio
                                              : z_self * options.mutual_ratio * jitter(0.5 * unbalance);
        br.z(r, c) = zm;
        br.z(c, r) = zm;
      }
    }
    branches.push_back(br);
  }

  const double s_phase_mva = options.s_base_mva / 3.0;
  std::vector<Bus> buses(n);
  std::size_t loaded = 0;
  for (std::size_t k = 0; k < n; ++k) {
    buses[k].id = static_cast<int>(k);
    const bool has_load = k > 0 && (unit(rng) < options.load_bus_fraction || (k == n - 1 && loaded == 0));
    if (!has_load) continue;
    ++loaded;
    const double kw = uniform(2.0, 10.0);
    const double pf = uniform(0.9, 0.98);
    const double q_over_p = std::sqrt(1.0 / (pf * pf) - 1.0);
    for (int p = 0; p < 3; ++p) {
      const double kw_phase = options.transposed ? kw : kw * jitter(unbalance);
      buses[k].load[p] = Complex(kw_phase, kw_phase * q_over_p) / 1000.0 / s_phase_mva;
    }
  }

  Feeder feeder(buses, branches, 0, 1.0, options.s_base_mva, options.v_base_kv);

  // Voltage drop is close to linear in the impedance scale; a few fixed-point
  // passes land on the target.
  for (int pass = 0; pass < 6; ++pass) {
    const double drop = max_voltage_drop(feeder);
    if (!std::isfinite(drop)) {
      feeder = scaled_impedances(feeder, 0.1);
      continue;
    }
    if (drop <= 0.0) break;
    const double factor = options.target_drop / drop;
    if (std::abs(factor - 1.0) < 1e-3) break;
    feeder = scaled_impedances(feeder, factor);
  }
  if (max_voltage_drop(feeder) > 0.05) throw ArgumentError("could not scale synthetic feeder impedances");
  return feeder;
}

}  // namespace hcap
