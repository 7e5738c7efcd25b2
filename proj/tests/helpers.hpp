#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hcap/feeder.hpp"

namespace hcap::test {

inline std::string data_path(const std::string& name) { return std::string(HCAP_DATA_DIR) + "/" + name; }

inline Feeder ieee37() { return load_feeder(data_path("ieee37.json")); }

/// Branch matrix with self impedance `self` on every phase and mutual `mutual`.
inline Matrix3c uniform_z(Complex self, Complex mutual) {
  Matrix3c z;
  z << self, mutual, mutual, mutual, self, mutual, mutual, mutual, self;
  return z;
}

/// Chain 0 - 1 - ... - (n-1), slack 0, per-unit data, every bus loaded equally.
inline Feeder chain(int n, Complex self, Complex mutual, Complex load_per_phase, double v0 = 1.0) {
  std::vector<Bus> buses(static_cast<std::size_t>(n));
  std::vector<Branch> branches;
  for (int i = 0; i < n; ++i) {
    buses[static_cast<std::size_t>(i)].id = i;
    if (i > 0) {
      buses[static_cast<std::size_t>(i)].load = {load_per_phase, load_per_phase, load_per_phase};
      branches.push_back({i - 1, i, uniform_z(self, mutual)});
    }
  }
  return Feeder(std::move(buses), std::move(branches), 0, v0, 3.0, 4.16);
}

/// Random single-phase radial feeder with n nodes rooted at node 0. Each node
/// attaches to a uniformly chosen earlier node.
inline SinglePhaseFeeder random_single_phase(std::size_t n, std::mt19937_64& rng, double load_scale = 0.02) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t k = 1; k < n; ++k) edges.emplace_back(static_cast<std::size_t>(u(rng) * static_cast<double>(k)), k);
  SinglePhaseFeeder sp;
  sp.tree = RadialTree::build(n, 0, edges);
  for (std::size_t k = 0; k < sp.tree.branch_count(); ++k) sp.z.emplace_back(0.002 + 0.01 * u(rng), 0.002 + 0.02 * u(rng));
  sp.load.assign(n, {});
  for (std::size_t i = 1; i < n; ++i) sp.load[i] = {load_scale * u(rng), 0.5 * load_scale * u(rng)};
  sp.present.assign(n, true);
  sp.s_max.assign(n, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) sp.bus_ids.push_back(static_cast<int>(i));
  sp.slack_voltage = 1.0;
  return sp;
}

}  // namespace hcap::test
