#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace hcap {

using Complex = std::complex<double>;
using Matrix3c = Eigen::Matrix3cd;
using Vector3c = Eigen::Vector3cd;

enum class Phase : std::uint8_t { a = 0, b = 1, c = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::a, Phase::b, Phase::c};

constexpr std::size_t idx(Phase p) { return static_cast<std::size_t>(p); }
char to_char(Phase p);
Phase phase_from_char(char c);

/// Small bitmask over {a, b, c}. Iteration order is always a < b < c.
class PhaseSet {
 public:
  constexpr PhaseSet() = default;
  static constexpr PhaseSet all() { return PhaseSet(0b111); }

  constexpr bool contains(Phase p) const { return (bits_ >> idx(p)) & 1U; }
  constexpr void insert(Phase p) { bits_ |= static_cast<std::uint8_t>(1U << idx(p)); }
  constexpr int count() const { return ((bits_ >> 0) & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool subset_of(PhaseSet other) const { return (bits_ & ~other.bits_) == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  friend constexpr bool operator==(PhaseSet, PhaseSet) = default;

 private:
  constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

/// Rooted tree over node indices. Branch k connects from_node[k] (parent)
/// to to_node[k] (child); every non-root node has exactly one parent branch.
struct RadialTree {
  std::size_t root = 0;
  std::vector<std::size_t> from_node;
  std::vector<std::size_t> to_node;
  std::vector<std::ptrdiff_t> parent;         // -1 at the root
  std::vector<std::ptrdiff_t> parent_branch;  // -1 at the root
  std::vector<std::vector<std::size_t>> child_branches;
  std::vector<std::size_t> order;  // breadth-first from the root
  std::vector<std::size_t> depth;

  /// Orients undirected edges away from `root`. Throws TopologyError unless
  /// the edges form a spanning tree over `n_nodes` nodes.
  static RadialTree build(std::size_t n_nodes, std::size_t root,
                          std::span<const std::pair<std::size_t, std::size_t>> edges);

  std::size_t node_count() const { return parent.size(); }
  std::size_t branch_count() const { return from_node.size(); }

  /// Branches on the path root -> node, ordered from the root downwards.
  std::vector<std::size_t> path_branches(std::size_t node) const;
  /// True if branch `f` equals `e` or lies in the subtree below `e`.
  bool branch_at_or_below(std::size_t e, std::size_t f) const;
  /// True if node `n` lies in the subtree hanging from branch `e`.
  bool node_below(std::size_t e, std::size_t n) const;

  friend bool operator==(const RadialTree&, const RadialTree&) = default;
};

struct Bus {
  int id = 0;
  PhaseSet phases;
  std::array<Complex, 3> load{};  // pu on the per-phase base, consumption positive
  std::optional<double> s_max;    // pu per phase

  friend bool operator==(const Bus&, const Bus&) = default;
};

struct Branch {
  int from = 0;  // parent bus id after Feeder construction
  int to = 0;
  Matrix3c z = Matrix3c::Zero();  // pu

  PhaseSet phases() const;

  friend bool operator==(const Branch& a, const Branch& b) { return a.from == b.from && a.to == b.to && a.z == b.z; }
};

/// Immutable three-phase radial feeder, all quantities per-unit.
///
/// Bases: `v_base_kv` is line-to-line, `s_base_mva` is three-phase. A
/// per-phase quantity of 1 pu therefore carries s_base/3 MVA, and the
/// impedance base is v_base_kv^2 / s_base_mva ohm.
class Feeder {
 public:
  Feeder(std::vector<Bus> buses, std::vector<Branch> branches, int slack_bus,
         double slack_voltage, double s_base_mva, double v_base_kv);

  std::size_t size() const { return buses_.size(); }
  std::span<const Bus> buses() const { return buses_; }
  std::span<const Branch> branches() const { return branches_; }
  const Bus& bus(std::size_t i) const { return buses_[i]; }
  const Branch& branch(std::size_t k) const { return branches_[k]; }
  const RadialTree& tree() const { return tree_; }

  int slack_bus() const { return slack_bus_; }
  std::size_t slack_index() const { return tree_.root; }
  double slack_voltage() const { return slack_voltage_; }
  double s_base_mva() const { return s_base_mva_; }
  double v_base_kv() const { return v_base_kv_; }
  double z_base_ohm() const { return v_base_kv_ * v_base_kv_ / s_base_mva_; }
  /// MVA carried by 1 pu of per-phase power.
  double phase_power_base_mva() const { return s_base_mva_ / 3.0; }

  std::size_t index_of(int bus_id) const;
  /// Total complex load over all buses and phases, MW + j MVAr.
  Complex total_load_mva() const;

  friend bool operator==(const Feeder&, const Feeder&) = default;

 private:
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;  // branches_[k] is tree_ branch k
  int slack_bus_;
  double slack_voltage_;
  double s_base_mva_;
  double v_base_kv_;
  RadialTree tree_;
};

// ---------------------------------------------------------------------------
// File I/O

/// Parses the JSON feeder format (SI units with explicit bases).
Feeder parse_feeder(std::string_view text);
Feeder load_feeder(const std::string& path);
std::string serialize_feeder(const Feeder& feeder);

// ---------------------------------------------------------------------------
// Single-phase views

enum class ImpedanceMode { diagonal, theorem1, theorem1_approx };
enum class BalanceVariant { worst_case, average };
enum class Scenario { i, ii, iii };

std::string to_string(ImpedanceMode m);
std::string to_string(BalanceVariant v);
std::string to_string(Scenario s);
Scenario scenario_from_string(std::string_view s);

struct Provenance {
  std::string method;  // "extract_phase" or "balance_approximation"
  std::vector<Phase> phases;
  std::string impedance;  // impedance_mode / balance variant
  std::size_t modified_branches = 0;
};

/// One phase (or a balanced surrogate) of a feeder, per-unit scalars.
struct SinglePhaseFeeder {
  RadialTree tree;
  std::vector<Complex> z;     // per branch
  std::vector<Complex> load;  // per node, consumption positive
  std::vector<bool> present;  // per node; false when the phase is absent there
  std::vector<std::optional<double>> s_max;  // per node
  std::vector<int> bus_ids;
  double slack_voltage = 1.0;
  double power_base_mva = 1.0;  // MVA per pu
  Provenance provenance;

  std::size_t size() const { return tree.node_count(); }
};

/// Per-branch selection of the modified impedance; empty means "all".
using BranchMask = std::vector<bool>;

SinglePhaseFeeder extract_phase(const Feeder& feeder, Phase phase, ImpedanceMode mode,
                                const BranchMask& modify = {});

/// Mutual impedance used by the theorem1 / theorem1_approx modes.
Complex mutual_impedance(const Matrix3c& z, ImpedanceMode mode);

SinglePhaseFeeder balance_approximation(const Feeder& feeder, BalanceVariant variant);

Feeder apply_scenario(const Feeder& feeder, Scenario scenario);

/// Returns a copy with loads replaced.
Feeder with_loads(const Feeder& feeder, const std::vector<std::array<Complex, 3>>& loads);

// ---------------------------------------------------------------------------
// Synthetic feeders

struct SyntheticOptions {
  double mutual_ratio = 1.0 / 3.0;  // |z_mutual| / |z_self|
  bool transposed = false;          // equal self and mutual impedances on every branch
  double load_bus_fraction = 0.3;
  double target_drop = 0.03;  // max base-case voltage drop after impedance scaling
  double v_base_kv = 7.2;
  double s_base_mva = 3.0;
};

Feeder generate_synthetic_feeder(int n_buses, std::uint64_t seed, double unbalance,
                                 const SyntheticOptions& options = {});

}  // namespace hcap
