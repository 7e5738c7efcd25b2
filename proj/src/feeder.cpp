#include "hcap/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "hcap/errors.hpp"

namespace hcap {

namespace {

constexpr double kSymmetryTol = 1e-9;

std::string bus_label(int id) { return "bus " + std::to_string(id); }

}  // namespace

char to_char(Phase p) { return "abc"[idx(p)]; }

Phase phase_from_char(char c) {
  switch (c) {
    case 'a': return Phase::a;
    case 'b': return Phase::b;
    case 'c': return Phase::c;
    default: throw ArgumentError(std::string("unknown phase '") + c + "'");
  }
}

// ---------------------------------------------------------------------------
// RadialTree

RadialTree RadialTree::build(std::size_t n_nodes, std::size_t root,
                             std::span<const std::pair<std::size_t, std::size_t>> edges) {
  if (n_nodes == 0) throw TopologyError("feeder has no buses");
  if (root >= n_nodes) throw TopologyError("slack bus index out of range");
  if (edges.size() + 1 != n_nodes) {
    throw TopologyError("a radial feeder with " + std::to_string(n_nodes) + " buses needs " +
                        std::to_string(n_nodes - 1) + " branches, got " +
                        std::to_string(edges.size()));
  }

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n_nodes);  // (nbr, edge)
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto [u, v] = edges[k];
    if (u >= n_nodes || v >= n_nodes) throw TopologyError("branch endpoint out of range");
    if (u == v) throw TopologyError("branch connects a bus to itself");
    adj[u].emplace_back(v, k);
    adj[v].emplace_back(u, k);
  }

  RadialTree t;
  t.root = root;
  t.from_node.assign(edges.size(), 0);
  t.to_node.assign(edges.size(), 0);
  t.parent.assign(n_nodes, -1);
  t.parent_branch.assign(n_nodes, -1);
  t.child_branches.assign(n_nodes, {});
  t.depth.assign(n_nodes, 0);
  t.order.reserve(n_nodes);

  std::vector<bool> seen(n_nodes, false);
  std::vector<bool> edge_used(edges.size(), false);
  std::queue<std::size_t> q;
  q.push(root);
  seen[root] = true;
  while (!q.empty()) {
    std::size_t u = q.front();
    q.pop();
    t.order.push_back(u);
    for (auto [v, k] : adj[u]) {
      if (edge_used[k]) continue;
      edge_used[k] = true;
      if (seen[v]) throw TopologyError("branch set contains a cycle");
      seen[v] = true;
      t.from_node[k] = u;
      t.to_node[k] = v;
      t.parent[v] = static_cast<std::ptrdiff_t>(u);
      t.parent_branch[v] = static_cast<std::ptrdiff_t>(k);
      t.depth[v] = t.depth[u] + 1;
      t.child_branches[u].push_back(k);
      q.push(v);
    }
  }
  if (t.order.size() != n_nodes) throw TopologyError("branch set is not connected");
  return t;
}

std::vector<std::size_t> RadialTree::path_branches(std::size_t node) const {
  std::vector<std::size_t> path;
  for (std::ptrdiff_t n = static_cast<std::ptrdiff_t>(node); parent_branch[n] >= 0;
       n = parent[n]) {
    path.push_back(static_cast<std::size_t>(parent_branch[n]));
  }
  std::reverse(path.begin(), path.end());
  return path;
}

bool RadialTree::node_below(std::size_t e, std::size_t n) const {
  const std::size_t head = to_node[e];
  for (std::ptrdiff_t m = static_cast<std::ptrdiff_t>(n); m >= 0; m = parent[m]) {
    if (static_cast<std::size_t>(m) == head) return true;
  }
  return false;
}

bool RadialTree::branch_at_or_below(std::size_t e, std::size_t f) const {
  return node_below(e, to_node[f]);
}

// ---------------------------------------------------------------------------
// Feeder

PhaseSet Branch::phases() const {
  PhaseSet s;
  for (Phase p : kAllPhases) {
    if (z(idx(p), idx(p)) != Complex(0.0, 0.0)) s.insert(p);
  }
  return s;
}

Feeder::Feeder(std::vector<Bus> buses, std::vector<Branch> branches, int slack_bus,
               double slack_voltage, double s_base_mva, double v_base_kv)
    : buses_(std::move(buses)),
      slack_bus_(slack_bus),
      slack_voltage_(slack_voltage),
      s_base_mva_(s_base_mva),
      v_base_kv_(v_base_kv) {
  if (!(s_base_mva_ > 0.0) || !(v_base_kv_ > 0.0)) {
    throw UnitError("power and voltage bases must be positive");
  }
  if (!(slack_voltage_ > 0.0)) throw UnitError("slack voltage must be positive");

  std::unordered_map<int, std::size_t> index;
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (buses_[i].id < 0) throw SchemaError(bus_label(buses_[i].id) + ": id must be >= 0");
    if (!index.emplace(buses_[i].id, i).second) {
      throw SchemaError("duplicate " + bus_label(buses_[i].id));
    }
  }
  auto slack_it = index.find(slack_bus);
  if (slack_it == index.end()) throw TopologyError("slack bus " + std::to_string(slack_bus) + " not found");

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(branches.size());
  for (const Branch& br : branches) {
    auto f = index.find(br.from);
    auto t = index.find(br.to);
    if (f == index.end() || t == index.end()) {
      throw TopologyError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                          " references an unknown bus");
    }
    edges.emplace_back(f->second, t->second);
  }
  tree_ = RadialTree::build(buses_.size(), slack_it->second, edges);

  branches_.resize(branches.size());
  for (std::size_t k = 0; k < branches.size(); ++k) {
    Branch br = branches[k];
    br.from = buses_[tree_.from_node[k]].id;
    br.to = buses_[tree_.to_node[k]].id;
    const std::string label = "branch " + std::to_string(br.from) + "-" + std::to_string(br.to);
    for (int r = 0; r < 3; ++r) {
      if (br.z(r, r).real() < 0.0) throw SchemaError(label + ": negative self resistance");
      for (int c = r + 1; c < 3; ++c) {
        if (std::abs(br.z(r, c) - br.z(c, r)) > kSymmetryTol) {
          throw SchemaError(label + ": impedance matrix is not symmetric");
        }
      }
    }
    const PhaseSet ph = br.phases();
    if (ph.empty()) throw SchemaError(label + ": no phase has a nonzero self impedance");
    for (Phase p : kAllPhases) {
      if (ph.contains(p)) continue;
      for (int c = 0; c < 3; ++c) {
        if (br.z(idx(p), c) != Complex(0.0, 0.0) || br.z(c, idx(p)) != Complex(0.0, 0.0)) {
          throw SchemaError(label + ": nonzero row/column for absent phase " + to_char(p));
        }
      }
    }
    branches_[k] = br;
  }

  // Phases present at a bus follow its incoming branch; the slack carries all three.
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    Bus& b = buses_[i];
    const PhaseSet present = tree_.parent_branch[i] < 0
                                 ? PhaseSet::all()
                                 : branches_[static_cast<std::size_t>(tree_.parent_branch[i])].phases();
    for (Phase p : kAllPhases) {
      if (!present.contains(p) && b.load[idx(p)] != Complex(0.0, 0.0)) {
        throw SchemaError(bus_label(b.id) + ": load on absent phase " + to_char(p));
      }
    }
    b.phases = present;
    if (b.s_max && !(*b.s_max > 0.0)) {
      throw SchemaError(bus_label(b.id) + ": apparent power limit must be positive");
    }
  }
}

std::size_t Feeder::index_of(int bus_id) const {
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (buses_[i].id == bus_id) return i;
  }
  throw ArgumentError("unknown " + bus_label(bus_id));
}

Complex Feeder::total_load_mva() const {
  Complex total{};
  for (const Bus& b : buses_) {
    for (const Complex& s : b.load) total += s;
  }
  return total * phase_power_base_mva();
}

// ---------------------------------------------------------------------------
// JSON I/O

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where + ": missing field '" + key + "'");
  return *it;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw SchemaError(where + ": expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) throw SchemaError(where + ": expected a finite number");
  return d;
}

int integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw SchemaError(where + ": expected an integer");
  return v.get<int>();
}

Complex pair_value(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2) throw SchemaError(where + ": expected a [real, imag] pair");
  return {number(v[0], where + "/0"), number(v[1], where + "/1")};
}

}  // namespace

Feeder parse_feeder(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("/: expected an object");

  const double s_base = number(require(doc, "s_base_mva", "/"), "/s_base_mva");
  const double v_base = number(require(doc, "v_base_kv", "/"), "/v_base_kv");
  if (!(s_base > 0.0) || !(v_base > 0.0)) throw UnitError("s_base_mva and v_base_kv must be positive");
  const int slack = integer(require(doc, "slack_bus", "/"), "/slack_bus");
  const double v0 = number(require(doc, "slack_voltage_pu", "/"), "/slack_voltage_pu");

  const double s_phase = s_base / 3.0;
  const double z_base = v_base * v_base / s_base;

  const json& jbuses = require(doc, "buses", "/");
  if (!jbuses.is_array()) throw SchemaError("/buses: expected an array");
  std::vector<Bus> buses;
  buses.reserve(jbuses.size());
  for (std::size_t i = 0; i < jbuses.size(); ++i) {
    const std::string where = "/buses/" + std::to_string(i);
    const json& jb = jbuses[i];
    Bus b;
    b.id = integer(require(jb, "id", where), where + "/id");
    if (auto it = jb.find("loads"); it != jb.end()) {
      if (!it->is_object()) throw SchemaError(where + "/loads: expected an object");
      for (auto& [key, val] : it->items()) {
        if (key.size() != 1 || key.find_first_not_of("abc") != std::string::npos) {
          throw SchemaError(where + "/loads/" + key + ": unknown phase");
        }
        const Complex kw = pair_value(val, where + "/loads/" + key);
        b.load[idx(phase_from_char(key[0]))] = kw / 1000.0 / s_phase;
      }
    }
    if (auto it = jb.find("s_max_kva"); it != jb.end()) {
      b.s_max = number(*it, where + "/s_max_kva") / 1000.0 / s_phase;
    }
    buses.push_back(b);
  }

  const json& jbranches = require(doc, "branches", "/");
  if (!jbranches.is_array()) throw SchemaError("/branches: expected an array");
  std::vector<Branch> branches;
  branches.reserve(jbranches.size());
  for (std::size_t k = 0; k < jbranches.size(); ++k) {
    const std::string where = "/branches/" + std::to_string(k);
    const json& jr = jbranches[k];
    Branch br;
    br.from = integer(require(jr, "from", where), where + "/from");
    br.to = integer(require(jr, "to", where), where + "/to");
    const json& jz = require(jr, "z_ohm", where);
    if (!jz.is_array() || jz.size() != 3) throw SchemaError(where + "/z_ohm: expected a 3x3 array");
    for (int r = 0; r < 3; ++r) {
      const json& row = jz[r];
      if (!row.is_array() || row.size() != 3) {
        throw SchemaError(where + "/z_ohm/" + std::to_string(r) + ": expected 3 entries");
      }
      for (int c = 0; c < 3; ++c) {
        br.z(r, c) = pair_value(row[c], where + "/z_ohm/" + std::to_string(r) + "/" +
                                            std::to_string(c)) /
                     z_base;
      }
    }
    branches.push_back(br);
  }

  return Feeder(std::move(buses), std::move(branches), slack, v0, s_base, v_base);
}

Feeder load_feeder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open feeder file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_feeder(ss.str());
}

std::string serialize_feeder(const Feeder& feeder) {
  json doc;
  doc["s_base_mva"] = feeder.s_base_mva();
  doc["v_base_kv"] = feeder.v_base_kv();
  doc["slack_bus"] = feeder.slack_bus();
  doc["slack_voltage_pu"] = feeder.slack_voltage();
  const double s_phase_kva = feeder.phase_power_base_mva() * 1000.0;
  json buses = json::array();
  for (const Bus& b : feeder.buses()) {
    json jb;
    jb["id"] = b.id;
    json loads = json::object();
    for (Phase p : kAllPhases) {
      const Complex s = b.load[idx(p)];
      if (b.phases.contains(p) && s != Complex(0.0, 0.0)) {
        loads[std::string(1, to_char(p))] = {s.real() * s_phase_kva, s.imag() * s_phase_kva};
      }
    }
    if (!loads.empty()) jb["loads"] = loads;
    if (b.s_max) jb["s_max_kva"] = *b.s_max * s_phase_kva;
    buses.push_back(jb);
  }
  doc["buses"] = buses;
  json branches = json::array();
  const double z_base = feeder.z_base_ohm();
  for (const Branch& br : feeder.branches()) {
    json jz = json::array();
    for (int r = 0; r < 3; ++r) {
      json row = json::array();
      for (int c = 0; c < 3; ++c) {
        row.push_back({br.z(r, c).real() * z_base, br.z(r, c).imag() * z_base});
      }
      jz.push_back(row);
    }
    branches.push_back({{"from", br.from}, {"to", br.to}, {"z_ohm", jz}});
  }
  doc["branches"] = branches;
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Single-phase views

std::string to_string(ImpedanceMode m) {
  switch (m) {
    case ImpedanceMode::diagonal: return "diagonal";
    case ImpedanceMode::theorem1: return "theorem1";
    case ImpedanceMode::theorem1_approx: return "theorem1_approx";
  }
  return "?";
}

std::string to_string(BalanceVariant v) {
  return v == BalanceVariant::worst_case ? "worst_case" : "average";
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::i: return "i";
    case Scenario::ii: return "ii";
    case Scenario::iii: return "iii";
  }
  return "?";
}

Scenario scenario_from_string(std::string_view s) {
  if (s == "i") return Scenario::i;
  if (s == "ii") return Scenario::ii;
  if (s == "iii") return Scenario::iii;
  throw ArgumentError("unknown scenario '" + std::string(s) + "'");
}

Complex mutual_impedance(const Matrix3c& z, ImpedanceMode mode) {
  switch (mode) {
    case ImpedanceMode::diagonal:
      return {0.0, 0.0};
    case ImpedanceMode::theorem1_approx:
      return (z(0, 1) + z(0, 2) + z(1, 2)) / 3.0;
    case ImpedanceMode::theorem1: {
      // Only mutuals between present phases have to agree.
      std::vector<Complex> m;
      for (int r = 0; r < 3; ++r) {
        for (int c = r + 1; c < 3; ++c) {
          if (z(r, r) != Complex(0.0, 0.0) && z(c, c) != Complex(0.0, 0.0)) m.push_back(z(r, c));
        }
      }
      if (m.empty()) return {0.0, 0.0};
      for (const Complex& v : m) {
        if (std::abs(v - m.front()) > 1e-9) {
          throw NonTransposed("mutual impedances differ by more than 1e-9 pu");
        }
      }
      return m.front();
    }
  }
  return {0.0, 0.0};
}

namespace {

SinglePhaseFeeder skeleton(const Feeder& feeder) {
  SinglePhaseFeeder sp;
  sp.tree = feeder.tree();
  const std::size_t n = feeder.size();
  sp.z.assign(feeder.branches().size(), {});
  sp.load.assign(n, {});
  sp.present.assign(n, true);
  sp.s_max.assign(n, std::nullopt);
  sp.bus_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) sp.bus_ids[i] = feeder.bus(i).id;
  sp.slack_voltage = feeder.slack_voltage();
  sp.power_base_mva = feeder.phase_power_base_mva();
  return sp;
}

Complex mean_present_diagonal(const Matrix3c& z) {
  Complex sum{};
  int count = 0;
  for (int p = 0; p < 3; ++p) {
    if (z(p, p) != Complex(0.0, 0.0)) {
      sum += z(p, p);
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : Complex{};
}

}  // namespace

SinglePhaseFeeder extract_phase(const Feeder& feeder, Phase phase, ImpedanceMode mode,
                                const BranchMask& modify) {
  if (!modify.empty() && modify.size() != feeder.branches().size()) {
    throw ArgumentError("branch mask size does not match the feeder");
  }
  SinglePhaseFeeder sp = skeleton(feeder);
  const RadialTree& tree = feeder.tree();
  const std::size_t ph = idx(phase);

  for (std::size_t i = 0; i < feeder.size(); ++i) {
    const Bus& b = feeder.bus(i);
    sp.present[i] = b.phases.contains(phase);
    sp.load[i] = sp.present[i] ? b.load[ph] : Complex{};
    sp.s_max[i] = b.s_max;
  }

  std::size_t modified = 0;
  for (std::size_t k = 0; k < feeder.branches().size(); ++k) {
    const Matrix3c& z = feeder.branch(k).z;
    if (z(ph, ph) == Complex(0.0, 0.0)) {
      // Phase absent on this branch: it may not feed any downstream load on that phase.
      for (std::size_t i = 0; i < feeder.size(); ++i) {
        if (tree.node_below(k, i) && feeder.bus(i).load[ph] != Complex(0.0, 0.0)) {
          throw MissingPhase(std::string("phase ") + to_char(phase) + " absent on branch " +
                             std::to_string(feeder.branch(k).from) + "-" +
                             std::to_string(feeder.branch(k).to) + " that carries downstream load");
        }
      }
      sp.z[k] = mean_present_diagonal(z);
      continue;
    }
    const bool apply = mode != ImpedanceMode::diagonal && (modify.empty() || modify[k]);
    if (apply) {
      sp.z[k] = z(ph, ph) - mutual_impedance(z, mode);
      ++modified;
    } else {
      sp.z[k] = z(ph, ph);
    }
  }
  for (std::size_t k = 0; k < sp.z.size(); ++k) {
    if (std::norm(sp.z[k]) <= 0.0) throw SchemaError("single-phase branch impedance is zero");
  }
  sp.provenance = {"extract_phase", {phase}, to_string(mode), modified};
  return sp;
}

SinglePhaseFeeder balance_approximation(const Feeder& feeder, BalanceVariant variant) {
  SinglePhaseFeeder sp = skeleton(feeder);
  for (std::size_t k = 0; k < feeder.branches().size(); ++k) {
    const Matrix3c& z = feeder.branch(k).z;
    if (variant == BalanceVariant::average) {
      sp.z[k] = mean_present_diagonal(z);
    } else {
      Complex worst{};
      for (int p = 0; p < 3; ++p) {
        if (std::abs(z(p, p)) > std::abs(worst)) worst = z(p, p);
      }
      sp.z[k] = worst;
    }
  }
  for (std::size_t i = 0; i < feeder.size(); ++i) {
    const Bus& b = feeder.bus(i);
    sp.s_max[i] = b.s_max;
    if (variant == BalanceVariant::average) {
      Complex sum{};
      for (Phase p : kAllPhases) {
        if (b.phases.contains(p)) sum += b.load[idx(p)];
      }
      sp.load[i] = sum / static_cast<double>(b.phases.count());
    } else {
      std::optional<Complex> lowest;
      for (Phase p : kAllPhases) {
        if (!b.phases.contains(p)) continue;
        const Complex s = b.load[idx(p)];
        if (!lowest || s.real() < lowest->real()) lowest = s;
      }
      sp.load[i] = lowest.value_or(Complex{});
    }
  }
  sp.provenance = {"balance_approximation", {Phase::a, Phase::b, Phase::c}, to_string(variant), 0};
  return sp;
}

Feeder with_loads(const Feeder& feeder, const std::vector<std::array<Complex, 3>>& loads) {
  if (loads.size() != feeder.size()) throw ArgumentError("load vector size does not match the feeder");
  std::vector<Bus> buses(feeder.buses().begin(), feeder.buses().end());
  for (std::size_t i = 0; i < buses.size(); ++i) buses[i].load = loads[i];
  std::vector<Branch> branches(feeder.branches().begin(), feeder.branches().end());
  return Feeder(std::move(buses), std::move(branches), feeder.slack_bus(), feeder.slack_voltage(),
                feeder.s_base_mva(), feeder.v_base_kv());
}

Feeder apply_scenario(const Feeder& feeder, Scenario scenario) {
  std::vector<std::array<Complex, 3>> loads(feeder.size());
  for (std::size_t i = 0; i < feeder.size(); ++i) {
    const Bus& b = feeder.bus(i);
    auto s = b.load;
    s[idx(Phase::c)] *= 1.2;
    s[idx(Phase::b)] *= 0.8;
    auto swap_if_present = [&](Phase x, Phase y) {
      if (b.phases.contains(x) && b.phases.contains(y)) std::swap(s[idx(x)], s[idx(y)]);
    };
    if (scenario == Scenario::ii) swap_if_present(Phase::b, Phase::c);
    if (scenario == Scenario::iii) swap_if_present(Phase::a, Phase::b);
    loads[i] = s;
  }
  return with_loads(feeder, loads);
}

}  // namespace hcap
