#include "hcap/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hcap/errors.hpp"

namespace hcap::io {

using nlohmann::json;

namespace {

struct Labeled {
  const char* name;
  const DirectionResult* result;
};

std::vector<Labeled> directions_of(const HcReport& r) {
  std::vector<Labeled> out;
  if (r.up) out.push_back({"up", &*r.up});
  if (r.down) out.push_back({"down", &*r.down});
  return out;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json metrics_json(const ViolationMetrics& m) {
  return {{"N_v", m.N_v}, {"M_v", m.M_v}, {"S_v", m.S_v}, {"W_M", m.W_M}, {"VUF", m.VUF}};
}

json phase_values(const std::array<double, 3>& v, PhaseSet present) {
  json out = json::array();
  for (Phase p : kAllPhases) out.push_back(present.contains(p) ? number_or_null(v[idx(p)]) : json(nullptr));
  return out;
}

json direction_json(const DirectionResult& d, const Feeder& feeder) {
  json j;
  j["status"] = d.status;
  j["message"] = d.message;
  j["feasible"] = d.feasible;
  j["hc_mw"] = d.hc_mw;
  j["hc_phase_mw"] = d.hc_phase_mw;
  j["validation_converged"] = d.validation_converged;
  j["metrics"] = metrics_json(d.metrics);
  j["iterations"] = d.iterations;
  j["modified_lines"] = d.modified_lines;
  j["modified_line_count"] = d.modified_lines.size();
  j["accepted_epsilon"] = d.accepted_epsilon ? number_or_null(*d.accepted_epsilon) : json(nullptr);
  if (d.accepted_epsilon && std::isinf(*d.accepted_epsilon)) j["accepted_epsilon"] = "inf";
  json nodes = json::array();
  for (std::size_t i = 0; i < feeder.size(); ++i) {
    const Bus& b = feeder.bus(i);
    json n;
    n["bus"] = b.id;
    if (!d.p_mw.empty()) n["p_mw"] = phase_values(d.p_mw[i], b.phases);
    if (!d.q_mvar.empty()) n["q_mvar"] = phase_values(d.q_mvar[i], b.phases);
    if (!d.v3_mag.empty()) n["v_3ph"] = phase_values(d.v3_mag[i], b.phases);
    if (!d.v_pred_mag.empty()) n["v_pred"] = phase_values(d.v_pred_mag[i], b.phases);
    if (!d.v_min_final.empty()) n["v_min_final"] = phase_values(d.v_min_final[i], b.phases);
    if (!d.v_max_final.empty()) n["v_max_final"] = phase_values(d.v_max_final[i], b.phases);
    nodes.push_back(std::move(n));
  }
  j["nodes"] = std::move(nodes);
  return j;
}

std::string fmt(double x) {
  if (!std::isfinite(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) {
    const auto a = cell.find_first_not_of(" \t\r");
    const auto b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw SchemaError(where + ": '" + s + "' is not a number");
  return v;
}

int to_bus_id(const std::string& s, const std::string& where) {
  const double v = to_double(s, where);
  if (v != std::floor(v)) throw SchemaError(where + ": bus id '" + s + "' is not an integer");
  return static_cast<int>(v);
}

/// Rows of a CSV file keyed by header name.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return static_cast<int>(c);
    }
    return -1;
  }
};

Table read_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split(line, ',');
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw SchemaError(path.string() + ": empty file");
  return t;
}

std::vector<std::array<double, 3>> zeros(std::size_t n) { return std::vector<std::array<double, 3>>(n, {0.0, 0.0, 0.0}); }

}  // namespace

std::string report_json(const HcReport& report, const Feeder& feeder, const std::string& source) {
  json j;
  j["feeder"] = {{"source", source}, {"buses", feeder.size()}, {"branches", feeder.branches().size()}};
  const MethodId& m = report.method;
  j["method"] = {{"name", m.name()},
                 {"epsilon", std::isinf(m.epsilon) ? json("inf") : json(m.epsilon)},
                 {"calibrate", m.calibrate},
                 {"modz_passes", m.modz_passes},
                 {"alpha", m.alpha},
                 {"max_iter", m.max_iter},
                 {"bound_update", to_string(m.bound_update)},
                 {"samples", m.samples},
                 {"seed", m.seed}};
  j["limits"] = {{"v_min", report.limits.v_min}, {"v_max", report.limits.v_max}};
  j["hc_upper_mw"] = report.up ? json(report.hc_upper_mw()) : json(nullptr);
  j["hc_lower_mw"] = report.down ? json(report.hc_lower_mw()) : json(nullptr);
  json dirs = json::object();
  for (const Labeled& d : directions_of(report)) dirs[d.name] = direction_json(*d.result, feeder);
  j["directions"] = std::move(dirs);
  return j.dump(2) + "\n";
}

std::string report_meta_json(const HcReport& report) {
  json j;
  j["runtime_seconds"] = report.runtime_seconds;
  return j.dump(2) + "\n";
}

std::string injections_csv(const HcReport& report, const Feeder& feeder) {
  std::string out = "bus,phase,direction,p_mw,q_mvar\n";
  for (const Labeled& d : directions_of(report)) {
    if (d.result->p_mw.empty()) continue;
    for (std::size_t i = 0; i < feeder.size(); ++i) {
      for (Phase p : kAllPhases) {
        if (!feeder.bus(i).phases.contains(p)) continue;
        const double q = d.result->q_mvar.empty() ? 0.0 : d.result->q_mvar[i][idx(p)];
        out += std::to_string(feeder.bus(i).id) + "," + to_char(p) + "," + d.name + "," +
               fmt(d.result->p_mw[i][idx(p)]) + "," + fmt(q) + "\n";
      }
    }
  }
  return out;
}

std::string voltage_profile_csv(const HcReport& report, const Feeder& feeder) {
  const RadialTree& tree = feeder.tree();
  // Series self-impedance magnitude accumulated from the slack, per phase.
  std::vector<std::array<double, 3>> distance = zeros(feeder.size());
  for (std::size_t i : tree.order) {
    if (tree.parent_branch[i] < 0) continue;
    const auto k = static_cast<std::size_t>(tree.parent_branch[i]);
    for (Phase p : kAllPhases) {
      distance[i][idx(p)] = distance[tree.from_node[k]][idx(p)] +
                            std::abs(feeder.branch(k).z(idx(p), idx(p))) * feeder.z_base_ohm();
    }
  }
  std::string out = "direction,bus,phase,depth,distance_ohm,v_3ph,v_pred\n";
  for (const Labeled& d : directions_of(report)) {
    if (d.result->v3_mag.empty()) continue;
    for (std::size_t i = 0; i < feeder.size(); ++i) {
      for (Phase p : kAllPhases) {
        if (!feeder.bus(i).phases.contains(p)) continue;
        const double pred = d.result->v_pred_mag.empty() ? NAN : d.result->v_pred_mag[i][idx(p)];
        out += std::string(d.name) + "," + std::to_string(feeder.bus(i).id) + "," + to_char(p) + "," +
               std::to_string(tree.depth[i]) + "," + fmt(distance[i][idx(p)]) + "," +
               fmt(d.result->v3_mag[i][idx(p)]) + "," + fmt(pred) + "\n";
      }
    }
  }
  return out;
}

std::string predicted_vs_actual_csv(const HcReport& report, const Feeder& feeder) {
  std::string out = "direction,bus,phase,v_pred,v_3ph,error\n";
  for (const Labeled& d : directions_of(report)) {
    if (d.result->v3_mag.empty() || d.result->v_pred_mag.empty()) continue;
    for (std::size_t i = 0; i < feeder.size(); ++i) {
      if (i == feeder.slack_index()) continue;
      for (Phase p : kAllPhases) {
        if (!feeder.bus(i).phases.contains(p)) continue;
        const double pred = d.result->v_pred_mag[i][idx(p)];
        const double actual = d.result->v3_mag[i][idx(p)];
        out += std::string(d.name) + "," + std::to_string(feeder.bus(i).id) + "," + to_char(p) + "," + fmt(pred) +
               "," + fmt(actual) + "," + fmt(actual - pred) + "\n";
      }
    }
  }
  return out;
}

std::string hc_per_node_csv(const HcReport& report, const Feeder& feeder) {
  std::string out = "direction,bus,p_a_mw,p_b_mw,p_c_mw,p_total_mw\n";
  for (const Labeled& d : directions_of(report)) {
    if (d.result->p_mw.empty()) continue;
    for (std::size_t i = 0; i < feeder.size(); ++i) {
      const auto& p = d.result->p_mw[i];
      out += std::string(d.name) + "," + std::to_string(feeder.bus(i).id) + "," + fmt(p[0]) + "," + fmt(p[1]) + "," +
             fmt(p[2]) + "," + fmt(p[0] + p[1] + p[2]) + "\n";
    }
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw ArgumentError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw ArgumentError("cannot rename onto " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

InjectionSet read_injections(const std::filesystem::path& path, const Feeder& feeder, const std::string& direction) {
  if (direction != "up" && direction != "down") throw ArgumentError("direction must be up or down");
  InjectionSet set{zeros(feeder.size()), zeros(feeder.size())};

  if (path.extension() == ".json") {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
      throw SchemaError(path.string() + ": " + e.what());
    }
    if (!j.contains("directions") || !j["directions"].contains(direction)) {
      throw SchemaError(path.string() + ": no '" + direction + "' direction in report");
    }
    const json& nodes = j["directions"][direction].value("nodes", json::array());
    for (const json& n : nodes) {
      const std::size_t i = feeder.index_of(n.at("bus").get<int>());
      for (const char* key : {"p_mw", "q_mvar"}) {
        if (!n.contains(key)) continue;
        auto& dst = std::string(key) == "p_mw" ? set.p_mw : set.q_mvar;
        for (std::size_t p = 0; p < 3; ++p) {
          const json& v = n[key].at(p);
          dst[i][p] = v.is_null() ? 0.0 : v.get<double>();
        }
      }
    }
    return set;
  }

  const Table t = read_csv(path);
  const int c_bus = t.column("bus");
  const int c_phase = t.column("phase");
  const int c_p = t.column("p_mw");
  const int c_q = t.column("q_mvar");
  const int c_dir = t.column("direction");
  if (c_bus < 0 || c_phase < 0 || c_p < 0) throw SchemaError(path.string() + ": needs bus, phase and p_mw columns");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = path.string() + ":" + std::to_string(r + 2);
    if (row.size() != t.header.size()) throw SchemaError(where + ": expected " + std::to_string(t.header.size()) + " cells");
    if (c_dir >= 0 && row[static_cast<std::size_t>(c_dir)] != direction) continue;
    const std::size_t i = feeder.index_of(to_bus_id(row[static_cast<std::size_t>(c_bus)], where));
    const std::string& ph = row[static_cast<std::size_t>(c_phase)];
    if (ph.size() != 1) throw SchemaError(where + ": bad phase '" + ph + "'");
    const Phase p = phase_from_char(ph[0]);
    if (!feeder.bus(i).phases.contains(p)) throw MissingPhase(where + ": phase " + ph + " absent at this bus");
    set.p_mw[i][idx(p)] = to_double(row[static_cast<std::size_t>(c_p)], where);
    if (c_q >= 0) set.q_mvar[i][idx(p)] = to_double(row[static_cast<std::size_t>(c_q)], where);
  }
  return set;
}

std::vector<double> read_weights(const std::filesystem::path& path, const Feeder& feeder) {
  const Table t = read_csv(path);
  const int c_bus = t.column("bus");
  const int c_w = t.column("weight");
  if (c_bus < 0 || c_w < 0) throw SchemaError(path.string() + ": needs bus and weight columns");
  std::vector<double> w(feeder.size(), 1.0);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path.string() + ":" + std::to_string(r + 2);
    const auto& row = t.rows[r];
    if (row.size() != t.header.size()) throw SchemaError(where + ": expected " + std::to_string(t.header.size()) + " cells");
    const double v = to_double(row[static_cast<std::size_t>(c_w)], where);
    if (!(v >= 0.0)) throw SchemaError(where + ": weight must be >= 0");
    w[feeder.index_of(to_bus_id(row[static_cast<std::size_t>(c_bus)], where))] = v;
  }
  return w;
}

}  // namespace hcap::io
