#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "hcap/feeder.hpp"
#include "hcap/methods.hpp"

namespace hcap::io {

/// Deterministic JSON report. Runtime and other volatile data go to
/// report_meta_json so identical runs give byte-identical reports.
std::string report_json(const HcReport& report, const Feeder& feeder, const std::string& source);
std::string report_meta_json(const HcReport& report);

/// bus,phase,direction,p_mw,q_mvar for every present phase.
std::string injections_csv(const HcReport& report, const Feeder& feeder);

// Plot data.
/// direction,bus,phase,depth,distance_ohm,v_3ph,v_pred
std::string voltage_profile_csv(const HcReport& report, const Feeder& feeder);
/// direction,bus,phase,v_pred,v_3ph,error
std::string predicted_vs_actual_csv(const HcReport& report, const Feeder& feeder);
/// direction,bus,p_a_mw,p_b_mw,p_c_mw,p_total_mw
std::string hc_per_node_csv(const HcReport& report, const Feeder& feeder);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

struct InjectionSet {
  std::vector<std::array<double, 3>> p_mw;  // per bus and phase
  std::vector<std::array<double, 3>> q_mvar;
};

/// Reads injections from either a CSV (bus,phase,p_mw[,q_mvar]; a direction
/// column, if present, must match `direction`) or a JSON report written by
/// report_json (the `direction` entry is used). `direction` is "up" or "down".
InjectionSet read_injections(const std::filesystem::path& path, const Feeder& feeder, const std::string& direction);

/// Per-bus weights from a CSV of bus,weight rows. Unlisted buses get 1.
std::vector<double> read_weights(const std::filesystem::path& path, const Feeder& feeder);

}  // namespace hcap::io
