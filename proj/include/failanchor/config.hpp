#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace failanchor {

struct WireConfig {
  std::size_t payload_cap_bytes = 16 * 1024;
  // Abort on the first malformed line unless this is set.
  bool skip_malformed = false;
  // Reject out-of-order spans instead of sorting them.
  bool strict_order = false;
  std::vector<std::string> edit_tools = {"file_write", "write_file",  "edit_file",
                                         "str_replace_editor", "apply_patch", "patch_apply",
                                         "config_apply",       "kubectl_apply"};
};

struct MetricsConfig {
  int window_len = 8;
  int stride = 4;
  double context_limit_tokens = 200000.0;
};

struct LocalizeConfig {
  double z_thresh = 3.5;
  double upper_quantile = 0.95;
  double lower_quantile = 0.05;
  std::size_t min_series_len = 4;
  int forest_trees = 100;
  std::size_t forest_subsample = 256;
  std::uint64_t forest_seed = 0;
  std::size_t repeat_min = 3;
  double surprise_quantile = 0.95;
  double surprise_floor_bits = 1.0;
  std::vector<std::string> claim_phrases = {"completed successfully", "task is resolved",
                                            "fix verified"};
};

struct DiagnoseConfig {
  std::size_t top_k = 12;
  std::size_t max_factors = 5;
  std::size_t summary_max_chars = 1000;
  double fallback_confidence = 0.3;
  // Empty means the deterministic summarizer is the backend.
  std::string backend_command;
  int backend_timeout_s = 300;
};

struct GateConfig {
  int budget_tokens = 1200;
  std::size_t max_citations = 3;
  std::vector<std::string> scope_deny_list = {"platform", "connection", "out_of_memory",
                                              "container"};
};

struct Config {
  WireConfig wire;
  MetricsConfig metrics;
  LocalizeConfig localize;
  DiagnoseConfig diagnose;
  GateConfig gate;
};

// Throws Error(invalid_config) for unknown keys, wrong types, or values
// outside their documented ranges.
Config config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const Config& cfg);
Config load_config(const std::string& path);
void validate_config(const Config& cfg);

}  // namespace failanchor
