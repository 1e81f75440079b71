#include "failanchor/config.hpp"

#include <fstream>
#include <set>
#include <string_view>

#include "failanchor/error.hpp"

namespace failanchor {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::invalid_config, msg); }

// Reads known keys out of one section and rejects anything else, so typos in
// a config file surface instead of silently falling back to defaults.
class SectionReader {
 public:
  SectionReader(const json& doc, std::string name) : name_(std::move(name)) {
    if (!doc.contains(name_)) return;
    section_ = &doc.at(name_);
    if (!section_->is_object()) bad("section '" + name_ + "' must be an object");
  }

  template <typename T>
  void read(std::string_view key, T& out) {
    seen_.insert(std::string(key));
    if (section_ == nullptr || !section_->contains(key)) return;
    const json& v = section_->at(std::string(key));
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected boolean");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected number");
        if constexpr (std::is_integral_v<T>) {
          if (!v.is_number_integer()) throw std::invalid_argument("expected integer");
          if constexpr (std::is_unsigned_v<T>) {
            if (v.get<long long>() < 0) throw std::invalid_argument("expected non-negative");
          }
        }
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      bad(name_ + "." + std::string(key) + ": " + e.what());
    }
  }

  void finish() const {
    if (section_ == nullptr) return;
    for (const auto& [k, _] : section_->items()) {
      if (!seen_.count(k)) bad("unknown key " + name_ + "." + k);
    }
  }

 private:
  std::string name_;
  const json* section_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

void validate_config(const Config& cfg) {
  if (cfg.wire.payload_cap_bytes < 64) bad("wire.payload_cap_bytes must be >= 64");
  if (cfg.metrics.window_len < 2) bad("metrics.window_len must be >= 2");
  if (cfg.metrics.stride < 1) bad("metrics.stride must be >= 1");
  if (!(cfg.metrics.context_limit_tokens > 0)) bad("metrics.context_limit_tokens must be > 0");
  const auto& l = cfg.localize;
  if (!(l.z_thresh > 0)) bad("localize.z_thresh must be > 0");
  if (!(l.upper_quantile > 0.5 && l.upper_quantile <= 1.0)) bad("localize.upper_quantile out of (0.5, 1]");
  if (!(l.lower_quantile >= 0.0 && l.lower_quantile < 0.5)) bad("localize.lower_quantile out of [0, 0.5)");
  if (l.min_series_len < 4) bad("localize.min_series_len must be >= 4");
  if (l.forest_trees < 1) bad("localize.forest_trees must be >= 1");
  if (l.forest_subsample < 2) bad("localize.forest_subsample must be >= 2");
  if (l.repeat_min < 2) bad("localize.repeat_min must be >= 2");
  if (!(l.surprise_quantile > 0.0 && l.surprise_quantile <= 1.0)) bad("localize.surprise_quantile out of (0, 1]");
  if (l.surprise_floor_bits < 0) bad("localize.surprise_floor_bits must be >= 0");
  const auto& d = cfg.diagnose;
  if (d.top_k < 1) bad("diagnose.top_k must be >= 1");
  if (d.summary_max_chars < 16) bad("diagnose.summary_max_chars must be >= 16");
  if (!(d.fallback_confidence >= 0.0 && d.fallback_confidence <= 1.0)) bad("diagnose.fallback_confidence out of [0, 1]");
  if (d.backend_timeout_s < 1) bad("diagnose.backend_timeout_s must be >= 1");
  if (cfg.gate.budget_tokens < 100) bad("gate.budget_tokens must be >= 100");
  for (const auto& c : cfg.gate.scope_deny_list) {
    static const std::set<std::string> known = {"timeout", "connection", "out_of_memory",
                                                "container", "platform"};
    if (!known.count(c)) bad("gate.scope_deny_list: unknown infrastructure class '" + c + "'");
  }
}

Config config_from_json(const json& doc) {
  if (!doc.is_object()) bad("config document must be an object");
  static const std::set<std::string> sections = {"wire", "metrics", "localize", "diagnose", "gate"};
  for (const auto& [k, _] : doc.items()) {
    if (!sections.count(k)) bad("unknown section '" + k + "'");
  }

  Config cfg;
  {
    SectionReader r(doc, "wire");
    r.read("payload_cap_bytes", cfg.wire.payload_cap_bytes);
    r.read("skip_malformed", cfg.wire.skip_malformed);
    r.read("strict_order", cfg.wire.strict_order);
    r.read("edit_tools", cfg.wire.edit_tools);
    r.finish();
  }
  {
    SectionReader r(doc, "metrics");
    r.read("window_len", cfg.metrics.window_len);
    r.read("stride", cfg.metrics.stride);
    r.read("context_limit_tokens", cfg.metrics.context_limit_tokens);
    r.finish();
  }
  {
    SectionReader r(doc, "localize");
    auto& l = cfg.localize;
    r.read("z_thresh", l.z_thresh);
    r.read("upper_quantile", l.upper_quantile);
    r.read("lower_quantile", l.lower_quantile);
    r.read("min_series_len", l.min_series_len);
    r.read("forest_trees", l.forest_trees);
    r.read("forest_subsample", l.forest_subsample);
    r.read("forest_seed", l.forest_seed);
    r.read("repeat_min", l.repeat_min);
    r.read("surprise_quantile", l.surprise_quantile);
    r.read("surprise_floor_bits", l.surprise_floor_bits);
    r.read("claim_phrases", l.claim_phrases);
    r.finish();
  }
  {
    SectionReader r(doc, "diagnose");
    auto& d = cfg.diagnose;
    r.read("top_k", d.top_k);
    r.read("max_factors", d.max_factors);
    r.read("summary_max_chars", d.summary_max_chars);
    r.read("fallback_confidence", d.fallback_confidence);
    r.read("backend_command", d.backend_command);
    r.read("backend_timeout_s", d.backend_timeout_s);
    r.finish();
  }
  {
    SectionReader r(doc, "gate");
    r.read("budget_tokens", cfg.gate.budget_tokens);
    r.read("max_citations", cfg.gate.max_citations);
    r.read("scope_deny_list", cfg.gate.scope_deny_list);
    r.finish();
  }
  validate_config(cfg);
  return cfg;
}

json config_to_json(const Config& cfg) {
  const auto& l = cfg.localize;
  const auto& d = cfg.diagnose;
  return json{
      {"wire",
       {{"payload_cap_bytes", cfg.wire.payload_cap_bytes},
        {"skip_malformed", cfg.wire.skip_malformed},
        {"strict_order", cfg.wire.strict_order},
        {"edit_tools", cfg.wire.edit_tools}}},
      {"metrics",
       {{"window_len", cfg.metrics.window_len},
        {"stride", cfg.metrics.stride},
        {"context_limit_tokens", cfg.metrics.context_limit_tokens}}},
      {"localize",
       {{"z_thresh", l.z_thresh},
        {"upper_quantile", l.upper_quantile},
        {"lower_quantile", l.lower_quantile},
        {"min_series_len", l.min_series_len},
        {"forest_trees", l.forest_trees},
        {"forest_subsample", l.forest_subsample},
        {"forest_seed", l.forest_seed},
        {"repeat_min", l.repeat_min},
        {"surprise_quantile", l.surprise_quantile},
        {"surprise_floor_bits", l.surprise_floor_bits},
        {"claim_phrases", l.claim_phrases}}},
      {"diagnose",
       {{"top_k", d.top_k},
        {"max_factors", d.max_factors},
        {"summary_max_chars", d.summary_max_chars},
        {"fallback_confidence", d.fallback_confidence},
        {"backend_command", d.backend_command},
        {"backend_timeout_s", d.backend_timeout_s}}},
      {"gate",
       {{"budget_tokens", cfg.gate.budget_tokens},
        {"max_citations", cfg.gate.max_citations},
        {"scope_deny_list", cfg.gate.scope_deny_list}}},
  };
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    bad("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace failanchor
