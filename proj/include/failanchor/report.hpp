#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "failanchor/config.hpp"
#include "failanchor/diagnose.hpp"
#include "failanchor/fuse.hpp"
#include "failanchor/gate.hpp"
#include "failanchor/localize.hpp"
#include "failanchor/pipeline.hpp"

namespace failanchor {

inline constexpr std::string_view kReportSchema = "failanchor.report/1";

struct ReportOptions {
  std::string trace_path;
  std::size_t malformed_lines = 0;
  // Omit wall-clock fields so reruns are byte-identical.
  bool deterministic = false;
};

nlohmann::json build_report(const PipelineResult& result, const Config& cfg,
                            const ReportOptions& options);

// Serialization of the pipeline types. Round-trips through from_json.
nlohmann::json to_json(const Anchor& a);
nlohmann::json to_json(const LocalizedFinding& f);
nlohmann::json to_json(const EvidenceUnit& u);
nlohmann::json to_json(const FusedEvidenceRecord& r);
nlohmann::json to_json(const RecoveryGuidance& g);
nlohmann::json to_json(const MetricWindow& w);

Anchor anchor_from_json(const nlohmann::json& j);
EvidenceUnit unit_from_json(const nlohmann::json& j);
FusedEvidenceRecord record_from_json(const nlohmann::json& j);
RecoveryGuidance guidance_from_json(const nlohmann::json& j);

struct LoadedReport {
  nlohmann::json doc;
  std::vector<FusedEvidenceRecord> records;
  RecoveryGuidance guidance;
};

// Throws Error(invalid_report).
LoadedReport load_report(const std::string& path);
LoadedReport parse_report(const nlohmann::json& doc);

// Every id mentioned in the report that does not resolve inside it.
std::vector<std::string> dangling_references(const nlohmann::json& report);

// Human-readable digest for on-call review.
std::string summarize_report(const nlohmann::json& report);

}  // namespace failanchor
