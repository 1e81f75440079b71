#pragma once

#include <optional>
#include <string>
#include <vector>

#include "failanchor/config.hpp"
#include "failanchor/diagnose.hpp"
#include "failanchor/fuse.hpp"
#include "failanchor/gate.hpp"
#include "failanchor/localize.hpp"
#include "failanchor/wire.hpp"

namespace failanchor {

inline constexpr std::string_view kPipelineVersion = "0.3.0";

// Error raised by a pipeline stage, tagged with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct PipelineResult {
  TelemetryBundle bundle;
  std::vector<LocalizedFinding> findings;
  std::vector<FusedEvidenceRecord> records;
  DiagnosisOutcome diagnosis;
  GateResult gate;
  std::vector<std::string> trace_issues;
};

// telemetry -> evidence -> diagnosis -> guidance. The backend may be null, in
// which case the deterministic summarizer is used.
PipelineResult run_pipeline(std::vector<Span> spans, const Config& cfg,
                            DiagnosisBackend* backend = nullptr);

}  // namespace failanchor
