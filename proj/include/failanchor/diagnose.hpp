#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "failanchor/config.hpp"
#include "failanchor/fuse.hpp"
#include "failanchor/wire.hpp"

namespace failanchor {

struct CitedText {
  std::string text;
  std::vector<std::string> record_ids;

  friend bool operator==(const CitedText&, const CitedText&) = default;
};

struct AnchorClaim {
  Anchor anchor;
  std::vector<std::string> record_ids;

  friend bool operator==(const AnchorClaim&, const AnchorClaim&) = default;
};

struct Factor {
  std::string text;
  std::string record_id;

  friend bool operator==(const Factor&, const Factor&) = default;
};

enum class DiagnosisOrigin { backend, fallback };
std::string_view to_string(DiagnosisOrigin o) noexcept;

struct StructuredDiagnosis {
  CitedText primary_cause;
  AnchorClaim failure_anchor;
  CitedText behavioral_mistake;
  std::vector<Factor> contributing_factors;
  std::string evidence_summary;
  double confidence = 0.0;
  DiagnosisOrigin origin = DiagnosisOrigin::fallback;

  friend bool operator==(const StructuredDiagnosis&, const StructuredDiagnosis&) = default;
};

struct RunDigest {
  std::int64_t step_count = 0;
  std::size_t span_count = 0;
  std::map<std::string, int> intent_histogram;
  std::string final_outcome;  // resolved | unresolved | unknown | none
  bool submitted = false;
  bool verified_before_submission = false;
};

struct DiagnosisContext {
  std::vector<FusedEvidenceRecord> records;
  RunDigest digest;
  std::string task;
};

RunDigest digest_run(const TelemetryBundle& bundle);

DiagnosisContext build_context(const std::vector<FusedEvidenceRecord>& records,
                               const TelemetryBundle& bundle, const DiagnoseConfig& cfg);

// Cleans a backend-emitted object: clips confidence, drops citations that do
// not resolve, caps contributing factors. Throws Error(schema_violation) or
// Error(unsupported_anchor).
StructuredDiagnosis validate_diagnosis(const nlohmann::json& raw,
                                       const std::vector<FusedEvidenceRecord>& records,
                                       const DiagnoseConfig& cfg);

// Deterministic summarizer over fused records. Throws Error(no_evidence) when
// there are no records and no outcome family.
StructuredDiagnosis fallback_diagnose(const std::vector<FusedEvidenceRecord>& records,
                                      const TelemetryBundle& bundle, const DiagnoseConfig& cfg);

// Behavioral-mistake phrases produced by the fallback.
namespace mistake {
inline constexpr std::string_view claimed_success = "claimed success without verification";
inline constexpr std::string_view repeated_action = "repeated ineffective action without adaptation";
inline constexpr std::string_view premature_submission = "submitted before any passing verification";
inline constexpr std::string_view unverified_stop = "stopped without verifying outcome";
}  // namespace mistake

// A submission exists and no ok verifier_result precedes the first one.
bool premature_submission(const TelemetryBundle& bundle);

// Pluggable diagnosis source: context in, raw schema object out.
class DiagnosisBackend {
 public:
  virtual ~DiagnosisBackend() = default;
  virtual nlohmann::json diagnose(const DiagnosisContext& context) = 0;
  virtual std::string name() const = 0;
};

// Writes the context to a file, runs a shell command, reads the raw diagnosis
// back. "{context}" and "{output}" in the command are replaced by the paths.
class CommandBackend : public DiagnosisBackend {
 public:
  CommandBackend(std::string command, int timeout_s);
  nlohmann::json diagnose(const DiagnosisContext& context) override;
  std::string name() const override { return "command"; }

 private:
  std::string command_;
  int timeout_s_;
};

struct DiagnosisOutcome {
  StructuredDiagnosis diagnosis;
  // Why the backend result was rejected, when the fallback was used instead.
  std::optional<std::string> backend_error;
};

// At most one backend call; any backend failure or rejected output falls
// back to the deterministic summarizer.
DiagnosisOutcome diagnose_run(const std::vector<FusedEvidenceRecord>& records,
                              const TelemetryBundle& bundle, const DiagnoseConfig& cfg,
                              DiagnosisBackend* backend);

nlohmann::json context_to_json(const DiagnosisContext& context);
nlohmann::json diagnosis_to_json(const StructuredDiagnosis& d);

}  // namespace failanchor
