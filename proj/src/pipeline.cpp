#include "failanchor/pipeline.hpp"

#include <memory>

#include "failanchor/metrics.hpp"

namespace failanchor {

namespace {

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

PipelineResult run_pipeline(std::vector<Span> spans, const Config& cfg, DiagnosisBackend* backend) {
  PipelineResult r;
  r.trace_issues = check_trace(spans);
  r.bundle = stage("wire", [&] { return build_bundle(std::move(spans), cfg.wire.strict_order, cfg.wire); });
  r.bundle.metrics = stage("metrics", [&] { return compute_windows(r.bundle, cfg.metrics); });
  r.findings = stage("localize", [&] { return localize(r.bundle, cfg.localize); });
  r.records = stage("fuse", [&] {
    std::vector<EvidenceUnit> units;
    units.reserve(r.findings.size());
    for (const auto& f : r.findings) units.push_back(normalize_finding(f));
    return fuse(units);
  });

  std::unique_ptr<DiagnosisBackend> owned;
  if (backend == nullptr && !cfg.diagnose.backend_command.empty()) {
    owned = std::make_unique<CommandBackend>(cfg.diagnose.backend_command, cfg.diagnose.backend_timeout_s);
    backend = owned.get();
  }
  r.diagnosis = stage("diagnose", [&] { return diagnose_run(r.records, r.bundle, cfg.diagnose, backend); });
  r.gate = stage("gate", [&] { return run_gate(r.diagnosis.diagnosis, r.records, cfg.gate); });
  return r;
}

}  // namespace failanchor
