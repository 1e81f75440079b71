#include "failanchor/fuse.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "failanchor/hash.hpp"

namespace failanchor {

namespace {

// Lower rank wins when choosing which unit names a record.
int lead_rank(FindingKind k) {
  switch (k) {
    case FindingKind::repeated_failure: return 0;
    case FindingKind::state_mismatch: return 1;
    case FindingKind::execution_error: return 2;
    case FindingKind::outcome_mismatch: return 3;
    case FindingKind::infrastructure_clue: return 4;
    case FindingKind::metric_anomaly: return 5;
    case FindingKind::intent_surprise: return 6;
    case FindingKind::aggregate_metric_anomaly: return 7;
    case FindingKind::pattern_summary: return 8;
  }
  return 9;
}

auto unit_key(const EvidenceUnit& u) {
  const auto& d = u.detail;
  return std::tie(u.anchor.key, u.anchor.category, u.anchor.tool, u.origin_kind, u.source, u.time_scope.start,
                  u.time_scope.end, u.severity, u.evidence_ref, u.score, d.signature, d.infra_class, d.check,
                  d.success_claim, d.state_key, d.expected, d.actual, d.paths, d.services, d.summary);
}

bool lead_before(const EvidenceUnit& a, const EvidenceUnit& b) {
  const int ra = lead_rank(a.origin_kind), rb = lead_rank(b.origin_kind);
  if (ra != rb) return ra < rb;
  if (a.severity != b.severity) return a.severity > b.severity;
  return std::tie(a.anchor.key, a.time_scope.start) < std::tie(b.anchor.key, b.time_scope.start);
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // The smaller root survives so the result does not depend on call order.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

bool compatible(const EvidenceUnit& a, const EvidenceUnit& b) {
  if (a.anchor.key == b.anchor.key) return true;
  if (!a.anchor.tool.empty() && a.anchor.tool == b.anchor.tool && a.time_scope.overlaps(b.time_scope)) return true;
  return !a.detail.signature.empty() && a.detail.signature == b.detail.signature;
}

}  // namespace

const EvidenceUnit& FusedEvidenceRecord::lead() const {
  return *std::min_element(support.begin(), support.end(), lead_before);
}

std::vector<std::string> FusedEvidenceRecord::evidence_refs() const {
  std::vector<std::string> out;
  for (const auto& u : support) {
    for (const auto& r : u.evidence_ref) {
      if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
    }
  }
  return out;
}

bool FusedEvidenceRecord::has_kind(FindingKind k) const {
  return std::any_of(support.begin(), support.end(), [k](const EvidenceUnit& u) { return u.origin_kind == k; });
}

EvidenceUnit normalize_finding(const LocalizedFinding& f) {
  EvidenceUnit u;
  u.anchor = make_anchor(f.anchor.key, f.anchor.category, f.anchor.tool);
  u.source = f.source_family;
  u.time_scope = f.step_range;
  u.severity = f.severity;
  u.evidence_ref = f.evidence_refs;
  u.origin_kind = f.kind;
  u.score = f.score;
  u.detail = f.detail;
  return u;
}

std::string record_id_for(const Anchor& anchor, std::vector<std::string> refs) {
  std::sort(refs.begin(), refs.end());
  refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
  std::uint64_t h = fnv1a64(anchor.key);
  for (const auto& r : refs) {
    h = fnv1a64("\x1f", h);
    h = fnv1a64(r, h);
  }
  return "rec-" + to_hex(h, 12);
}

std::vector<FusedEvidenceRecord> fuse(const std::vector<EvidenceUnit>& input) {
  std::vector<EvidenceUnit> units = input;
  std::sort(units.begin(), units.end(),
            [](const EvidenceUnit& a, const EvidenceUnit& b) { return unit_key(a) < unit_key(b); });

  const std::size_t n = units.size();
  DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (compatible(units[i], units[j])) sets.unite(i, j);
    }
  }

  std::vector<FusedEvidenceRecord> records;
  std::vector<std::ptrdiff_t> slot(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);
    if (slot[root] < 0) {
      slot[root] = static_cast<std::ptrdiff_t>(records.size());
      records.emplace_back();
    }
    records[static_cast<std::size_t>(slot[root])].support.push_back(units[i]);
  }

  for (auto& r : records) {
    r.time_scope = r.support.front().time_scope;
    r.severity = Severity::low;
    for (const auto& u : r.support) {
      r.sources.insert(u.source);
      r.time_scope.start = std::min(r.time_scope.start, u.time_scope.start);
      r.time_scope.end = std::max(r.time_scope.end, u.time_scope.end);
      r.severity = std::max(r.severity, u.severity);
    }
    const EvidenceUnit& lead = r.lead();
    r.anchor = lead.anchor;
    r.anchor_kind = lead.origin_kind;
    r.record_id = record_id_for(r.anchor, r.evidence_refs());

    for (const auto& claim : r.support) {
      if (!claim.detail.success_claim) continue;
      for (const auto& other : r.support) {
        if (other.origin_kind == FindingKind::outcome_mismatch && !other.detail.success_claim) {
          r.conflicts.push_back({claim, other, std::string(kClaimVsEvaluator)});
        }
      }
    }
  }

  std::sort(records.begin(), records.end(), [](const FusedEvidenceRecord& a, const FusedEvidenceRecord& b) {
    if (a.severity != b.severity) return a.severity > b.severity;
    if (a.support.size() != b.support.size()) return a.support.size() > b.support.size();
    return std::tie(a.time_scope.start, a.anchor.key, a.record_id) <
           std::tie(b.time_scope.start, b.anchor.key, b.record_id);
  });
  return records;
}

const FusedEvidenceRecord* find_record(const std::vector<FusedEvidenceRecord>& records, std::string_view record_id) {
  for (const auto& r : records) {
    if (r.record_id == record_id) return &r;
  }
  return nullptr;
}

}  // namespace failanchor
