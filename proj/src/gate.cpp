#include "failanchor/gate.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "failanchor/error.hpp"
#include "failanchor/signature.hpp"

namespace failanchor {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

void add_unique(std::vector<std::string>& into, const std::string& v) {
  if (!v.empty() && std::find(into.begin(), into.end(), v) == into.end()) into.push_back(v);
}

std::vector<const FusedEvidenceRecord*> resolve(const std::vector<std::string>& ids,
                                                const std::vector<FusedEvidenceRecord>& records) {
  std::vector<const FusedEvidenceRecord*> out;
  for (const auto& id : ids) {
    const FusedEvidenceRecord* r = find_record(records, id);
    if (r != nullptr && std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
  }
  return out;
}

std::vector<std::string> all_citations(const StructuredDiagnosis& d) {
  std::vector<std::string> ids;
  for (const auto& id : d.primary_cause.record_ids) add_unique(ids, id);
  for (const auto& id : d.failure_anchor.record_ids) add_unique(ids, id);
  for (const auto& id : d.behavioral_mistake.record_ids) add_unique(ids, id);
  for (const auto& f : d.contributing_factors) add_unique(ids, f.record_id);
  return ids;
}

std::string trim_punct(std::string_view token) {
  static constexpr std::string_view kPunct = ",.;:()[]{}!?";
  std::size_t b = 0, e = token.size();
  while (b < e && kPunct.find(token[b]) != std::string_view::npos) ++b;
  while (e > b && kPunct.find(token[e - 1]) != std::string_view::npos) --e;
  return std::string(token.substr(b, e - b));
}

std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

bool kebab_name(std::string_view s) {
  if (s.size() < 3 || s.front() == '-' || s.back() == '-') return false;
  bool dash = false, letter = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '-') {
      if (s[i - 1] == '-') return false;
      dash = true;
    } else if (std::islower(static_cast<unsigned char>(c))) {
      letter = true;
    } else if (!std::isdigit(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  return dash && letter;
}

// Entity-like names in one free-text field.
void scan_text(std::string_view text, std::vector<std::string>& out) {
  std::string rest;
  rest.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if ((c == '\'' || c == '"') && (i == 0 || !is_alnum(text[i - 1]))) {
      std::size_t close = text.find(c, i + 1);
      if (close != std::string_view::npos && (close + 1 == text.size() || !is_alnum(text[close + 1]))) {
        add_unique(out, collapse_whitespace(text.substr(i + 1, close - i - 1)));
        rest += ' ';
        i = close + 1;
        continue;
      }
    }
    rest += c;
    ++i;
  }
  for (const auto& raw : split_ws(rest)) {
    const std::string tok = trim_punct(raw);
    if (tok.empty()) continue;
    if (tok.front() == '/' && tok.size() > 1) {
      add_unique(out, tok);
      continue;
    }
    const auto colon = tok.rfind(':');
    if (colon != std::string::npos && colon > 0 && colon + 1 < tok.size() &&
        std::all_of(tok.begin() + static_cast<std::ptrdiff_t>(colon) + 1, tok.end(),
                    [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)) != 0; }) &&
        std::isalpha(static_cast<unsigned char>(tok.front()))) {
      add_unique(out, tok.substr(0, colon));
      continue;
    }
    if (kebab_name(tok)) add_unique(out, tok);
  }
}

// Everything a set of records can vouch for, normalized.
std::set<std::string> supported_names(const std::vector<const FusedEvidenceRecord*>& recs) {
  std::set<std::string> names;
  auto add_text = [&names](std::string_view text) {
    const std::string key = normalize_key(text);
    if (key.empty()) return;
    names.insert(key);
    for (const auto& tok : split_ws(key)) names.insert(trim_punct(tok));
  };
  for (const auto* r : recs) {
    for (const auto& e : record_entities(*r)) add_text(e.name);
    for (const auto& u : r->support) {
      add_text(u.anchor.key);
      add_text(u.anchor.tool);
      add_text(u.detail.signature);
      add_text(u.detail.state_key);
      add_text(u.detail.check);
    }
  }
  return names;
}

const EvidenceUnit* infra_unit(const FusedEvidenceRecord& r, const std::vector<std::string>& deny) {
  for (const auto& u : r.support) {
    if (u.detail.infra_class == InfraClass::none || u.severity != Severity::high) continue;
    const std::string cls(to_string(u.detail.infra_class));
    if (std::find(deny.begin(), deny.end(), cls) != deny.end()) return &u;
  }
  return nullptr;
}

bool agent_side(const EvidenceUnit& u) {
  if (u.detail.infra_class != InfraClass::none) return false;
  return u.origin_kind == FindingKind::execution_error || u.origin_kind == FindingKind::repeated_failure ||
         u.origin_kind == FindingKind::state_mismatch || u.origin_kind == FindingKind::outcome_mismatch;
}

std::string describe_target(const std::vector<Entity>& entities) {
  auto first_of = [&](EntityKind k) -> const Entity* {
    for (const auto& e : entities) {
      if (e.kind == k) return &e;
    }
    return nullptr;
  };
  const Entity* path = first_of(EntityKind::path);
  const Entity* service = first_of(EntityKind::service);
  if (path != nullptr) {
    std::string t = "artifact '" + path->name + "'";
    if (service != nullptr) t += " (service '" + service->name + "')";
    return t;
  }
  if (service != nullptr) return "service '" + service->name + "'";
  if (const Entity* tool = first_of(EntityKind::tool)) return "tool '" + tool->name + "'";
  if (const Entity* check = first_of(EntityKind::check)) return "check '" + check->name + "'";
  return {};
}

std::string operation_for(const FusedEvidenceRecord& r) {
  const EvidenceUnit& lead = r.lead();
  const auto& d = lead.detail;
  switch (lead.origin_kind) {
    case FindingKind::state_mismatch:
      return "compare and correct '" + d.state_key + "' (expected " + d.expected + ", observed " + d.actual + ")";
    case FindingKind::outcome_mismatch:
      if (d.check.empty()) return {};
      return "make check '" + d.check + "' pass";
    case FindingKind::repeated_failure:
      return "change approach for '" + lead.anchor.key + "'";
    case FindingKind::execution_error:
      if (d.signature.empty()) return {};
      return "handle '" + d.signature + "' from tool '" + (lead.anchor.tool.empty() ? "unknown" : lead.anchor.tool) +
             "' before continuing";
    default:
      return {};
  }
}

std::size_t code_points(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

// Keeps the first `keep` code points and appends "...".
std::string ellipsize(const std::string& s, std::size_t keep) {
  std::size_t seen = 0, i = 0;
  for (; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (seen == keep) break;
      ++seen;
    }
  }
  return s.substr(0, i) + "...";
}

std::string evidence_line(const FusedEvidenceRecord& r) {
  std::string sources;
  for (auto s : r.sources) {
    if (!sources.empty()) sources += ",";
    sources += to_string(s);
  }
  return "EVIDENCE: [" + r.record_id + "] " + std::string(to_string(r.anchor_kind)) + " '" + r.anchor.key +
         "' (steps " + std::to_string(r.time_scope.start) + "-" + std::to_string(r.time_scope.end) + "; " + sources +
         ")";
}

}  // namespace

std::string_view to_string(EntityKind k) noexcept {
  switch (k) {
    case EntityKind::path: return "path";
    case EntityKind::service: return "service";
    case EntityKind::tool: return "tool";
    case EntityKind::check: return "check";
  }
  return "path";
}

std::string_view to_string(Actionability a) noexcept {
  switch (a) {
    case Actionability::actionable: return "actionable";
    case Actionability::not_actionable: return "not_actionable";
    case Actionability::out_of_scope: return "out_of_scope";
  }
  return "not_actionable";
}

std::string_view to_string(NonInjectableReason r) noexcept {
  switch (r) {
    case NonInjectableReason::ungrounded: return "ungrounded";
    case NonInjectableReason::not_actionable: return "not_actionable";
    case NonInjectableReason::out_of_scope: return "out_of_scope";
  }
  return "ungrounded";
}

std::optional<NonInjectableReason> parse_non_injectable_reason(std::string_view s) noexcept {
  if (s == "ungrounded") return NonInjectableReason::ungrounded;
  if (s == "not_actionable") return NonInjectableReason::not_actionable;
  if (s == "out_of_scope") return NonInjectableReason::out_of_scope;
  return std::nullopt;
}

std::vector<Entity> record_entities(const FusedEvidenceRecord& record) {
  std::vector<Entity> out;
  auto add = [&out](EntityKind k, const std::string& name) {
    if (name.empty()) return;
    Entity e{k, name};
    if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(std::move(e));
  };
  for (const auto& u : record.support) {
    for (const auto& p : u.detail.paths) add(EntityKind::path, p);
    for (const auto& s : u.detail.services) add(EntityKind::service, s);
    add(EntityKind::tool, u.anchor.tool);
    if (!u.detail.check.empty()) add(EntityKind::check, u.detail.check);
    else if (u.anchor.category == AnchorCategory::check) add(EntityKind::check, u.anchor.key);
  }
  std::stable_sort(out.begin(), out.end(), [](const Entity& a, const Entity& b) { return a.kind < b.kind; });
  return out;
}

std::vector<std::string> mentioned_entities(const StructuredDiagnosis& d) {
  std::vector<std::string> out;
  scan_text(d.primary_cause.text, out);
  scan_text(d.behavioral_mistake.text, out);
  for (const auto& f : d.contributing_factors) scan_text(f.text, out);
  return out;
}

GroundingVerdict grounding_check(const StructuredDiagnosis& d, const std::vector<FusedEvidenceRecord>& records) {
  GroundingVerdict v;
  const auto cause = resolve(d.primary_cause.record_ids, records);
  const auto anchor = resolve(d.failure_anchor.record_ids, records);
  v.grounded = !cause.empty() || !anchor.empty();
  if (!v.grounded) {
    v.reason = "neither the primary cause nor the failure anchor cites a fused evidence record";
  } else if (!anchor.empty()) {
    v.reason = "failure anchor traced to " + anchor.front()->record_id;
  } else {
    v.reason = "primary cause traced to " + cause.front()->record_id;
  }

  const std::set<std::string> supported = supported_names(resolve(all_citations(d), records));
  for (const auto& name : mentioned_entities(d)) {
    if (supported.count(normalize_key(name))) v.supported_entities.push_back(name);
    else v.stripped_entities.push_back(name);
  }
  return v;
}

ActionabilityVerdict actionability_filter(const StructuredDiagnosis& d, const std::vector<FusedEvidenceRecord>& records,
                                          const GroundingVerdict& grounding, const GateConfig& cfg) {
  ActionabilityVerdict v;
  if (!grounding.grounded) {
    v.status = Actionability::not_actionable;
    v.reason = "diagnosis is not grounded";
    return v;
  }

  auto cause = resolve(d.primary_cause.record_ids, records);
  if (cause.empty()) cause = resolve(d.failure_anchor.record_ids, records);

  const EvidenceUnit* infra = nullptr;
  bool agent = false;
  for (const auto* r : cause) {
    if (infra == nullptr) infra = infra_unit(*r, cfg.scope_deny_list);
    agent = agent || std::any_of(r->support.begin(), r->support.end(), agent_side);
  }
  if (infra != nullptr && !agent) {
    v.status = Actionability::out_of_scope;
    v.reason = "cause evidence is dominated by " + std::string(to_string(infra->detail.infra_class)) +
               " infrastructure signals";
    return v;
  }

  std::set<std::string> stripped;
  for (const auto& s : grounding.stripped_entities) stripped.insert(normalize_key(s));
  for (const auto* r : cause) {
    std::vector<Entity> entities = record_entities(*r);
    std::erase_if(entities, [&](const Entity& e) { return stripped.count(normalize_key(e.name)) > 0; });
    v.fields.target = describe_target(entities);
    if (!v.fields.target.empty()) {
      v.fields.target_record_id = r->record_id;
      break;
    }
  }
  if (!cause.empty()) v.fields.operation = operation_for(*cause.front());

  std::vector<std::string> checks;
  for (const auto& r : records) {
    for (const auto& u : r.support) {
      if (checks.size() >= 2) break;
      if (u.origin_kind == FindingKind::outcome_mismatch && !u.detail.success_claim && !u.detail.check.empty())
        add_unique(checks, u.detail.check);
    }
  }
  std::vector<std::string> signals;
  for (const auto& c : checks) signals.push_back("check '" + c + "' passes");
  std::string signature;
  for (const auto* r : resolve(d.failure_anchor.record_ids, records)) {
    if (!r->lead().detail.signature.empty()) {
      signature = r->lead().detail.signature;
      break;
    }
  }
  if (signature.empty() && !cause.empty()) signature = cause.front()->lead().detail.signature;
  if (!signature.empty()) signals.push_back("'" + signature + "' no longer observed");
  for (std::size_t i = 0; i < signals.size(); ++i) {
    if (i > 0) v.fields.verification_signal += " and ";
    v.fields.verification_signal += signals[i];
  }

  if (!v.fields.verification_signal.empty()) {
    v.fields.boundary_condition = "do not submit or terminate until " + v.fields.verification_signal;
    for (const auto& r : records) {
      if (!r.has_kind(FindingKind::repeated_failure)) continue;
      for (const auto& u : r.support) {
        if (u.origin_kind == FindingKind::repeated_failure) {
          v.fields.boundary_condition += "; do not repeat '" + u.anchor.key + "'";
          break;
        }
      }
      break;
    }
  }

  if (v.fields.target.empty()) v.missing_fields.push_back("target");
  if (v.fields.operation.empty()) v.missing_fields.push_back("operation");
  if (v.fields.verification_signal.empty()) v.missing_fields.push_back("verification_signal");
  if (v.fields.boundary_condition.empty()) v.missing_fields.push_back("boundary_condition");

  if (v.missing_fields.empty()) {
    v.status = Actionability::actionable;
    v.reason = "all action fields derived from evidence";
  } else {
    v.status = Actionability::not_actionable;
    v.reason = "missing:";
    for (const auto& m : v.missing_fields) v.reason += " " + m;
  }
  return v;
}

RecoveryGuidance construct_guidance(const StructuredDiagnosis& d, const GroundingVerdict& grounding,
                                    const ActionabilityVerdict& action) {
  RecoveryGuidance g;
  if (!grounding.grounded) g.non_injectable_reason = NonInjectableReason::ungrounded;
  else if (action.status == Actionability::out_of_scope) g.non_injectable_reason = NonInjectableReason::out_of_scope;
  else if (action.status != Actionability::actionable) g.non_injectable_reason = NonInjectableReason::not_actionable;

  if (g.non_injectable_reason) {
    for (auto h : kConservativeHints) g.conservative_hints.emplace_back(h);
    return g;
  }

  g.injectable = true;
  g.target = action.fields.target;
  g.target_record_id = action.fields.target_record_id;
  g.operation = action.fields.operation;
  g.verification_signal = action.fields.verification_signal;
  g.boundary_condition = action.fields.boundary_condition;
  g.contributing_detail = {"cause: " + d.primary_cause.text, "mistake: " + d.behavioral_mistake.text};
  add_unique(g.citation_ids, g.target_record_id);
  for (const auto& id : all_citations(d)) add_unique(g.citation_ids, id);
  return g;
}

int estimate_tokens(std::string_view text) {
  return static_cast<int>((code_points(text) + 3) / 4);
}

HintBlock format_hint(const RecoveryGuidance& g, const std::vector<FusedEvidenceRecord>& records, int budget_tokens,
                      std::size_t max_citations) {
  if (budget_tokens < kMinHintBudget) {
    throw Error(ErrorCode::budget_too_small,
                "hint budget " + std::to_string(budget_tokens) + " is below " + std::to_string(kMinHintBudget));
  }

  HintBlock block;
  if (!g.injectable) {
    block.text = "RECOVERY HINT (CONSERVATIVE)\n";
    for (const auto& h : g.conservative_hints) block.text += "HINT: " + h + "\n";
    block.token_estimate = estimate_tokens(block.text);
    return block;
  }

  std::array<std::pair<std::string_view, std::string>, 4> fields = {{{"TARGET: ", g.target},
                                                                     {"OPERATION: ", g.operation},
                                                                     {"VERIFY: ", g.verification_signal},
                                                                     {"BOUNDARY: ", g.boundary_condition}}};
  std::vector<std::string> context;
  for (const auto& c : g.contributing_detail) context.push_back("CONTEXT: " + c);
  std::vector<std::pair<std::string, std::string>> evidence;  // (record id, line)
  for (const auto& id : g.citation_ids) {
    if (evidence.size() >= max_citations) break;
    if (const auto* r = find_record(records, id)) evidence.emplace_back(id, evidence_line(*r));
  }

  auto render = [&]() {
    std::string text = "RECOVERY HINT\n";
    for (const auto& [label, value] : fields) text += std::string(label) + value + "\n";
    for (const auto& c : context) text += c + "\n";
    for (const auto& e : evidence) text += e.second + "\n";
    return text;
  };

  std::string text = render();
  while (estimate_tokens(text) > budget_tokens && !evidence.empty()) {
    evidence.pop_back();
    text = render();
  }
  while (estimate_tokens(text) > budget_tokens && !context.empty()) {
    context.pop_back();
    text = render();
  }
  // Last resort: shorten the longest field value. The labels always stay.
  constexpr std::size_t kMinField = 16;
  while (estimate_tokens(text) > budget_tokens) {
    auto longest = std::max_element(fields.begin(), fields.end(), [](const auto& a, const auto& b) {
      return code_points(a.second) < code_points(b.second);
    });
    const std::size_t len = code_points(longest->second);
    if (len <= kMinField + 3) break;
    const std::size_t excess = (static_cast<std::size_t>(estimate_tokens(text) - budget_tokens)) * 4 + 3;
    const std::size_t keep = len > excess + kMinField ? len - excess : kMinField;
    longest->second = ellipsize(longest->second, keep);
    text = render();
  }

  block.text = std::move(text);
  block.token_estimate = estimate_tokens(block.text);
  for (const auto& e : evidence) block.cited_record_ids.push_back(e.first);
  return block;
}

GateResult run_gate(const StructuredDiagnosis& d, const std::vector<FusedEvidenceRecord>& records,
                    const GateConfig& cfg) {
  GateResult out;
  out.grounding = grounding_check(d, records);
  out.action = actionability_filter(d, records, out.grounding, cfg);
  out.guidance = construct_guidance(d, out.grounding, out.action);
  out.hint = format_hint(out.guidance, records, cfg.budget_tokens, cfg.max_citations);
  return out;
}

}  // namespace failanchor
