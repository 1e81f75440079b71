#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "failanchor/wire.hpp"

namespace testutil {

using failanchor::EventType;
using failanchor::Span;
using failanchor::SpanStatus;

// Small trace builder: ids "t:N", one millisecond apart.
class Trace {
 public:
  Span& add(std::int64_t step, EventType e, SpanStatus st = SpanStatus::ok, std::string payload = {},
            nlohmann::json meta = nlohmann::json::object()) {
    Span s;
    s.span_id = "t:" + std::to_string(++seq_);
    s.step = step;
    s.ts_ms = 1000 + static_cast<std::int64_t>(seq_);
    s.event = e;
    s.status = st;
    s.payload = std::move(payload);
    s.meta = std::move(meta);
    spans.push_back(std::move(s));
    return spans.back();
  }

  Span& model(std::int64_t step, std::int64_t tokens = 0) {
    nlohmann::json meta = nlohmann::json::object();
    if (tokens > 0) meta["total_tokens"] = tokens;
    return add(step, EventType::model_response, SpanStatus::ok, "thinking", meta);
  }

  // tool_call + tool_return at the same step; returns the call span id.
  std::string tool(std::int64_t step, const std::string& name, const std::string& args,
                   SpanStatus st = SpanStatus::ok, const std::string& result = "ok") {
    const std::string id = add(step, EventType::tool_call, SpanStatus::ok, args, {{"tool", name}}).span_id;
    add(step, EventType::tool_return, st, result, {{"tool", name}, {"call_id", id}});
    return id;
  }

  Span& outcome(std::int64_t step, const std::vector<std::string>& failing) {
    return add(step, EventType::outcome_verdict, SpanStatus::ok, "done",
               {{"verdict", "unresolved"}, {"failing_checks", failing}});
  }

  std::vector<Span> spans;

 private:
  std::size_t seq_ = 0;
};

}  // namespace testutil
