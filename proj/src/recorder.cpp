#include "failanchor/recorder.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>

#include "failanchor/error.hpp"
#include "failanchor/hash.hpp"

namespace failanchor {

namespace {

std::int64_t system_now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string generate_run_id(const std::string& path) {
  static std::atomic<std::uint64_t> counter{0};
  const auto ns = std::chrono::steady_clock::now().time_since_epoch().count();
  std::uint64_t h = fnv1a64(path);
  h = fnv1a64(std::to_string(ns), h);
  h = fnv1a64(std::to_string(::getpid()) + ":" + std::to_string(counter++), h);
  return "run-" + to_hex(h, 12);
}

}  // namespace

std::string_view to_string(FinalStatus s) noexcept {
  switch (s) {
    case FinalStatus::resolved: return "resolved";
    case FinalStatus::unresolved: return "unresolved";
    case FinalStatus::failed: return "failed";
    case FinalStatus::aborted: return "aborted";
  }
  return "aborted";
}

Session::Session(std::string path, std::string run_id, SessionOptions options)
    : path_(std::move(path)), run_id_(std::move(run_id)), options_(std::move(options)) {
  if (!options_.clock) options_.clock = system_now_ms;
}

std::shared_ptr<Session> Session::start(const std::string& sink_path,
                                        const std::map<std::string, std::string>& run_meta,
                                        SessionOptions options) {
  std::string run_id = options.run_id ? *options.run_id : generate_run_id(sink_path);
  std::shared_ptr<Session> s(new Session(sink_path, std::move(run_id), std::move(options)));
  s->out_.open(sink_path, std::ios::out | std::ios::trunc | std::ios::binary);
  if (!s->out_) throw Error(ErrorCode::sink_unwritable, "cannot open trace sink '" + sink_path + "'");

  Span header;
  header.event = EventType::system_message;
  header.status = SpanStatus::ok;
  header.step = 0;
  auto task = run_meta.find("task");
  header.payload = task != run_meta.end() ? task->second : std::string();
  header.meta = {{"role", "header"}, {"run_id", s->run_id_}, {"run_meta", run_meta}};

  std::lock_guard lock(s->mu_);
  if (s->write_locked(std::move(header)).empty()) {
    throw Error(ErrorCode::sink_unwritable, "cannot write header to '" + sink_path + "'");
  }
  return s;
}

Session::~Session() { finalize(FinalStatus::aborted); }

bool Session::open() const noexcept {
  std::lock_guard lock(mu_);
  return open_;
}

std::int64_t Session::current_step() const noexcept {
  std::lock_guard lock(mu_);
  return step_;
}

std::string Session::next_id_locked() {
  std::string seq = std::to_string(++seq_);
  if (seq.size() < 8) seq.insert(0, 8 - seq.size(), '0');
  return run_id_ + ":" + seq;
}

std::int64_t Session::now_locked() {
  std::int64_t t = last_ts_;
  try {
    t = options_.clock();
  } catch (...) {
  }
  last_ts_ = std::max(last_ts_, t);
  return last_ts_;
}

std::string Session::write_locked(Span span) {
  span.span_id = next_id_locked();
  span.ts_ms = now_locked();
  span.payload = truncate_payload(std::move(span.payload), options_.payload_cap_bytes);
  out_ << serialize_span(span) << '\n';
  out_.flush();
  if (!out_) return {};
  ++written_;
  return span.span_id;
}

std::string Session::record_event(const BoundaryEvent& event) noexcept {
  try {
    std::lock_guard lock(mu_);
    if (!open_) {
      ++dropped_;
      return {};
    }
    if (event.kind == EventType::model_response && !step_marked_) ++step_;
    step_marked_ = false;

    Span span;
    span.parent_id = event.parent_id;
    span.step = step_;
    span.event = event.kind;
    span.status = event.status;
    span.payload = event.payload;
    span.meta = event.meta.is_object() ? event.meta : nlohmann::json::object();

    const std::string tool = span.tool();
    if (event.kind == EventType::tool_return) {
      auto& pending = open_calls_[tool];
      const std::string call_id = span.meta_string(meta_key::call_id);
      if (call_id.empty()) {
        if (!pending.empty()) {
          span.meta[std::string(meta_key::call_id)] = pending.front();
          pending.erase(pending.begin());
        }
      } else {
        std::erase(pending, call_id);
      }
    }

    std::string id = write_locked(std::move(span));
    if (id.empty()) {
      ++dropped_;
      return {};
    }
    if (event.kind == EventType::tool_call) open_calls_[tool].push_back(id);
    return id;
  } catch (...) {
    ++dropped_;
    return {};
  }
}

void Session::mark_step() noexcept {
  std::lock_guard lock(mu_);
  if (!open_) return;
  ++step_;
  step_marked_ = true;
}

TraceRef Session::finalize(FinalStatus status) noexcept {
  std::lock_guard lock(mu_);
  if (final_ref_) return *final_ref_;
  TraceRef ref;
  try {
    ref.path = path_;
    ref.run_id = run_id_;
    if (open_ && out_.is_open()) {
      Span terminal;
      terminal.event = EventType::system_message;
      terminal.status = SpanStatus::ok;
      terminal.step = step_;
      terminal.payload = "session end: " + std::string(to_string(status));
      terminal.meta = {{"role", "terminal"},
                       {"final_status", to_string(status)},
                       {"dropped_events", dropped_.load()}};
      if (write_locked(std::move(terminal)).empty()) ++dropped_;
      out_.close();
    }
  } catch (...) {
    ++dropped_;
  }
  open_ = false;
  ref.spans_written = written_;
  ref.dropped_events = dropped_.load();
  final_ref_ = ref;
  return ref;
}

}  // namespace failanchor
