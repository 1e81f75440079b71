#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "failanchor/wire.hpp"

namespace failanchor {

struct BoundaryEvent {
  EventType kind = EventType::model_response;
  std::string payload;
  SpanStatus status = SpanStatus::ok;
  nlohmann::json meta = nlohmann::json::object();
  std::optional<std::string> parent_id;
};

enum class FinalStatus { resolved, unresolved, failed, aborted };
std::string_view to_string(FinalStatus s) noexcept;

struct TraceRef {
  std::string path;
  std::string run_id;
  std::size_t spans_written = 0;
  std::size_t dropped_events = 0;

  friend bool operator==(const TraceRef&, const TraceRef&) = default;
};

struct SessionOptions {
  std::size_t payload_cap_bytes = 16 * 1024;
  // Milliseconds since epoch; defaults to the system clock.
  std::function<std::int64_t()> clock;
  // Overrides the generated run id (useful for reproducible traces).
  std::optional<std::string> run_id;
};

// One instrumented run. Thread-safe: events from concurrent boundaries are
// serialized, and every operation after construction is fail-open.
class Session {
 public:
  // Writes the header record. Throws Error(sink_unwritable).
  static std::shared_ptr<Session> start(const std::string& sink_path,
                                        const std::map<std::string, std::string>& run_meta,
                                        SessionOptions options = {});

  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  // Returns the new span id, or "" when the event was dropped.
  std::string record_event(const BoundaryEvent& event) noexcept;
  // Starts a new agent step for subsequent events.
  void mark_step() noexcept;
  TraceRef finalize(FinalStatus status) noexcept;

  const std::string& run_id() const noexcept { return run_id_; }
  bool open() const noexcept;
  std::size_t dropped_events() const noexcept { return dropped_.load(); }
  std::int64_t current_step() const noexcept;

 private:
  Session(std::string path, std::string run_id, SessionOptions options);
  // Returns the assigned span id, or "" when the write failed.
  std::string write_locked(Span span);
  std::string next_id_locked();
  std::int64_t now_locked();

  std::string path_;
  std::string run_id_;
  SessionOptions options_;
  std::ofstream out_;
  mutable std::mutex mu_;
  bool open_ = true;
  bool step_marked_ = false;
  std::uint64_t seq_ = 0;
  std::int64_t step_ = 0;
  std::int64_t last_ts_ = 0;
  std::size_t written_ = 0;
  std::atomic<std::size_t> dropped_{0};
  std::map<std::string, std::vector<std::string>> open_calls_;
  std::optional<TraceRef> final_ref_;
};

// Finalizes on scope exit if the caller did not, e.g. when the agent loop
// throws.
class ScopedSession {
 public:
  explicit ScopedSession(std::shared_ptr<Session> session,
                         FinalStatus on_unwind = FinalStatus::aborted)
      : session_(std::move(session)), on_unwind_(on_unwind) {}
  ~ScopedSession() {
    if (session_) session_->finalize(on_unwind_);
  }
  ScopedSession(const ScopedSession&) = delete;
  ScopedSession& operator=(const ScopedSession&) = delete;

  Session* operator->() const noexcept { return session_.get(); }
  Session& operator*() const noexcept { return *session_; }

 private:
  std::shared_ptr<Session> session_;
  FinalStatus on_unwind_;
};

}  // namespace failanchor
