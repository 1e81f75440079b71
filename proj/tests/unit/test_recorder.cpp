#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "failanchor/error.hpp"
#include "failanchor/recorder.hpp"
#include "failanchor/wire.hpp"

namespace fa = failanchor;
namespace fs = std::filesystem;

namespace {

fs::path temp_trace(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "failanchor-recorder-test";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<fa::Span> read_back(const fs::path& p) { return fa::read_trace_file(p.string(), {}).spans; }

fa::BoundaryEvent ev(fa::EventType kind, std::string payload = {}, nlohmann::json meta = nlohmann::json::object()) {
  fa::BoundaryEvent e;
  e.kind = kind;
  e.payload = std::move(payload);
  e.meta = std::move(meta);
  return e;
}

}  // namespace

TEST_CASE("start writes a header record") {
  const auto path = temp_trace("header.jsonl");
  auto s = fa::Session::start(path.string(), {{"task", "t1"}});
  CHECK(s->open());
  const auto spans = read_back(path);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].event == fa::EventType::system_message);
  CHECK(spans[0].payload == "t1");
  CHECK(spans[0].meta["role"] == "header");
  CHECK(spans[0].meta["run_id"] == s->run_id());
  s->finalize(fa::FinalStatus::resolved);
}

TEST_CASE("unwritable sink is reported at start") {
  try {
    fa::Session::start("/nonexistent-dir/for/sure/trace.jsonl", {});
    FAIL("unwritable sink accepted");
  } catch (const fa::Error& e) {
    CHECK(e.code() == fa::ErrorCode::sink_unwritable);
  }
}

TEST_CASE("distinct sessions get distinct run ids") {
  auto a = fa::Session::start(temp_trace("a.jsonl").string(), {});
  auto b = fa::Session::start(temp_trace("b.jsonl").string(), {});
  CHECK(a->run_id() != b->run_id());
  CHECK(a->run_id().starts_with("run-"));
}

TEST_CASE("events append one line each and steps follow model responses") {
  const auto path = temp_trace("events.jsonl");
  auto s = fa::Session::start(path.string(), {{"task", "x"}});
  const std::string m1 = s->record_event(ev(fa::EventType::model_response, "think"));
  const std::string c1 = s->record_event(ev(fa::EventType::tool_call, "ls", {{"tool", "bash"}}));
  const std::string r1 = s->record_event(ev(fa::EventType::tool_return, "a b", {{"tool", "bash"}}));
  s->mark_step();
  s->record_event(ev(fa::EventType::model_response, "again"));
  CHECK_FALSE(m1.empty());
  CHECK(m1 != c1);
  const auto ref = s->finalize(fa::FinalStatus::unresolved);

  const auto spans = read_back(path);
  REQUIRE(spans.size() == 6);
  CHECK(ref.spans_written == 6);
  CHECK(spans[1].step == 1);
  CHECK(spans[2].step == 1);
  CHECK(spans[3].meta["call_id"] == c1);
  // mark_step opened step 2; the model response that follows stays in it.
  CHECK(spans[4].step == 2);
  CHECK(spans[5].meta["role"] == "terminal");
  CHECK(spans[5].meta["final_status"] == "unresolved");
  CHECK(spans[5].meta["dropped_events"] == 0);
  CHECK(fa::check_trace(spans).empty());
}

TEST_CASE("finalize is idempotent and later events are dropped") {
  const auto path = temp_trace("final.jsonl");
  auto s = fa::Session::start(path.string(), {});
  const auto first = s->finalize(fa::FinalStatus::failed);
  const auto second = s->finalize(fa::FinalStatus::resolved);
  CHECK(first == second);
  CHECK_FALSE(s->open());
  CHECK(s->record_event(ev(fa::EventType::tool_call)).empty());
  CHECK(s->dropped_events() == 1);
  const auto spans = read_back(path);
  REQUIRE(spans.size() == 2);
  CHECK(spans[1].meta["final_status"] == "failed");
}

TEST_CASE("scoped session finalizes on unwind") {
  const auto path = temp_trace("scoped.jsonl");
  try {
    fa::ScopedSession s(fa::Session::start(path.string(), {}));
    s->record_event(ev(fa::EventType::model_response));
    throw std::runtime_error("agent loop blew up");
  } catch (const std::runtime_error&) {
  }
  const auto spans = read_back(path);
  REQUIRE(spans.size() == 3);
  CHECK(spans.back().meta["final_status"] == "aborted");
}

TEST_CASE("payloads are capped") {
  const auto path = temp_trace("cap.jsonl");
  fa::SessionOptions opt;
  opt.payload_cap_bytes = 64;
  auto s = fa::Session::start(path.string(), {}, opt);
  s->record_event(ev(fa::EventType::tool_return, std::string(1000, 'z')));
  s->finalize(fa::FinalStatus::resolved);
  CHECK(read_back(path)[1].payload.size() == 64);
}

TEST_CASE("clock going backwards never breaks ordering") {
  const auto path = temp_trace("clock.jsonl");
  fa::SessionOptions opt;
  std::int64_t now = 5000;
  opt.clock = [&now] { return now -= 100; };
  opt.run_id = "fixed";
  auto s = fa::Session::start(path.string(), {}, opt);
  for (int i = 0; i < 5; ++i) s->record_event(ev(fa::EventType::model_response));
  s->finalize(fa::FinalStatus::resolved);
  const auto spans = read_back(path);
  for (std::size_t i = 1; i < spans.size(); ++i) CHECK(spans[i].ts_ms >= spans[i - 1].ts_ms);
  CHECK(spans[0].span_id == "fixed:00000001");
}

TEST_CASE("1000 events from 4 threads") {
  const auto path = temp_trace("threads.jsonl");
  auto s = fa::Session::start(path.string(), {{"task", "concurrency"}});
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t) {
    pool.emplace_back([&s, t] {
      for (int i = 0; i < 250; ++i) {
        const auto kind = i % 5 == 0 ? fa::EventType::model_response : fa::EventType::tool_call;
        s->record_event(ev(kind, "t" + std::to_string(t), {{"tool", "tool" + std::to_string(t)}}));
      }
    });
  }
  for (auto& th : pool) th.join();
  s->finalize(fa::FinalStatus::resolved);

  const auto spans = read_back(path);
  REQUIRE(spans.size() == 1002);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    ids.insert(spans[i].span_id);
    if (i > 0) {
      CHECK(spans[i].step >= spans[i - 1].step);
      CHECK(spans[i].ts_ms >= spans[i - 1].ts_ms);
    }
  }
  CHECK(ids.size() == spans.size());
  CHECK(s->dropped_events() == 0);
  CHECK_NOTHROW(fa::build_bundle(spans, true));
}
