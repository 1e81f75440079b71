#include "failanchor/synth.hpp"

#include <random>

#include "failanchor/error.hpp"

namespace failanchor {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 6> kCategoryNames = {
    "insufficient_validation", "tool_subprocess",   "state_workflow",
    "patch_submission",        "retry_no_progress", "runtime_environment"};

constexpr std::array<std::string_view, 4> kModules = {"auth", "billing", "inventory", "search"};
constexpr std::array<std::string_view, 3> kReadTools = {"read_file", "grep", "list_dir"};

// Emits spans with monotone ids, steps and timestamps. Draws come straight
// from the engine so the output does not depend on the standard library's
// distribution implementations.
class RunBuilder {
 public:
  RunBuilder(std::string prefix, std::uint64_t seed) : prefix_(std::move(prefix)), rng_(seed) {}

  std::uint64_t pick(std::uint64_t n) { return rng_() % n; }
  template <typename T, std::size_t N>
  const T& choose(const std::array<T, N>& items) { return items[pick(N)]; }

  void header(const std::string& task) {
    Span s = make(EventType::system_message, SpanStatus::ok, task);
    s.meta = {{"role", "header"}, {"run_id", prefix_}};
    push(std::move(s));
  }

  std::string model(const std::string& text, const std::string& intent = {}) {
    ++step_;
    Span s = make(EventType::model_response, SpanStatus::ok, text);
    const auto prompt = 1500 + 400 * step_ + static_cast<std::int64_t>(pick(200));
    const auto completion = 120 + static_cast<std::int64_t>(pick(120));
    s.meta = {{"prompt_tokens", prompt}, {"completion_tokens", completion}};
    if (!intent.empty()) s.meta["intent"] = intent;
    return push(std::move(s));
  }

  std::string call(const std::string& tool, const std::string& args) {
    Span s = make(EventType::tool_call, SpanStatus::ok, args);
    s.meta = {{"tool", tool}};
    return push(std::move(s));
  }

  std::string ret(const std::string& tool, const std::string& call_id, SpanStatus status, const std::string& payload) {
    Span s = make(EventType::tool_return, status, payload);
    s.meta = {{"tool", tool}, {"call_id", call_id}};
    return push(std::move(s));
  }

  void tool_step(const std::string& tool, const std::string& args, SpanStatus status, const std::string& payload,
                 const std::string& thought) {
    model(thought);
    const std::string id = call(tool, args);
    ret(tool, id, status, payload);
  }

  void benign_step() {
    const std::string tool(choose(kReadTools));
    const std::string target = "src/" + std::string(choose(kModules)) + "/handler_" + std::to_string(pick(9)) + ".py";
    tool_step(tool, target, SpanStatus::ok, "ok: " + std::to_string(20 + pick(400)) + " lines",
              "inspect " + target);
  }

  void edit_step(const std::string& path) {
    tool_step("edit_file", path, SpanStatus::ok, "applied 1 hunk", "edit " + path);
  }

  std::string verifier(const std::string& check, SpanStatus status) {
    model("run " + check);
    Span s = make(EventType::verifier_result, status, check + (status == SpanStatus::ok ? " passed" : " failed"));
    s.meta = {{"check", check}};
    return push(std::move(s));
  }

  std::string env(json meta, const std::string& payload) {
    Span s = make(EventType::env_observation, SpanStatus::ok, payload);
    s.meta = std::move(meta);
    return push(std::move(s));
  }

  std::string submission(SpanStatus status, const std::string& payload) {
    model("submit the change");
    Span s = make(EventType::submission, status, payload);
    s.meta = {{"tool", "submit"}};
    return push(std::move(s));
  }

  void outcome(const std::vector<std::string>& failing) {
    ++step_;
    Span s = make(EventType::outcome_verdict, SpanStatus::ok, "evaluation finished");
    s.meta = {{"verdict", "unresolved"}, {"failing_checks", failing}};
    push(std::move(s));
  }

  std::vector<Span> take() { return std::move(spans_); }

 private:
  Span make(EventType e, SpanStatus status, const std::string& payload) {
    Span s;
    s.step = step_;
    ts_ += 100 + static_cast<std::int64_t>(pick(800));
    s.ts_ms = ts_;
    s.event = e;
    s.status = status;
    s.payload = payload;
    return s;
  }

  std::string push(Span s) {
    std::string seq = std::to_string(++seq_);
    seq.insert(0, seq.size() < 4 ? 4 - seq.size() : 0, '0');
    s.span_id = prefix_ + ":" + seq;
    spans_.push_back(std::move(s));
    return spans_.back().span_id;
  }

  std::string prefix_;
  std::mt19937_64 rng_;
  std::vector<Span> spans_;
  std::int64_t step_ = 0;
  std::int64_t ts_ = 1'700'000'000'000;
  std::uint64_t seq_ = 0;
};

void warmup(RunBuilder& b, int min_steps) {
  const int n = min_steps + static_cast<int>(b.pick(4));
  for (int i = 0; i < n; ++i) b.benign_step();
}

}  // namespace

std::string_view to_string(FailureCategory c) noexcept { return kCategoryNames[static_cast<std::size_t>(c)]; }

FailureCategory parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == name) return static_cast<FailureCategory>(i);
  }
  throw Error(ErrorCode::unknown_category, "unknown failure category '" + std::string(name) + "'");
}

std::vector<Span> synthesize_run(FailureCategory category, std::uint64_t seed) {
  RunBuilder b("syn-" + std::string(to_string(category)) + "-" + std::to_string(seed), seed * 0x9E3779B97F4A7C15ULL + 1);
  const std::string module(b.choose(kModules));
  const std::string check = "test_" + module + "_flow";
  const std::string source = "src/" + module + "/service.py";
  b.header("fix the failing " + module + " flow");

  switch (category) {
    case FailureCategory::insufficient_validation: {
      warmup(b, 4);
      b.edit_step(source);
      if (b.pick(2) == 0) b.benign_step();
      if (b.pick(3) == 0) b.model("the fix is complete and the task is resolved");
      b.submission(SpanStatus::ok, "patch submitted");
      b.outcome({check});
      break;
    }
    case FailureCategory::tool_subprocess: {
      warmup(b, 3);
      const std::string missing = "helpers_" + std::to_string(b.pick(1000));
      const std::array<std::string, 3> commands = {"python -m " + module + ".cli migrate",
                                                   "python scripts/seed_" + module + ".py",
                                                   "python -c 'import " + module + "'"};
      for (const auto& cmd : commands) {
        b.tool_step("bash", cmd, SpanStatus::error,
                    "Traceback (most recent call last): ModuleNotFoundError: No module named '" + missing + "'",
                    "run " + cmd);
      }
      warmup(b, 2);
      b.edit_step(source);
      b.submission(SpanStatus::ok, "patch submitted");
      b.outcome({check});
      break;
    }
    case FailureCategory::state_workflow: {
      warmup(b, 3);
      const std::string key = module + "-service.replicas";
      const std::string manifest = "deploy/" + module + "-service.yaml";
      const auto expected = 2 + b.pick(3);
      b.model("check rollout state");
      b.env({{"state." + key + ".expected", std::to_string(expected)},
             {"state." + key + ".actual", std::to_string(expected + 1 + b.pick(2))},
             {"artifact", manifest},
             {"service", module + "-service"}},
            "rollout status differs from the manifest");
      warmup(b, 1);
      b.edit_step(source);
      b.submission(SpanStatus::ok, "change submitted");
      b.outcome({check});
      break;
    }
    case FailureCategory::patch_submission: {
      warmup(b, 3);
      b.edit_step(source);
      warmup(b, 1);
      b.submission(SpanStatus::error,
                   "patch failed to apply: corrupt patch at line " + std::to_string(10 + b.pick(80)));
      b.outcome({check});
      break;
    }
    case FailureCategory::retry_no_progress: {
      warmup(b, 3);
      const std::string target = "tests/test_" + module + ".py";
      const int attempts = 4 + static_cast<int>(b.pick(3));
      for (int i = 0; i < attempts; ++i) {
        b.tool_step("run_tests", target, SpanStatus::error, "AssertionError: expected status 200, got 500",
                    "rerun the tests");
      }
      b.submission(SpanStatus::ok, "patch submitted");
      b.outcome({check});
      break;
    }
    case FailureCategory::runtime_environment: {
      warmup(b, 3);
      static constexpr std::array<std::string_view, 3> kInfra = {
          "Error response from daemon: container 4f9c2ab1de77 is not running",
          "dial tcp 10.0.3.17:5432: connect: connection refused",
          "worker exited: out of memory (OOMKilled)"};
      const std::string msg(b.choose(kInfra));
      const int failures = 1 + static_cast<int>(b.pick(2));
      for (int i = 0; i < failures; ++i) {
        b.tool_step("docker_exec", "pytest -x " + source + " --run " + std::to_string(i), SpanStatus::error, msg,
                    "run the suite in the container");
      }
      warmup(b, 1);
      b.submission(SpanStatus::ok, "patch submitted");
      b.outcome({check});
      break;
    }
  }
  return b.take();
}

}  // namespace failanchor
