// failanchor command-line entry point.
//
//   failanchor diagnose --trace run.jsonl [--config cfg.json] [--out report.json] [--deterministic]
//   failanchor synth --category retry_no_progress --seed 7 [--out run.jsonl]
//   failanchor hint --report report.json [--budget 1200]
//   failanchor report --report report.json --summary
//   failanchor config
//
// Exit codes: 0 ok, 2 unreadable or malformed input, 3 pipeline failure,
// 4 bad configuration.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "failanchor/config.hpp"
#include "failanchor/error.hpp"
#include "failanchor/pipeline.hpp"
#include "failanchor/report.hpp"
#include "failanchor/synth.hpp"
#include "failanchor/wire.hpp"

namespace fa = failanchor;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitPipeline = 3;
constexpr int kExitConfig = 4;

std::mutex g_err_mu;

void report_error(const std::string& msg) {
  std::lock_guard lock(g_err_mu);
  std::cerr << "failanchor: " << msg << "\n";
}

int exit_code_for(const fa::Error& e) {
  switch (e.code()) {
    case fa::ErrorCode::malformed_record:
    case fa::ErrorCode::ordering_violation:
    case fa::ErrorCode::duplicate_span_id:
    case fa::ErrorCode::empty_input:
    case fa::ErrorCode::invalid_report:
      return kExitParse;
    case fa::ErrorCode::invalid_config:
    case fa::ErrorCode::budget_too_small:
    case fa::ErrorCode::unknown_category:
    case fa::ErrorCode::unknown_metric:
      return kExitConfig;
    default:
      return kExitPipeline;
  }
}

bool write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::lock_guard lock(g_err_mu);
    std::cout << text;
    std::cout.flush();
    return static_cast<bool>(std::cout);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  return static_cast<bool>(out);
}

int diagnose_one(const std::string& trace_path, const std::string& out_path, const fa::Config& cfg,
                 bool deterministic) {
  fa::TraceReadResult trace;
  try {
    trace = fa::read_trace_file(trace_path, cfg.wire);
  } catch (const fa::Error& e) {
    report_error(trace_path + ": " + e.what());
    return exit_code_for(e);
  }
  if (trace.spans.empty()) {
    report_error(trace_path + ": trace has no spans");
    return kExitParse;
  }

  try {
    fa::PipelineResult result = fa::run_pipeline(std::move(trace.spans), cfg);
    fa::ReportOptions options{trace_path, trace.malformed_lines, deterministic};
    const std::string text = fa::build_report(result, cfg, options).dump(2) + "\n";
    if (!write_text(out_path, text)) {
      report_error("cannot write report to '" + out_path + "'");
      return kExitPipeline;
    }
    for (const auto& issue : result.trace_issues) report_error(trace_path + ": warning: " + issue);
    return kExitOk;
  } catch (const fa::StageError& e) {
    report_error(trace_path + ": stage " + e.what());
    return e.stage() == "wire" ? kExitParse : kExitPipeline;
  } catch (const std::exception& e) {
    report_error(trace_path + ": " + e.what());
    return kExitPipeline;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Failure diagnosis and recovery guidance for agent execution traces"};
  app.require_subcommand(1);

  // diagnose
  std::vector<std::string> traces;
  std::string config_path, out_path;
  bool deterministic = false, skip_malformed = false;
  unsigned jobs = 1;
  auto* diagnose = app.add_subcommand("diagnose", "Run the full pipeline over one or more traces");
  diagnose->add_option("--trace", traces, "Trace file (JSON Lines); repeat for several")->required();
  diagnose->add_option("--config", config_path, "Config file (JSON)");
  diagnose->add_option("--out", out_path,
                       "Report path; a directory when several traces are given (default: stdout)");
  diagnose->add_flag("--deterministic", deterministic, "Omit wall-clock fields from the report");
  diagnose->add_flag("--skip-malformed", skip_malformed, "Skip malformed lines instead of failing");
  diagnose->add_option("--jobs", jobs, "Traces processed concurrently")->check(CLI::Range(1u, 256u));

  // synth
  std::string category;
  std::uint64_t seed = 0;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic failed run");
  synth->add_option("--category", category, "Failure category")->required();
  synth->add_option("--seed", seed, "Seed");
  synth->add_option("--out", synth_out, "Trace path (default: stdout)");

  // hint
  std::string report_path;
  int budget = 1200;
  auto* hint = app.add_subcommand("hint", "Re-format the stored guidance at a token budget");
  hint->add_option("--report", report_path, "Report file")->required();
  hint->add_option("--budget", budget, "Token budget");

  // report
  bool summary = false, check_refs = false;
  auto* report = app.add_subcommand("report", "Inspect a report");
  report->add_option("--report", report_path, "Report file")->required();
  report->add_flag("--summary", summary, "Print a human-readable digest");
  report->add_flag("--check", check_refs, "List ids that do not resolve inside the report");

  auto* config_cmd = app.add_subcommand("config", "Print the default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  if (*config_cmd) {
    std::cout << fa::config_to_json(fa::Config{}).dump(2) << "\n";
    return kExitOk;
  }

  if (*diagnose) {
    fa::Config cfg;
    try {
      if (!config_path.empty()) cfg = fa::load_config(config_path);
    } catch (const fa::Error& e) {
      report_error(e.what());
      return kExitConfig;
    }
    if (skip_malformed) cfg.wire.skip_malformed = true;

    if (traces.size() == 1) return diagnose_one(traces.front(), out_path, cfg, deterministic);

    if (out_path.empty()) {
      report_error("--out must name a directory when several traces are given");
      return kExitConfig;
    }
    std::error_code ec;
    fs::create_directories(out_path, ec);
    if (ec) {
      report_error("cannot create output directory '" + out_path + "': " + ec.message());
      return kExitPipeline;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<int> worst{kExitOk};
    auto worker = [&] {
      for (std::size_t i = next++; i < traces.size(); i = next++) {
        const std::string out = (fs::path(out_path) / (fs::path(traces[i]).stem().string() + ".report.json")).string();
        const int code = diagnose_one(traces[i], out, cfg, deterministic);
        int seen = worst.load();
        while (code > seen && !worst.compare_exchange_weak(seen, code)) {
        }
      }
    };
    std::vector<std::thread> pool;
    const unsigned n = std::min<unsigned>(jobs, static_cast<unsigned>(traces.size()));
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return worst.load();
  }

  if (*synth) {
    try {
      const auto spans = fa::synthesize_run(fa::parse_category(category), seed);
      std::ostringstream os;
      fa::write_trace(os, spans);
      if (!write_text(synth_out, os.str())) {
        report_error("cannot write trace to '" + synth_out + "'");
        return kExitPipeline;
      }
      return kExitOk;
    } catch (const fa::Error& e) {
      report_error(e.what());
      return exit_code_for(e);
    }
  }

  try {
    const fa::LoadedReport loaded = fa::load_report(report_path);
    if (*hint) {
      std::cout << fa::format_hint(loaded.guidance, loaded.records, budget).text;
      return kExitOk;
    }
    if (check_refs) {
      const auto dangling = fa::dangling_references(loaded.doc);
      for (const auto& d : dangling) std::cout << d << "\n";
      if (!dangling.empty()) return kExitPipeline;
    }
    if (summary) std::cout << fa::summarize_report(loaded.doc);
    if (!summary && !check_refs) std::cout << loaded.doc.dump(2) << "\n";
    return kExitOk;
  } catch (const fa::Error& e) {
    report_error(e.what());
    return exit_code_for(e);
  }
}
