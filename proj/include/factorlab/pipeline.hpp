#pragma once

// Session commands shared by the command-line tool and the Python module.
// Every command reads the frozen session config and writes its artifacts
// under the configured output directory:
//
//   panel.bin, ingest_report.jsonl        ingest
//   trace.jsonl                           round, curate
//   model.json                            combine
//   backtest_<window>_<weighting>.csv     backtest (+ paths_<window>_<weighting>.csv)
//   fee_sweep_<window>.csv                fee-sweep (+ fee_paths_<window>.csv)
//   report.md                             report

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "factorlab/combine.hpp"
#include "factorlab/config.hpp"
#include "factorlab/search.hpp"
#include "factorlab/synth.hpp"

namespace factorlab {

// A prerequisite artifact is missing or stale.
class DependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace artifact {
inline constexpr const char* kPanel = "panel.bin";
inline constexpr const char* kIngestReport = "ingest_report.jsonl";
inline constexpr const char* kTrace = "trace.jsonl";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kReport = "report.md";
inline constexpr const char* kAgentLog = "agent_exchanges.jsonl";
}  // namespace artifact

std::string backtest_file(Window w, Weighting weighting);
std::string fee_sweep_file(Window w);

struct IngestOutcome {
  IngestReport report;
  std::string cache_digest;  // SHA-256 of panel.bin
};

// Everything derived from the cached panel that later stages need.
struct SessionData {
  Panel panel;
  Matrix targets;
  SplitIndices splits;

  RoundInputs round_inputs(const SessionConfig& cfg) const;
};

IngestOutcome cmd_ingest(const SessionConfig& cfg);
SessionData load_session_data(const SessionConfig& cfg);

// Opens trace.jsonl, creating it with a fresh header when absent. Throws
// ProtocolFrozenError when the header's config digest differs from cfg.
TraceLog open_session_trace(const SessionConfig& cfg);

std::unique_ptr<AgentAdapter> make_agent(const SessionConfig& cfg, const Panel& panel);

// Throws ConfigError once the round budget is spent.
RoundReport cmd_round(const SessionConfig& cfg);
PoolState cmd_curate(const SessionConfig& cfg);
RidgeModel cmd_combine(const SessionConfig& cfg);

// Recomputes the composite score from a model's recipes.
Matrix model_scores(const RidgeModel& model, const Panel& panel);

std::vector<std::filesystem::path> cmd_backtest(const SessionConfig& cfg);
std::vector<std::filesystem::path> cmd_fee_sweep(const SessionConfig& cfg);
std::filesystem::path cmd_report(const SessionConfig& cfg);

IntegrityResult cmd_verify_trace(const std::filesystem::path& trace);

void cmd_synth(const SynthConfig& cfg, const std::filesystem::path& out);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace factorlab
