#pragma once

// Round orchestration: proposal sources, evaluation, gating, logging and
// hold/good pool governance.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "factorlab/digest.hpp"
#include "factorlab/dsl.hpp"
#include "factorlab/eval.hpp"
#include "factorlab/panel.hpp"
#include "factorlab/trace.hpp"

namespace factorlab {

struct CandidateProposal {
  std::string name;
  std::string hypothesis;
  std::string rationale;
  CandidateType candidate_type = CandidateType::hypothesis;
  std::string recipe_text;
};

// A reply block that could not be turned into a proposal.
struct MalformedProposal {
  CandidateProposal partial;  // whatever fields were recovered
  std::string reason;
};

struct ProposalBatch {
  std::vector<CandidateProposal> proposals;
  std::vector<MalformedProposal> malformed;
};

class AgentAdapter {
 public:
  virtual ~AgentAdapter() = default;
  virtual std::string name() const = 0;
  virtual ProposalBatch propose(const ResearchState& state, int round, std::size_t batch) = 0;
  // Post-evaluation reading of one record.
  virtual std::string interpret(const CandidateRecord& record);
  // Next-direction note written into the round summary.
  virtual std::string decide(const ResearchState& state, int round);
};

// Seeded template sampler over the recipe grammar. With probability
// focus_probability the leaf column is drawn from focus_columns.
struct StubAgentConfig {
  std::uint64_t seed = 42;
  std::vector<std::string> columns;  // approved columns to sample from
  std::vector<std::string> focus_columns;
  double focus_probability = 0.5;
};

class StubAgent : public AgentAdapter {
 public:
  explicit StubAgent(StubAgentConfig cfg);
  std::string name() const override { return "stub"; }
  ProposalBatch propose(const ResearchState& state, int round, std::size_t batch) override;
  std::string decide(const ResearchState& state, int round) override;

 private:
  StubAgentConfig cfg_;
};

// Chat-completion client. The API key is read from the named environment
// variable at call time and never written anywhere.
struct RemoteAgentConfig {
  std::string endpoint;  // e.g. https://host/v1/chat/completions
  std::string model;
  std::string api_key_env = "FACTORLAB_API_KEY";
  std::chrono::seconds timeout{60};
  int max_retries = 1;
  std::filesystem::path sidecar;  // request/response audit log (JSONL)
  std::vector<std::string> columns;
};

class RemoteAgent : public AgentAdapter {
 public:
  explicit RemoteAgent(RemoteAgentConfig cfg);
  std::string name() const override { return "remote"; }
  ProposalBatch propose(const ResearchState& state, int round, std::size_t batch) override;

  std::string render_prompt(const ResearchState& state, int round, std::size_t batch) const;

 private:
  RemoteAgentConfig cfg_;
};

class AgentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses "### CANDIDATE" ... "### END" blocks with `key: value` lines for
// name, hypothesis, rationale, type and recipe. Blocks with missing or
// unknown fields are reported as malformed, one by one.
ProposalBatch parse_proposal_blocks(std::string_view reply);

// For each of the top-k hold factors by train mean IC (ties by name),
// emits lag(1, e), roll_mean(3, e) and cs_zscore(e) named <base>__lag1,
// <base>__ma3 and <base>__csz. Names already in the trace are skipped.
std::vector<CandidateProposal> mechanical_variants(const PoolState& pools, const ResearchState& state,
                                                   std::size_t k);

class ProtocolFrozenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BatchSizes {
  std::size_t mechanical = 6;
  std::size_t hypothesis = 6;
};

struct RoundInputs {
  const Panel* panel = nullptr;
  const Matrix* targets = nullptr;
  SplitIndices splits;
  GateConfig gate;    // must equal the trace header snapshot
  SplitConfig split;  // must equal the trace header snapshot
  SignalEvalSettings eval;
  std::size_t max_depth = dsl::kDefaultMaxDepth;
  BatchSizes batch;
};

struct RoundReport {
  int round = 0;
  std::size_t proposed = 0;
  std::size_t rejected = 0;
  std::size_t evaluated = 0;
  std::size_t passed = 0;
  std::vector<std::string> passed_names;
  std::vector<std::string> dropped;       // duplicate names, not logged as records
  std::vector<std::string> agent_errors;  // adapter failures; the round continues

  std::string to_text() const;
};

// Throws ProtocolFrozenError when gate or split differ from the header.
void check_protocol(const TraceHeader& header, const GateConfig& gate, const SplitConfig& split);

// One search round (steps: read state, gather, validate, evaluate, gate,
// append, summarize). On a trace write failure a round-abort marker is
// attempted and TraceError is rethrown.
RoundReport run_round(TraceLog& log, const RoundInputs& in, std::span<AgentAdapter* const> agents);

struct CurationCandidate {
  std::string name;
  double mean_ic = kMissing;
  Matrix standardized;  // per-date standardized train-window scores
};

// |Pearson| over cells where both matrices are present, restricted to
// `dates`. Missing when fewer than two joint cells or zero variance.
double pooled_correlation(const Matrix& a, const Matrix& b, std::span<const std::size_t> dates);

// Greedy: by mean IC descending (ties by name), admit while |corr| <
// threshold against every admitted factor; stop at max_size. An undefined
// correlation does not block admission.
std::vector<std::string> curate(std::vector<CurationCandidate> candidates, double corr_threshold,
                                std::size_t max_size, std::span<const std::size_t> dates);

struct CurationSettings {
  double corr_threshold = 0.7;
  std::size_t max_size = 10;
};

// Re-evaluates every hold recipe on the train window, runs curate and
// appends a curation summary. Throws DataError on an empty hold pool.
PoolState curate_good_pool(TraceLog& log, const RoundInputs& in, const CurationSettings& settings);

// Recipe score with untradable cells removed.
Matrix tradable_scores(const dsl::Expr& e, const Panel& panel);

}  // namespace factorlab
