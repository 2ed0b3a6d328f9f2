#pragma once

// Append-only experiment trace.
//
// One UTF-8 JSON object per line. Line 0 is the header that freezes the
// session protocol; every later line is a record whose body carries `seq`
// and `prev_hash`, followed by a trailing `hash` member holding the SHA-256
// of the exact body bytes. Layout is documented in docs/trace_format.md.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "factorlab/eval.hpp"
#include "factorlab/panel.hpp"

namespace factorlab {

inline constexpr int kTraceVersion = 1;
// prev_hash of the first record.
inline const std::string kGenesisHash(64, '0');

enum class CandidateType { mechanical, hypothesis };
const char* to_string(CandidateType t);
CandidateType candidate_type_from_string(std::string_view s);

enum class CandidateStatus { evaluated, rejected };

struct CandidateRecord {
  int round = 0;
  std::string name;
  std::string hypothesis;
  std::string rationale;
  CandidateType candidate_type = CandidateType::hypothesis;
  std::string recipe_text;
  std::string source;  // which generator produced it ("mechanical", agent name)
  CandidateStatus status = CandidateStatus::evaluated;
  std::vector<std::string> rejection;  // parse / validation messages when rejected
  std::optional<EvalMetrics> metrics_train;
  std::optional<EvalMetrics> metrics_validation;  // diagnostic only
  Verdict verdict;
  std::string interpretation;
};

// Interpretations arrive after metrics; they are appended, never edited in.
struct Amendment {
  int round = 0;
  std::uint64_t target_seq = 0;
  std::string interpretation;
  std::string author;
};

struct PoolDelta {
  std::vector<std::string> hold;  // names added to the hold pool
  std::vector<std::string> good;  // curation: the full curated good pool
};

enum class SummaryScope { round, curation };

struct RoundSummary {
  int round = 0;
  SummaryScope scope = SummaryScope::round;
  std::string text;
  std::string decision;
  PoolDelta pool_delta;
};

struct RoundAbort {
  int round = 0;
  std::string reason;
};

using RecordBody = std::variant<CandidateRecord, Amendment, RoundSummary, RoundAbort>;

struct TraceEntry {
  std::uint64_t seq = 0;
  std::string prev_hash;
  std::string timestamp;  // UTC, ISO-8601
  RecordBody body;
  std::string hash;  // filled by the log
};

enum class ClockMode { logical, wall };

struct TraceHeader {
  int version = kTraceVersion;
  std::string hash_algorithm = "sha256";
  std::string config_digest;
  std::uint64_t seed = 0;
  ClockMode clock = ClockMode::logical;
  std::string epoch = "2026-01-01T00:00:00Z";  // logical clock origin
  GateConfig gate;
  SplitConfig split;
  nlohmann::json protocol;  // full frozen session config snapshot
  std::string hash;         // filled by the log
};

struct PoolState {
  std::vector<std::string> hold;  // order of admission
  std::vector<std::string> good;  // subset of hold
};

struct StateCandidate {
  std::uint64_t seq = 0;
  CandidateRecord record;  // interpretation merged from the latest amendment
};

// Everything the proposing agent is allowed to see.
struct ResearchState {
  std::vector<StateCandidate> candidates;
  std::vector<RoundSummary> summaries;
  PoolState pools;
  int last_round = 0;
  std::set<int> aborted_rounds;

  const StateCandidate* find(std::string_view name) const;
  std::set<std::string> names() const;
};

struct IntegrityResult {
  bool ok = true;
  bool header_ok = true;
  std::optional<std::uint64_t> first_bad_seq;
  std::size_t valid_records = 0;
  bool partial_tail = false;  // last line lacks its terminating newline
  std::string message;
};

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TraceIntegrityError : public TraceError {
 public:
  explicit TraceIntegrityError(IntegrityResult r);
  const IntegrityResult& result() const { return result_; }

 private:
  IntegrityResult result_;
};

// Byte sink for the log. The file implementation appends with O_APPEND
// semantics and flushes every line.
class TraceStorage {
 public:
  virtual ~TraceStorage() = default;
  virtual std::string read_all() const = 0;
  virtual void append(std::string_view bytes) = 0;
  virtual void truncate(std::size_t size) = 0;
  virtual std::size_t size() const = 0;
};

class FileTraceStorage : public TraceStorage {
 public:
  explicit FileTraceStorage(std::filesystem::path path) : path_(std::move(path)) {}
  std::string read_all() const override;
  void append(std::string_view bytes) override;
  void truncate(std::size_t size) override;
  std::size_t size() const override;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

class MemoryTraceStorage : public TraceStorage {
 public:
  std::string read_all() const override { return data_; }
  void append(std::string_view bytes) override { data_.append(bytes); }
  void truncate(std::size_t size) override { data_.resize(std::min(size, data_.size())); }
  std::size_t size() const override { return data_.size(); }
  std::string& data() { return data_; }

 private:
  std::string data_;
};

// Recomputes the whole chain over raw trace bytes.
IntegrityResult verify_integrity(std::string_view content);

class TraceLog {
 public:
  // Storage must be empty; writes the header line.
  static TraceLog create(std::unique_ptr<TraceStorage> storage, TraceHeader header);
  // Verifies the chain and throws TraceIntegrityError on corruption. A
  // partially written final line is dropped when recover_partial_tail is set.
  static TraceLog open(std::unique_ptr<TraceStorage> storage, bool recover_partial_tail = true);

  const TraceHeader& header() const { return header_; }
  const std::vector<TraceEntry>& entries() const { return entries_; }
  std::optional<std::uint64_t> head_seq() const;
  const std::string& head_hash() const { return head_hash_; }
  std::uint64_t next_seq() const { return entries_.size(); }

  // Requires entry.seq == next_seq() and entry.prev_hash == head_hash().
  // Throws TraceError on a chain mismatch, a duplicate candidate name, or
  // when the underlying bytes changed since the log was opened.
  std::uint64_t append(TraceEntry entry);
  // Fills seq, prev_hash and timestamp, then appends.
  std::uint64_t append_next(RecordBody body);

  ResearchState read_state() const;

 private:
  TraceLog() = default;
  std::string timestamp_for(std::uint64_t seq) const;

  std::unique_ptr<TraceStorage> storage_;
  TraceHeader header_;
  std::vector<TraceEntry> entries_;
  std::set<std::string> names_;
  std::string head_hash_ = kGenesisHash;
  std::size_t known_size_ = 0;
};

// Serialization helpers shared with the CLI and bindings.
nlohmann::json metrics_to_json(const EvalMetrics& m);
EvalMetrics metrics_from_json(const nlohmann::json& j);
nlohmann::json gate_to_json(const GateConfig& g);
GateConfig gate_from_json(const nlohmann::json& j);
nlohmann::json split_to_json(const SplitConfig& s);
SplitConfig split_from_json(const nlohmann::json& j);

// Encodes the body of an entry (everything except `hash`).
nlohmann::json entry_body_to_json(const TraceEntry& e);
TraceEntry entry_from_json(const nlohmann::json& j);

}  // namespace factorlab
