#include "factorlab/trace.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "factorlab/digest.hpp"

namespace factorlab {

using nlohmann::json;

namespace {

constexpr std::string_view kHashKey = ",\"hash\":\"";
constexpr std::size_t kSealSuffix = kHashKey.size() + 64 + 2;  // ,"hash":"<hex>"}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

// Appends the hash of the exact body bytes as a trailing member.
std::string seal(const json& body, std::string& hash_out) {
  const std::string b = dump(body);
  hash_out = sha256_hex(b);
  std::string line = b.substr(0, b.size() - 1);
  line += kHashKey;
  line += hash_out;
  line += "\"}\n";
  return line;
}

struct Unsealed {
  std::string body_text;
  std::string hash;
};

// Splits a line into body bytes and stored hash; nullopt if the shape is wrong.
std::optional<Unsealed> unseal(std::string_view line) {
  if (line.size() < kSealSuffix + 2) return std::nullopt;
  const std::size_t cut = line.size() - kSealSuffix;
  if (line.substr(cut, kHashKey.size()) != kHashKey || line.substr(line.size() - 2) != "\"}") return std::nullopt;
  Unsealed u;
  u.hash = std::string(line.substr(cut + kHashKey.size(), 64));
  u.body_text = std::string(line.substr(0, cut)) + "}";
  return u;
}

json num(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double num_from(const json& j) {
  if (j.is_null()) return kMissing;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("bad numeric field '" + s + "'");
  }
  return j.get<double>();
}

using Seconds = std::chrono::sys_seconds;

Seconds parse_instant(const std::string& s) {
  // YYYY-MM-DDTHH:MM:SSZ
  if (s.size() != 20 || s[10] != 'T' || s[19] != 'Z') throw ConfigError("bad timestamp '" + s + "'");
  const Date d = parse_date(s.substr(0, 10));
  const int hh = std::stoi(s.substr(11, 2)), mm = std::stoi(s.substr(14, 2)), ss = std::stoi(s.substr(17, 2));
  return Seconds{d} + std::chrono::hours(hh) + std::chrono::minutes(mm) + std::chrono::seconds(ss);
}

std::string format_instant(Seconds t) {
  const auto day = std::chrono::floor<std::chrono::days>(t);
  const std::chrono::hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%sT%02d:%02d:%02dZ", format_date(Date{day}).c_str(),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

json header_body(const TraceHeader& h) {
  return json{{"kind", "header"},
              {"version", h.version},
              {"hash_algorithm", h.hash_algorithm},
              {"config_digest", h.config_digest},
              {"seed", h.seed},
              {"clock", h.clock == ClockMode::logical ? "logical" : "wall"},
              {"epoch", h.epoch},
              {"gate", gate_to_json(h.gate)},
              {"split", split_to_json(h.split)},
              {"protocol", h.protocol}};
}

TraceHeader header_from_json(const json& j) {
  if (j.at("kind") != "header") throw std::invalid_argument("first line is not a header");
  TraceHeader h;
  h.version = j.at("version").get<int>();
  h.hash_algorithm = j.at("hash_algorithm").get<std::string>();
  if (h.hash_algorithm != kHashAlgorithm) throw std::invalid_argument("unsupported hash algorithm " + h.hash_algorithm);
  h.config_digest = j.at("config_digest").get<std::string>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.clock = j.at("clock") == "wall" ? ClockMode::wall : ClockMode::logical;
  h.epoch = j.at("epoch").get<std::string>();
  h.gate = gate_from_json(j.at("gate"));
  h.split = split_from_json(j.at("split"));
  h.protocol = j.at("protocol");
  return h;
}

std::vector<std::string_view> split_lines(std::string_view content, bool& partial_tail) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    const std::size_t nl = content.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(content.substr(start));
      partial_tail = true;
      break;
    }
    lines.push_back(content.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

}  // namespace

// ---------------------------------------------------------------------------
// JSON codecs

const char* to_string(CandidateType t) { return t == CandidateType::mechanical ? "mechanical" : "hypothesis"; }

CandidateType candidate_type_from_string(std::string_view s) {
  if (s == "mechanical") return CandidateType::mechanical;
  if (s == "hypothesis") return CandidateType::hypothesis;
  throw std::invalid_argument("unknown candidate type '" + std::string(s) + "'");
}

json metrics_to_json(const EvalMetrics& m) {
  return json{{"mean_ic", num(m.mean_ic)},     {"ic_tstat", num(m.ic_tstat)},
              {"tstat_degenerate", m.tstat_degenerate}, {"ls_sharpe", num(m.ls_sharpe)},
              {"coverage", num(m.coverage)},   {"n_days", m.n_days}};
}

EvalMetrics metrics_from_json(const json& j) {
  EvalMetrics m;
  m.mean_ic = num_from(j.at("mean_ic"));
  m.ic_tstat = num_from(j.at("ic_tstat"));
  m.tstat_degenerate = j.at("tstat_degenerate").get<bool>();
  m.ls_sharpe = num_from(j.at("ls_sharpe"));
  m.coverage = num_from(j.at("coverage"));
  m.n_days = j.at("n_days").get<std::size_t>();
  return m;
}

json gate_to_json(const GateConfig& g) {
  return json{{"tau_ic", g.tau_ic}, {"tau_t", g.tau_t}, {"min_names_per_day", g.min_names_per_day},
              {"min_days", g.min_days}};
}

GateConfig gate_from_json(const json& j) {
  GateConfig g;
  g.tau_ic = j.at("tau_ic").get<double>();
  g.tau_t = j.at("tau_t").get<double>();
  g.min_names_per_day = j.at("min_names_per_day").get<std::size_t>();
  g.min_days = j.at("min_days").get<std::size_t>();
  return g;
}

json split_to_json(const SplitConfig& s) {
  auto range = [](const DateRange& r) { return json::array({format_date(r.start), format_date(r.end)}); };
  return json{{"train", range(s.train)}, {"validation", range(s.validation)}, {"oos", range(s.oos)}};
}

SplitConfig split_from_json(const json& j) {
  auto range = [](const json& r) {
    return DateRange{parse_date(r.at(0).get<std::string>()), parse_date(r.at(1).get<std::string>())};
  };
  return SplitConfig{range(j.at("train")), range(j.at("validation")), range(j.at("oos"))};
}

json entry_body_to_json(const TraceEntry& e) {
  json j{{"seq", e.seq}, {"prev_hash", e.prev_hash}, {"timestamp", e.timestamp}};
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, CandidateRecord>) {
          j["kind"] = "candidate";
          j["round"] = b.round;
          j["name"] = b.name;
          j["hypothesis"] = b.hypothesis;
          j["rationale"] = b.rationale;
          j["candidate_type"] = to_string(b.candidate_type);
          j["recipe"] = b.recipe_text;
          j["source"] = b.source;
          j["status"] = b.status == CandidateStatus::evaluated ? "evaluated" : "rejected";
          j["rejection"] = b.rejection;
          j["metrics_train"] = b.metrics_train ? metrics_to_json(*b.metrics_train) : json(nullptr);
          j["metrics_validation"] = b.metrics_validation ? metrics_to_json(*b.metrics_validation) : json(nullptr);
          j["verdict"] = json{{"pass", b.verdict.pass}, {"reasons", b.verdict.reasons}};
          j["interpretation"] = b.interpretation;
        } else if constexpr (std::is_same_v<T, Amendment>) {
          j["kind"] = "amendment";
          j["round"] = b.round;
          j["target_seq"] = b.target_seq;
          j["interpretation"] = b.interpretation;
          j["author"] = b.author;
        } else if constexpr (std::is_same_v<T, RoundSummary>) {
          j["kind"] = "round_summary";
          j["round"] = b.round;
          j["scope"] = b.scope == SummaryScope::round ? "round" : "curation";
          j["text"] = b.text;
          j["decision"] = b.decision;
          j["pool_delta"] = json{{"hold", b.pool_delta.hold}, {"good", b.pool_delta.good}};
        } else {
          j["kind"] = "round_abort";
          j["round"] = b.round;
          j["reason"] = b.reason;
        }
      },
      e.body);
  return j;
}

TraceEntry entry_from_json(const json& j) {
  TraceEntry e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.prev_hash = j.at("prev_hash").get<std::string>();
  e.timestamp = j.at("timestamp").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "candidate") {
    CandidateRecord c;
    c.round = j.at("round").get<int>();
    c.name = j.at("name").get<std::string>();
    c.hypothesis = j.at("hypothesis").get<std::string>();
    c.rationale = j.at("rationale").get<std::string>();
    c.candidate_type = candidate_type_from_string(j.at("candidate_type").get<std::string>());
    c.recipe_text = j.at("recipe").get<std::string>();
    c.source = j.at("source").get<std::string>();
    const auto status = j.at("status").get<std::string>();
    if (status != "evaluated" && status != "rejected") throw std::invalid_argument("bad status");
    c.status = status == "evaluated" ? CandidateStatus::evaluated : CandidateStatus::rejected;
    c.rejection = j.at("rejection").get<std::vector<std::string>>();
    if (!j.at("metrics_train").is_null()) c.metrics_train = metrics_from_json(j.at("metrics_train"));
    if (!j.at("metrics_validation").is_null()) c.metrics_validation = metrics_from_json(j.at("metrics_validation"));
    c.verdict.pass = j.at("verdict").at("pass").get<bool>();
    c.verdict.reasons = j.at("verdict").at("reasons").get<std::vector<std::string>>();
    c.interpretation = j.at("interpretation").get<std::string>();
    e.body = std::move(c);
  } else if (kind == "amendment") {
    Amendment a;
    a.round = j.at("round").get<int>();
    a.target_seq = j.at("target_seq").get<std::uint64_t>();
    a.interpretation = j.at("interpretation").get<std::string>();
    a.author = j.at("author").get<std::string>();
    e.body = std::move(a);
  } else if (kind == "round_summary") {
    RoundSummary s;
    s.round = j.at("round").get<int>();
    s.scope = j.at("scope") == "curation" ? SummaryScope::curation : SummaryScope::round;
    s.text = j.at("text").get<std::string>();
    s.decision = j.at("decision").get<std::string>();
    s.pool_delta.hold = j.at("pool_delta").at("hold").get<std::vector<std::string>>();
    s.pool_delta.good = j.at("pool_delta").at("good").get<std::vector<std::string>>();
    e.body = std::move(s);
  } else if (kind == "round_abort") {
    RoundAbort a;
    a.round = j.at("round").get<int>();
    a.reason = j.at("reason").get<std::string>();
    e.body = std::move(a);
  } else {
    throw std::invalid_argument("unknown record kind '" + kind + "'");
  }
  return e;
}

// ---------------------------------------------------------------------------
// Integrity

TraceIntegrityError::TraceIntegrityError(IntegrityResult r)
    : TraceError("trace integrity failure: " + r.message), result_(std::move(r)) {}

IntegrityResult verify_integrity(std::string_view content) {
  IntegrityResult r;
  bool partial = false;
  const auto lines = split_lines(content, partial);
  auto fail_header = [&](std::string msg) {
    r.ok = false;
    r.header_ok = false;
    r.message = std::move(msg);
    return r;
  };
  if (lines.empty()) return fail_header("missing header");
  if (partial && lines.size() == 1) return fail_header("header line is incomplete");
  {
    const auto u = unseal(lines[0]);
    if (!u || sha256_hex(u->body_text) != u->hash) return fail_header("header hash mismatch");
    try {
      header_from_json(json::parse(u->body_text));
    } catch (const std::exception& e) {
      return fail_header(std::string("header is malformed: ") + e.what());
    }
  }
  std::string prev = kGenesisHash;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const std::uint64_t expected_seq = k - 1;
    const bool is_tail = partial && k + 1 == lines.size();
    std::string why;
    const auto u = unseal(lines[k]);
    if (!u) {
      why = "malformed record line";
    } else if (sha256_hex(u->body_text) != u->hash) {
      why = "hash mismatch";
    } else {
      try {
        const TraceEntry e = entry_from_json(json::parse(u->body_text));
        if (e.seq != expected_seq) why = "sequence gap";
        else if (e.prev_hash != prev) why = "broken chain";
      } catch (const std::exception& ex) {
        why = std::string("undecodable record: ") + ex.what();
      }
    }
    if (is_tail && why.empty()) why = "record is missing its line terminator";
    if (!why.empty()) {
      r.ok = false;
      r.first_bad_seq = expected_seq;
      r.partial_tail = is_tail;
      r.message = "seq " + std::to_string(expected_seq) + ": " + why;
      return r;
    }
    prev = u->hash;
    ++r.valid_records;
  }
  r.message = "ok";
  return r;
}

// ---------------------------------------------------------------------------
// Storage

std::string FileTraceStorage::read_all() const {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return {};
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void FileTraceStorage::append(std::string_view bytes) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw TraceError("cannot open trace '" + path_.string() + "' for append");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw TraceError("write to trace '" + path_.string() + "' failed");
}

void FileTraceStorage::truncate(std::size_t size) { std::filesystem::resize_file(path_, size); }

std::size_t FileTraceStorage::size() const {
  std::error_code ec;
  const auto s = std::filesystem::file_size(path_, ec);
  return ec ? 0 : static_cast<std::size_t>(s);
}

// ---------------------------------------------------------------------------
// TraceLog

TraceLog TraceLog::create(std::unique_ptr<TraceStorage> storage, TraceHeader header) {
  if (storage->size() != 0) throw TraceError("refusing to create a trace over existing content");
  header.gate.validate();
  header.split.validate();
  TraceLog log;
  const std::string line = seal(header_body(header), header.hash);
  storage->append(line);
  log.storage_ = std::move(storage);
  log.header_ = std::move(header);
  log.known_size_ = log.storage_->size();
  return log;
}

TraceLog TraceLog::open(std::unique_ptr<TraceStorage> storage, bool recover_partial_tail) {
  std::string content = storage->read_all();
  IntegrityResult r = verify_integrity(content);
  if (!r.ok && recover_partial_tail && r.header_ok && r.partial_tail) {
    const std::size_t keep = content.rfind('\n') + 1;
    storage->truncate(keep);
    content.resize(keep);
    r = verify_integrity(content);
  }
  if (!r.ok) throw TraceIntegrityError(r);

  TraceLog log;
  bool partial = false;
  const auto lines = split_lines(content, partial);
  const auto hu = unseal(lines[0]);
  log.header_ = header_from_json(json::parse(hu->body_text));
  log.header_.hash = hu->hash;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto u = unseal(lines[k]);
    TraceEntry e = entry_from_json(json::parse(u->body_text));
    e.hash = u->hash;
    if (const auto* c = std::get_if<CandidateRecord>(&e.body)) log.names_.insert(c->name);
    log.head_hash_ = e.hash;
    log.entries_.push_back(std::move(e));
  }
  log.storage_ = std::move(storage);
  log.known_size_ = content.size();
  return log;
}

std::optional<std::uint64_t> TraceLog::head_seq() const {
  if (entries_.empty()) return std::nullopt;
  return entries_.back().seq;
}

std::string TraceLog::timestamp_for(std::uint64_t seq) const {
  if (header_.clock == ClockMode::logical) {
    return format_instant(parse_instant(header_.epoch) + std::chrono::seconds(static_cast<long long>(seq) + 1));
  }
  return format_instant(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

std::uint64_t TraceLog::append(TraceEntry entry) {
  if (entry.seq != next_seq()) {
    throw TraceError("append: expected seq " + std::to_string(next_seq()) + ", got " + std::to_string(entry.seq));
  }
  if (entry.prev_hash != head_hash_) throw TraceError("append: stale prev_hash (head moved or record forged)");
  if (storage_->size() != known_size_) throw TraceError("append: trace changed on disk since it was opened");
  if (const auto* c = std::get_if<CandidateRecord>(&entry.body)) {
    if (c->name.empty()) throw TraceError("append: candidate name is empty");
    if (names_.count(c->name)) throw TraceError("append: duplicate candidate name '" + c->name + "'");
  }
  const std::string line = seal(entry_body_to_json(entry), entry.hash);
  storage_->append(line);
  known_size_ += line.size();
  if (const auto* c = std::get_if<CandidateRecord>(&entry.body)) names_.insert(c->name);
  head_hash_ = entry.hash;
  entries_.push_back(std::move(entry));
  return entries_.back().seq;
}

std::uint64_t TraceLog::append_next(RecordBody body) {
  TraceEntry e;
  e.seq = next_seq();
  e.prev_hash = head_hash_;
  e.timestamp = timestamp_for(e.seq);
  e.body = std::move(body);
  return append(std::move(e));
}

const StateCandidate* ResearchState::find(std::string_view name) const {
  for (const auto& c : candidates)
    if (c.record.name == name) return &c;
  return nullptr;
}

std::set<std::string> ResearchState::names() const {
  std::set<std::string> out;
  for (const auto& c : candidates) out.insert(c.record.name);
  return out;
}

ResearchState TraceLog::read_state() const {
  ResearchState s;
  std::map<std::uint64_t, std::size_t> by_seq;
  std::vector<std::string> good;
  for (const auto& e : entries_) {
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          s.last_round = std::max(s.last_round, b.round);
          if constexpr (std::is_same_v<T, CandidateRecord>) {
            by_seq[e.seq] = s.candidates.size();
            s.candidates.push_back({e.seq, b});
          } else if constexpr (std::is_same_v<T, Amendment>) {
            if (auto it = by_seq.find(b.target_seq); it != by_seq.end()) {
              s.candidates[it->second].record.interpretation = b.interpretation;
            }
          } else if constexpr (std::is_same_v<T, RoundSummary>) {
            if (b.scope == SummaryScope::curation) good = b.pool_delta.good;
            s.summaries.push_back(b);
          } else {
            s.aborted_rounds.insert(b.round);
          }
        },
        e.body);
  }
  std::set<std::string> hold_set;
  for (const auto& c : s.candidates) {
    const auto& r = c.record;
    if (r.status == CandidateStatus::evaluated && r.verdict.pass && !s.aborted_rounds.count(r.round)) {
      s.pools.hold.push_back(r.name);
      hold_set.insert(r.name);
    }
  }
  for (const auto& g : good)
    if (hold_set.count(g)) s.pools.good.push_back(g);
  return s;
}

}  // namespace factorlab
