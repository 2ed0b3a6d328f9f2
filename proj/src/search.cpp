#include "factorlab/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "factorlab/combine.hpp"

namespace factorlab {

namespace {

std::string fixed(double v, int digits = 4) {
  if (is_missing(v)) return std::isinf(v) ? (v > 0 ? "inf" : "-inf") : "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string join(const std::vector<std::string>& items, const char* sep = ", ") {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k) out += sep;
    out += items[k];
  }
  return out;
}

std::string default_interpretation(const CandidateRecord& r) {
  if (r.status == CandidateStatus::rejected) return "Not evaluated: " + join(r.rejection, "; ") + ".";
  const auto& m = *r.metrics_train;
  std::string text = "Train mean IC " + fixed(m.mean_ic) + ", t " + fixed(m.ic_tstat, 2) + " over " +
                     std::to_string(m.n_days) + " days, coverage " + fixed(m.coverage, 3) + ". ";
  if (r.verdict.pass) {
    text += "Passes the gate";
    if (m.mean_ic > 0 && m.ls_sharpe > 0) text += " with a positive long-short spread";
    text += ".";
  } else {
    text += "Fails the gate on " + join(r.verdict.reasons) + ".";
  }
  if (r.metrics_validation && !is_missing(r.metrics_validation->mean_ic)) {
    text += " Validation mean IC " + fixed(r.metrics_validation->mean_ic) + " (diagnostic only).";
  }
  return text;
}

// Mechanical candidates are interpreted with the default text.
class MechanicalSource : public AgentAdapter {
 public:
  std::string name() const override { return "mechanical"; }
  ProposalBatch propose(const ResearchState&, int, std::size_t) override { return {}; }
};

struct Sourced {
  CandidateProposal proposal;
  std::string source;
  std::string malformed;  // non-empty when the block could not be read
};

}  // namespace

std::string AgentAdapter::interpret(const CandidateRecord& record) { return default_interpretation(record); }

std::string AgentAdapter::decide(const ResearchState& state, int round) {
  return "Round " + std::to_string(round + 1) + ": continue with " + std::to_string(state.pools.hold.size()) +
         " factors in the hold pool.";
}

// --- stub agent -------------------------------------------------------------

StubAgent::StubAgent(StubAgentConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.columns.empty() && cfg_.focus_columns.empty()) throw ConfigError("stub agent needs at least one column");
  if (cfg_.columns.empty()) cfg_.columns = cfg_.focus_columns;
}

ProposalBatch StubAgent::propose(const ResearchState& state, int round, std::size_t batch) {
  (void)state;
  Rng rng(derive_seed(cfg_.seed, "stub-round-" + std::to_string(round)));
  auto pick_column = [&]() -> std::string {
    if (!cfg_.focus_columns.empty() && rng.uniform() < cfg_.focus_probability) {
      return cfg_.focus_columns[rng.index(cfg_.focus_columns.size())];
    }
    return cfg_.columns[rng.index(cfg_.columns.size())];
  };
  static constexpr int kWindows[] = {3, 5, 10, 20};
  static constexpr int kSteps[] = {1, 3, 5};

  ProposalBatch out;
  for (std::size_t j = 0; j < batch; ++j) {
    const std::string c = pick_column();
    const int w = kWindows[rng.index(4)];
    const int n = kSteps[rng.index(3)];
    dsl::ExprPtr e;
    std::string tag;
    std::string mechanism;
    switch (rng.index(8)) {
      case 0:
        e = dsl::roll_mean(w, dsl::col(c));
        tag = "ma" + std::to_string(w);
        mechanism = std::to_string(w) + "-day average level of " + c;
        break;
      case 1:
        e = dsl::cs_rank(dsl::roll_mean(w, dsl::col(c)));
        tag = "rkma" + std::to_string(w);
        mechanism = "cross-sectional rank of the " + std::to_string(w) + "-day average of " + c;
        break;
      case 2:
        e = dsl::diff(n, dsl::col(c));
        tag = "d" + std::to_string(n);
        mechanism = std::to_string(n) + "-day change in " + c;
        break;
      case 3:
        e = dsl::pct_change(n, dsl::col(c));
        tag = "pc" + std::to_string(n);
        mechanism = std::to_string(n) + "-day percentage change in " + c;
        break;
      case 4:
        e = dsl::roll_std(w, dsl::col(c));
        tag = "sd" + std::to_string(w);
        mechanism = std::to_string(w) + "-day variability of " + c;
        break;
      case 5:
        e = dsl::clip(-3.0, 3.0, dsl::cs_zscore(dsl::lag(1, dsl::col(c))));
        tag = "zl1";
        mechanism = "clipped cross-sectional z-score of yesterday's " + c;
        break;
      case 6: {
        const std::string c2 = pick_column();
        const double a = 0.25 + 0.75 * rng.uniform();
        const double b = 1.0 - a;
        e = dsl::lincomb({{a, dsl::cs_rank(dsl::roll_mean(w, dsl::col(c)))},
                          {b, dsl::cs_rank(dsl::diff(n, dsl::col(c2)))}});
        tag = "mix_" + c2;
        mechanism = "blend of the smoothed rank of " + c + " and the recent change in " + c2;
        break;
      }
      default:
        e = dsl::log1p(dsl::abs(dsl::col(c)));
        tag = "la";
        mechanism = "log magnitude of " + c;
        break;
    }
    const bool negate = rng.uniform() < 0.5;
    if (negate) e = dsl::lincomb({{-1.0, e}});

    CandidateProposal p;
    p.name = "h" + std::to_string(round) + "_" + std::to_string(j) + "_" + tag + "_" + c + (negate ? "_neg" : "");
    p.hypothesis = std::string("Assets with ") + (negate ? "lower " : "higher ") + mechanism +
                   " earn higher next-period returns.";
    p.rationale = "Template sample: the " + mechanism + " may carry persistent information about " + c +
                  " that prices absorb with a delay.";
    p.candidate_type = CandidateType::hypothesis;
    p.recipe_text = dsl::canonical_form(*e);
    out.proposals.push_back(std::move(p));
  }
  return out;
}

std::string StubAgent::decide(const ResearchState& state, int round) {
  const StateCandidate* best = nullptr;
  for (const auto& c : state.candidates) {
    const auto& r = c.record;
    if (!r.verdict.pass || !r.metrics_train) continue;
    if (!best || r.metrics_train->mean_ic > best->record.metrics_train->mean_ic) best = &c;
  }
  std::string text = "Round " + std::to_string(round + 1) + ": keep sampling templates";
  if (!cfg_.focus_columns.empty()) text += " with emphasis on " + join(cfg_.focus_columns);
  if (best) text += "; strongest so far " + best->record.name + " (mean IC " + fixed(best->record.metrics_train->mean_ic) + ")";
  return text + ".";
}

// --- reply parsing ------------------------------------------------------------

ProposalBatch parse_proposal_blocks(std::string_view reply) {
  ProposalBatch out;
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    const std::size_t nl = reply.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? reply.size() : nl;
    std::string_view line = reply.substr(pos, end - pos);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }

  bool inside = false;
  CandidateProposal cur;
  std::vector<std::string> problems;
  std::set<std::string> seen;
  auto finish = [&](bool terminated) {
    if (!terminated) problems.emplace_back("block not terminated by ### END");
    for (const char* field : {"name", "hypothesis", "rationale", "type", "recipe"}) {
      if (!seen.count(field)) problems.push_back(std::string("missing field: ") + field);
    }
    if (problems.empty()) {
      out.proposals.push_back(cur);
    } else {
      out.malformed.push_back({cur, join(problems, "; ")});
    }
    cur = {};
    problems.clear();
    seen.clear();
  };

  for (std::string_view line : lines) {
    if (line == "### CANDIDATE") {
      if (inside) finish(false);
      inside = true;
      continue;
    }
    if (!inside) continue;
    if (line == "### END") {
      finish(true);
      inside = false;
      continue;
    }
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      problems.push_back("unreadable line: " + std::string(line));
      continue;
    }
    std::string key(line.substr(0, colon));
    std::string_view value = line.substr(colon + 1);
    while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (seen.count(key)) {
      problems.push_back("repeated field: " + key);
      continue;
    }
    if (value.empty()) {
      problems.push_back("empty field: " + key);
      seen.insert(key);
      continue;
    }
    const std::string v(value);
    if (key == "name") {
      cur.name = v;
    } else if (key == "hypothesis") {
      cur.hypothesis = v;
    } else if (key == "rationale") {
      cur.rationale = v;
    } else if (key == "type") {
      try {
        cur.candidate_type = candidate_type_from_string(v);
      } catch (const std::exception&) {
        problems.push_back("unknown candidate type: " + v);
      }
    } else if (key == "recipe") {
      cur.recipe_text = v;
    } else {
      problems.push_back("unknown field: " + key);
      continue;
    }
    seen.insert(key);
  }
  if (inside) finish(false);
  return out;
}

// --- mechanical variants ------------------------------------------------------

std::vector<CandidateProposal> mechanical_variants(const PoolState& pools, const ResearchState& state,
                                                   std::size_t k) {
  struct Ranked {
    const CandidateRecord* record;
    double mean_ic;
  };
  std::vector<Ranked> ranked;
  for (const auto& name : pools.hold) {
    const StateCandidate* c = state.find(name);
    if (!c || !c->record.verdict.pass || !c->record.metrics_train) continue;
    ranked.push_back({&c->record, c->record.metrics_train->mean_ic});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.mean_ic != b.mean_ic) return a.mean_ic > b.mean_ic;
    return a.record->name < b.record->name;
  });
  if (ranked.size() > k) ranked.resize(k);

  const std::set<std::string> taken = state.names();
  std::vector<CandidateProposal> out;
  for (const auto& r : ranked) {
    const dsl::ExprPtr base = dsl::parse_recipe(r.record->recipe_text);
    const std::string& b = r.record->name;
    const struct {
      const char* suffix;
      dsl::ExprPtr expr;
      const char* what;
    } variants[] = {
        {"__lag1", dsl::lag(1, base), "one-day lag"},
        {"__ma3", dsl::roll_mean(3, base), "3-day rolling mean"},
        {"__csz", dsl::cs_zscore(base), "cross-sectional z-score"},
    };
    for (const auto& v : variants) {
      CandidateProposal p;
      p.name = b + v.suffix;
      if (taken.count(p.name)) continue;
      p.hypothesis = "The " + std::string(v.what) + " of " + b + " keeps its predictive sign.";
      p.rationale = "Local variant of passed factor " + b + "; checks robustness to timing, smoothing and scale.";
      p.candidate_type = CandidateType::mechanical;
      p.recipe_text = dsl::canonical_form(*v.expr);
      out.push_back(std::move(p));
    }
  }
  return out;
}

// --- rounds -------------------------------------------------------------------

std::string RoundReport::to_text() const {
  std::string text = "Round " + std::to_string(round) + ": " + std::to_string(proposed) + " proposed, " +
                     std::to_string(rejected) + " rejected, " + std::to_string(evaluated) + " evaluated, " +
                     std::to_string(passed) + " passed";
  if (!passed_names.empty()) text += " (" + join(passed_names) + ")";
  text += ".";
  if (!dropped.empty()) text += " Dropped duplicate names: " + join(dropped) + ".";
  if (!agent_errors.empty()) text += " Agent errors: " + join(agent_errors, "; ") + ".";
  return text;
}

void check_protocol(const TraceHeader& header, const GateConfig& gate, const SplitConfig& split) {
  if (!(header.gate == gate)) throw ProtocolFrozenError("protocol frozen: gate differs from the trace header");
  if (!(header.split == split)) throw ProtocolFrozenError("protocol frozen: split differs from the trace header");
}

Matrix tradable_scores(const dsl::Expr& e, const Panel& panel) {
  Matrix s = dsl::evaluate(e, panel);
  const Mask& m = panel.tradable();
  for (std::size_t i = 0; i < s.n_assets(); ++i)
    for (std::size_t t = 0; t < s.n_dates(); ++t)
      if (!m(i, t)) s(i, t) = kMissing;
  return s;
}

RoundReport run_round(TraceLog& log, const RoundInputs& in, std::span<AgentAdapter* const> agents) {
  check_protocol(log.header(), in.gate, in.split);
  const ResearchState state = log.read_state();
  const int round = state.last_round + 1;
  RoundReport report;
  report.round = round;

  std::vector<Sourced> items;
  if (in.batch.mechanical > 0) {
    auto mech = mechanical_variants(state.pools, state, state.pools.hold.size());
    if (mech.size() > in.batch.mechanical) mech.resize(in.batch.mechanical);
    for (auto& p : mech) items.push_back({std::move(p), "mechanical", {}});
  }
  for (AgentAdapter* agent : agents) {
    if (in.batch.hypothesis == 0) break;
    try {
      ProposalBatch b = agent->propose(state, round, in.batch.hypothesis);
      for (auto& p : b.proposals) items.push_back({std::move(p), agent->name(), {}});
      for (auto& m : b.malformed) items.push_back({std::move(m.partial), agent->name(), m.reason});
    } catch (const std::exception& ex) {
      report.agent_errors.push_back(agent->name() + ": " + ex.what());
    }
  }

  const std::set<std::string> allowed = dsl::approved_columns(*in.panel);
  std::set<std::string> taken = state.names();
  std::vector<CandidateRecord> records;
  for (std::size_t idx = 0; idx < items.size(); ++idx) {
    const Sourced& it = items[idx];
    const CandidateProposal& p = it.proposal;
    ++report.proposed;
    CandidateRecord rec;
    rec.round = round;
    rec.name = p.name.empty() ? "unnamed_r" + std::to_string(round) + "_" + std::to_string(idx) : p.name;
    if (taken.count(rec.name)) {
      report.dropped.push_back(rec.name);
      continue;
    }
    taken.insert(rec.name);
    rec.hypothesis = p.hypothesis;
    rec.rationale = p.rationale;
    rec.candidate_type = p.candidate_type;
    rec.recipe_text = p.recipe_text;
    rec.source = it.source;

    std::vector<std::string> reasons;
    if (!it.malformed.empty()) reasons.push_back("malformed proposal: " + it.malformed);
    if (p.name.empty()) reasons.emplace_back("missing field: name");
    if (p.hypothesis.empty()) reasons.emplace_back("missing field: hypothesis");
    if (p.rationale.empty()) reasons.emplace_back("missing field: rationale");
    if (p.recipe_text.empty()) reasons.emplace_back("missing field: recipe");

    dsl::ExprPtr expr;
    if (reasons.empty()) {
      try {
        expr = dsl::parse_recipe(p.recipe_text);
      } catch (const dsl::RecipeParseError& ex) {
        reasons.push_back(std::string("parse error at byte ") + std::to_string(ex.offset()) + ": " + ex.what());
      }
    }
    if (expr) {
      const auto v = dsl::validate(*expr, allowed, in.max_depth);
      for (const auto& viol : v.violations) reasons.push_back(viol.rule + " at " + viol.path + ": " + viol.message);
    }

    if (!reasons.empty()) {
      rec.status = CandidateStatus::rejected;
      rec.rejection = std::move(reasons);
      rec.verdict = {false, {"rejected"}};
      ++report.rejected;
    } else {
      rec.recipe_text = dsl::canonical_form(*expr);
      const Matrix scores = dsl::evaluate(*expr, *in.panel);
      const Mask& tradable = in.panel->tradable();
      rec.metrics_train = evaluate_signal(scores, *in.targets, tradable, in.splits.train, in.eval);
      rec.metrics_validation = evaluate_signal(scores, *in.targets, tradable, in.splits.validation, in.eval);
      rec.verdict = apply_gate(*rec.metrics_train, in.gate);
      ++report.evaluated;
      if (rec.verdict.pass) {
        ++report.passed;
        report.passed_names.push_back(rec.name);
      }
    }
    records.push_back(std::move(rec));
  }

  MechanicalSource mechanical;
  auto interpreter_for = [&](const std::string& source) -> AgentAdapter& {
    for (AgentAdapter* a : agents)
      if (a->name() == source) return *a;
    return mechanical;
  };

  try {
    std::vector<std::uint64_t> seqs;
    for (const auto& rec : records) seqs.push_back(log.append_next(rec));
    for (std::size_t k = 0; k < records.size(); ++k) {
      Amendment a;
      a.round = round;
      a.target_seq = seqs[k];
      a.author = records[k].source;
      a.interpretation = interpreter_for(records[k].source).interpret(records[k]);
      log.append_next(a);
    }
    RoundSummary s;
    s.round = round;
    s.scope = SummaryScope::round;
    s.text = report.to_text();
    const ResearchState after = log.read_state();
    s.decision = agents.empty() ? mechanical.decide(after, round) : agents.front()->decide(after, round);
    s.pool_delta.hold = report.passed_names;
    log.append_next(s);
  } catch (const std::exception& ex) {
    try {
      log.append_next(RoundAbort{round, ex.what()});
    } catch (const std::exception&) {
    }
    throw TraceError("round " + std::to_string(round) + " aborted: " + ex.what());
  }
  return report;
}

// --- curation -----------------------------------------------------------------

double pooled_correlation(const Matrix& a, const Matrix& b, std::span<const std::size_t> dates) {
  double sa = 0.0, sb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.n_assets(); ++i) {
    for (std::size_t t : dates) {
      if (is_missing(a(i, t)) || is_missing(b(i, t))) continue;
      sa += a(i, t);
      sb += b(i, t);
      ++n;
    }
  }
  if (n < 2) return kMissing;
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.n_assets(); ++i) {
    for (std::size_t t : dates) {
      if (is_missing(a(i, t)) || is_missing(b(i, t))) continue;
      const double da = a(i, t) - ma;
      const double db = b(i, t) - mb;
      saa += da * da;
      sbb += db * db;
      sab += da * db;
    }
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return kMissing;
  return finite_or_missing(sab / std::sqrt(saa * sbb));
}

std::vector<std::string> curate(std::vector<CurationCandidate> candidates, double corr_threshold,
                                std::size_t max_size, std::span<const std::size_t> dates) {
  std::sort(candidates.begin(), candidates.end(), [](const CurationCandidate& a, const CurationCandidate& b) {
    const bool am = is_missing(a.mean_ic), bm = is_missing(b.mean_ic);
    if (am != bm) return bm;
    if (!am && a.mean_ic != b.mean_ic) return a.mean_ic > b.mean_ic;
    return a.name < b.name;
  });
  std::vector<const CurationCandidate*> admitted;
  for (const auto& c : candidates) {
    if (admitted.size() >= max_size) break;
    bool ok = true;
    for (const CurationCandidate* g : admitted) {
      const double r = pooled_correlation(c.standardized, g->standardized, dates);
      if (!is_missing(r) && !(std::fabs(r) < corr_threshold)) {
        ok = false;
        break;
      }
    }
    if (ok) admitted.push_back(&c);
  }
  std::vector<std::string> out;
  for (const auto* g : admitted) out.push_back(g->name);
  return out;
}

PoolState curate_good_pool(TraceLog& log, const RoundInputs& in, const CurationSettings& settings) {
  check_protocol(log.header(), in.gate, in.split);
  const ResearchState state = log.read_state();
  if (state.pools.hold.empty()) throw DataError("curation: the hold pool is empty");

  std::vector<CurationCandidate> cands;
  for (const auto& name : state.pools.hold) {
    const CandidateRecord& r = state.find(name)->record;
    const auto expr = dsl::parse_recipe(r.recipe_text);
    cands.push_back({name, r.metrics_train->mean_ic, standardize_by_date(tradable_scores(*expr, *in.panel))});
  }
  PoolState pools;
  pools.hold = state.pools.hold;
  pools.good = curate(std::move(cands), settings.corr_threshold, settings.max_size, in.splits.train);

  RoundSummary s;
  s.round = state.last_round;
  s.scope = SummaryScope::curation;
  s.text = "Curated " + std::to_string(pools.good.size()) + " of " + std::to_string(pools.hold.size()) +
           " hold factors (|corr| < " + format_double(settings.corr_threshold) + ", max " +
           std::to_string(settings.max_size) + ").";
  s.decision = "Fit the combination model on the good pool.";
  s.pool_delta.good = pools.good;
  log.append_next(s);
  return pools;
}

}  // namespace factorlab
