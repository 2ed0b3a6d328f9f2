#include "factorlab/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "factorlab/digest.hpp"

namespace factorlab {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << bytes;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string backtest_file(Window w, Weighting weighting) {
  return std::string("backtest_") + window_name(w) + "_" + to_string(weighting) + ".csv";
}

std::string fee_sweep_file(Window w) { return std::string("fee_sweep_") + window_name(w) + ".csv"; }

namespace {

constexpr Window kWindows[] = {Window::train, Window::validation, Window::oos};
constexpr Weighting kWeightings[] = {Weighting::equal, Weighting::cap};

fs::path out_path(const SessionConfig& cfg, const std::string& name) { return cfg.resolved_output_dir() / name; }

void require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw DependencyError(p.filename().string() + " not found; run " + what + " first");
}

std::vector<Date> dates_at(const Panel& panel, const std::vector<std::size_t>& idx) {
  std::vector<Date> out;
  out.reserve(idx.size());
  for (std::size_t t : idx) out.push_back(panel.dates()[t]);
  return out;
}

std::vector<double> cumulative(const std::vector<double>& r) {
  auto w = wealth_path(r);
  for (double& x : w) x -= 1.0;
  return w;
}

RidgeModel load_model(const SessionConfig& cfg) {
  const fs::path p = out_path(cfg, artifact::kModel);
  require(p, "combine");
  try {
    return RidgeModel::from_json(json::parse(read_file(p)));
  } catch (const json::exception& ex) {
    throw DataError("model.json is unreadable: " + std::string(ex.what()));
  }
}

void check_model_trace(const SessionConfig& cfg, const RidgeModel& model) {
  const fs::path p = out_path(cfg, artifact::kTrace);
  if (!fs::exists(p)) return;
  const TraceLog log = TraceLog::open(std::make_unique<FileTraceStorage>(p), false);
  if (log.header().hash != model.trace_header_hash) {
    throw DependencyError("model.json was fitted against a different trace; run combine again");
  }
}

std::string csv_to_markdown(const std::string& csv) {
  std::string out;
  std::istringstream in(csv);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    out += "|";
    for (std::size_t k = 0; k < cells.size(); ++k) {
      std::string c = cells[k];
      if (!header && k > 0) {
        char* end = nullptr;
        const double v = std::strtod(c.c_str(), &end);
        if (end && *end == '\0' && std::isfinite(v)) {
          char buf[48];
          std::snprintf(buf, sizeof buf, "%.4f", v);
          c = buf;
        }
      }
      out += " " + c + " |";
    }
    out += "\n";
    if (header) {
      out += "|";
      for (std::size_t k = 0; k < cells.size(); ++k) out += "---|";
      out += "\n";
      header = false;
    }
  }
  return out;
}

}  // namespace

RoundInputs SessionData::round_inputs(const SessionConfig& cfg) const {
  RoundInputs in;
  in.panel = &panel;
  in.targets = &targets;
  in.splits = splits;
  in.gate = cfg.gate;
  in.split = cfg.split;
  in.eval = SignalEvalSettings{cfg.gate.min_names_per_day, cfg.ls_quantile};
  in.max_depth = cfg.max_depth;
  in.batch = cfg.batch;
  return in;
}

IngestOutcome cmd_ingest(const SessionConfig& cfg) {
  cfg.validate();
  LoadResult loaded = load_panel(cfg.resolved_data_path(), cfg.schema);
  Panel panel = filter_universe(loaded.panel, cfg.filter);
  panel = compute_derived(panel, cfg.derived);
  const fs::path cache = out_path(cfg, artifact::kPanel);
  fs::create_directories(cache.parent_path());
  write_panel_cache(panel, cache);
  write_file(out_path(cfg, artifact::kIngestReport), loaded.report.to_jsonl());
  return {loaded.report, sha256_hex(read_file(cache))};
}

SessionData load_session_data(const SessionConfig& cfg) {
  const fs::path cache = out_path(cfg, artifact::kPanel);
  require(cache, "ingest");
  SessionData d;
  d.panel = read_panel_cache(cache);
  d.targets = forward_return(d.panel, cfg.exec_lag, cfg.hold);
  d.splits = split(d.panel, cfg.split);
  return d;
}

TraceLog open_session_trace(const SessionConfig& cfg) {
  const fs::path p = out_path(cfg, artifact::kTrace);
  if (!fs::exists(p) || fs::file_size(p) == 0) {
    fs::create_directories(p.parent_path());
    TraceHeader h;
    h.config_digest = cfg.digest();
    h.seed = cfg.seed;
    h.clock = cfg.clock;
    h.epoch = cfg.epoch;
    h.gate = cfg.gate;
    h.split = cfg.split;
    h.protocol = cfg.to_json();
    h.protocol.erase("output_dir");
    return TraceLog::create(std::make_unique<FileTraceStorage>(p), std::move(h));
  }
  TraceLog log = TraceLog::open(std::make_unique<FileTraceStorage>(p));
  if (log.header().config_digest != cfg.digest()) {
    throw ProtocolFrozenError("protocol frozen: session config digest " + cfg.digest() +
                              " differs from the trace header " + log.header().config_digest);
  }
  return log;
}

std::unique_ptr<AgentAdapter> make_agent(const SessionConfig& cfg, const Panel& panel) {
  const auto approved = dsl::approved_columns(panel);
  std::vector<std::string> columns(approved.begin(), approved.end());
  if (cfg.agent.kind == "remote") {
    RemoteAgentConfig rc;
    rc.endpoint = cfg.agent.endpoint;
    rc.model = cfg.agent.model;
    rc.api_key_env = cfg.agent.api_key_env;
    rc.timeout = std::chrono::seconds(cfg.agent.timeout_seconds);
    rc.sidecar = out_path(cfg, artifact::kAgentLog);
    rc.columns = std::move(columns);
    return std::make_unique<RemoteAgent>(std::move(rc));
  }
  StubAgentConfig sc;
  sc.seed = cfg.agent.seed ? *cfg.agent.seed : derive_seed(cfg.seed, "stub-agent");
  for (const auto& c : cfg.agent.focus_columns) {
    if (!approved.count(c)) throw ConfigError("agent.focus_columns: '" + c + "' is not a panel column");
  }
  sc.columns = std::move(columns);
  sc.focus_columns = cfg.agent.focus_columns;
  sc.focus_probability = cfg.agent.focus_probability;
  return std::make_unique<StubAgent>(std::move(sc));
}

RoundReport cmd_round(const SessionConfig& cfg) {
  const SessionData data = load_session_data(cfg);
  TraceLog log = open_session_trace(cfg);
  const ResearchState state = log.read_state();
  if (state.last_round >= cfg.rounds) {
    throw ConfigError("round budget of " + std::to_string(cfg.rounds) + " is spent");
  }
  auto agent = make_agent(cfg, data.panel);
  AgentAdapter* agents[] = {agent.get()};
  return run_round(log, data.round_inputs(cfg), agents);
}

PoolState cmd_curate(const SessionConfig& cfg) {
  const SessionData data = load_session_data(cfg);
  require(out_path(cfg, artifact::kTrace), "round");
  TraceLog log = open_session_trace(cfg);
  return curate_good_pool(log, data.round_inputs(cfg), cfg.curation);
}

Matrix model_scores(const RidgeModel& model, const Panel& panel) {
  if (model.recipes.size() != model.factor_names.size()) throw DataError("model recipes and names differ in count");
  std::vector<Matrix> raw;
  for (const auto& r : model.recipes) raw.push_back(tradable_scores(*dsl::parse_recipe(r), panel));
  return composite_score(model, make_factor_matrix(model.factor_names, raw));
}

RidgeModel cmd_combine(const SessionConfig& cfg) {
  const SessionData data = load_session_data(cfg);
  require(out_path(cfg, artifact::kTrace), "round");
  const TraceLog log = open_session_trace(cfg);
  const ResearchState state = log.read_state();
  if (state.pools.good.empty()) throw DependencyError("good pool is empty; run curate first");

  std::vector<std::string> recipes;
  std::vector<Matrix> raw;
  for (const auto& name : state.pools.good) {
    const std::string& text = state.find(name)->record.recipe_text;
    recipes.push_back(text);
    raw.push_back(tradable_scores(*dsl::parse_recipe(text), data.panel));
  }
  const FactorMatrix f = make_factor_matrix(state.pools.good, raw);
  RidgeModel model = fit_ridge(f, data.targets, cfg.ridge_lambda, data.splits.train, data.panel.dates());
  model.recipes = std::move(recipes);
  model.trace_header_hash = log.header().hash;
  write_file(out_path(cfg, artifact::kModel), model.to_json().dump(2) + "\n");
  return model;
}

std::vector<fs::path> cmd_backtest(const SessionConfig& cfg) {
  const SessionData data = load_session_data(cfg);
  const RidgeModel model = load_model(cfg);
  check_model_trace(cfg, model);
  const Matrix scores = model_scores(model, data.panel);
  const Matrix& mcap = data.panel.column(col::kMcap);

  std::vector<fs::path> written;
  for (Window w : kWindows) {
    for (Weighting wt : kWeightings) {
      PortfolioConfig pc = cfg.portfolio;
      pc.weighting = wt;
      const BacktestResult r =
          run_backtest(scores, data.targets, mcap, data.panel.tradable(), data.splits.get(w), pc);
      const fs::path csv = out_path(cfg, backtest_file(w, wt));
      write_file(csv, r.report.to_csv());
      written.push_back(csv);

      std::vector<std::string> series;
      std::vector<std::vector<double>> values;
      for (std::size_t k = 0; k < r.group_net.size(); ++k) {
        series.push_back("Q" + std::to_string(k));
        values.push_back(cumulative(r.group_net[k]));
      }
      series.emplace_back("L-S");
      values.push_back(cumulative(r.ls_net));
      series.emplace_back("benchmark");
      values.push_back(cumulative(r.benchmark));
      const fs::path paths =
          out_path(cfg, std::string("paths_") + window_name(w) + "_" + to_string(wt) + ".csv");
      write_file(paths, paths_to_csv(dates_at(data.panel, r.groups.dates), series, values));
      written.push_back(paths);
    }
  }
  return written;
}

std::vector<fs::path> cmd_fee_sweep(const SessionConfig& cfg) {
  const SessionData data = load_session_data(cfg);
  const RidgeModel model = load_model(cfg);
  check_model_trace(cfg, model);
  const Matrix scores = model_scores(model, data.panel);

  std::vector<fs::path> written;
  for (Window w : kWindows) {
    PortfolioConfig pc = cfg.portfolio;
    pc.weighting = Weighting::equal;
    const BacktestResult r = run_backtest(scores, data.targets, data.panel.column(col::kMcap), data.panel.tradable(),
                                          data.splits.get(w), pc);
    const FeeSweep sweep = fee_sweep(r.ls_gross, r.ls_turnover, r.benchmark, cfg.fees);
    const fs::path csv = out_path(cfg, fee_sweep_file(w));
    write_file(csv, sweep.to_csv());
    written.push_back(csv);

    std::vector<std::string> series;
    for (double f : cfg.fees) series.push_back("fee=" + format_double(f));
    const fs::path paths = out_path(cfg, std::string("fee_paths_") + window_name(w) + ".csv");
    write_file(paths, paths_to_csv(dates_at(data.panel, r.groups.dates), series, sweep.cumulative));
    written.push_back(paths);
  }
  return written;
}

fs::path cmd_report(const SessionConfig& cfg) {
  for (Window w : kWindows)
    for (Weighting wt : kWeightings) require(out_path(cfg, backtest_file(w, wt)), "backtest");
  require(out_path(cfg, artifact::kModel), "combine");
  const fs::path trace_path = out_path(cfg, artifact::kTrace);
  require(trace_path, "round");

  const std::string trace_bytes = read_file(trace_path);
  const IntegrityResult integrity = verify_integrity(trace_bytes);
  const TraceLog log = TraceLog::open(std::make_unique<FileTraceStorage>(trace_path), false);
  const ResearchState state = log.read_state();
  const RidgeModel model = load_model(cfg);

  std::size_t evaluated = 0, rejected = 0, passed = 0;
  for (const auto& c : state.candidates) {
    if (c.record.status == CandidateStatus::rejected) {
      ++rejected;
    } else {
      ++evaluated;
      if (c.record.verdict.pass) ++passed;
    }
  }

  std::string md = "# Factor search report\n\n";
  md += "- config digest: `" + cfg.digest() + "`\n";
  md += "- session seed: " + std::to_string(cfg.seed) + "\n";
  md += "- trace: " + std::to_string(log.entries().size()) + " records, header `" + log.header().hash + "`, chain " +
        (integrity.ok ? "verified" : "BROKEN") + "\n";
  md += "- candidates: " + std::to_string(state.candidates.size()) + " (" + std::to_string(evaluated) +
        " evaluated, " + std::to_string(passed) + " passed, " + std::to_string(rejected) + " rejected)\n\n";

  md += "## Rounds\n\n";
  for (const auto& s : state.summaries) {
    if (s.scope == SummaryScope::round) md += "- " + s.text + " Next: " + s.decision + "\n";
  }
  md += "\n## Pools\n\n";
  md += "Hold (" + std::to_string(state.pools.hold.size()) + "): ";
  for (std::size_t k = 0; k < state.pools.hold.size(); ++k) md += (k ? ", " : "") + state.pools.hold[k];
  md += "\n\nGood (" + std::to_string(state.pools.good.size()) + "): ";
  for (std::size_t k = 0; k < state.pools.good.size(); ++k) md += (k ? ", " : "") + state.pools.good[k];
  md += "\n\n## Combination model\n\n";
  md += "Ridge lambda " + format_double(model.lambda) + ", fit on " + format_date(model.fit_window.start) + " to " +
        format_date(model.fit_window.end) + " (" + std::to_string(model.n_rows) + " rows).\n\n";
  md += "| factor | beta | recipe |\n|---|---|---|\n";
  for (std::size_t k = 0; k < model.factor_names.size(); ++k) {
    md += "| " + model.factor_names[k] + " | " + format_double(model.beta[k]) + " | `" + model.recipes[k] + "` |\n";
  }
  md += "\n## Backtests\n";
  for (Window w : kWindows) {
    for (Weighting wt : kWeightings) {
      md += std::string("\n### ") + window_name(w) + ", " + to_string(wt) + " weighted\n\n";
      md += csv_to_markdown(read_file(out_path(cfg, backtest_file(w, wt))));
    }
  }
  bool any_sweep = false;
  for (Window w : kWindows) {
    const fs::path p = out_path(cfg, fee_sweep_file(w));
    if (!fs::exists(p)) continue;
    if (!any_sweep) md += "\n## Fee sensitivity (equal weighted)\n";
    any_sweep = true;
    md += std::string("\n### ") + window_name(w) + "\n\n" + csv_to_markdown(read_file(p));
  }
  const fs::path out = out_path(cfg, artifact::kReport);
  write_file(out, md);
  return out;
}

IntegrityResult cmd_verify_trace(const fs::path& trace) {
  if (!fs::exists(trace)) throw DataError("trace not found: " + trace.string());
  return verify_integrity(read_file(trace));
}

void cmd_synth(const SynthConfig& cfg, const fs::path& out) { write_synth_csv(cfg, out); }

}  // namespace factorlab
