#include "factorlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "factorlab/digest.hpp"

namespace factorlab {

using nlohmann::json;

namespace {

// Reads one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& ex) {
      throw ConfigError(label(key) + ": " + ex.what());
    }
  }

  void get_date_range(const char* key, DateRange& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    const json& r = j_.at(key);
    try {
      if (!r.is_array() || r.size() != 2) throw ConfigError(label(key) + " must be [start, end]");
      out = DateRange{parse_date(r.at(0).get<std::string>()), parse_date(r.at(1).get<std::string>())};
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ConfigError(label(key) + ": " + ex.what());
    }
  }

  std::optional<Section> sub(const char* key) {
    if (!j_.contains(key)) return std::nullopt;
    used_.insert(key);
    return Section(j_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  bool has(const char* key) const { return j_.contains(key); }
  void mark(const char* key) { used_.insert(key); }
  const json& raw(const char* key) const { return j_.at(key); }
  std::string label(const char* key = nullptr) const {
    std::string p = path_.empty() ? "config" : path_;
    return key ? p + "." + key : p;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) throw ConfigError("unknown config key: " + label(item.key().c_str()));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json range_json(const DateRange& r) { return json::array({format_date(r.start), format_date(r.end)}); }

}  // namespace

void SessionConfig::validate() const {
  if (data_path.empty()) throw ConfigError("data.path is required");
  if (filter.min_history_days < 1) throw ConfigError("filter.min_history_days must be >= 1");
  if (!(filter.min_avg_volume >= 0.0)) throw ConfigError("filter.min_avg_volume must be >= 0");
  if (derived.relvol < 1 || derived.rvol < 2 || derived.price_to_ma < 1) {
    throw ConfigError("derived windows must be >= 1 (rvol >= 2)");
  }
  if (exec_lag < 1 || hold < 1) throw ConfigError("target.exec_lag and target.hold must be >= 1");
  split.validate();
  gate.validate();
  if (!(ls_quantile > 0.0 && ls_quantile <= 0.5)) throw ConfigError("eval.ls_quantile must be in (0, 0.5]");
  if (max_depth < 1) throw ConfigError("eval.max_depth must be >= 1");
  if (rounds < 1) throw ConfigError("search.rounds must be >= 1");
  if (agent.kind != "stub" && agent.kind != "remote") throw ConfigError("agent.kind must be stub or remote");
  if (agent.kind == "remote" && agent.endpoint.empty()) throw ConfigError("agent.endpoint is required for remote");
  if (!(agent.focus_probability >= 0.0 && agent.focus_probability <= 1.0)) {
    throw ConfigError("agent.focus_probability must be in [0, 1]");
  }
  if (agent.timeout_seconds < 1) throw ConfigError("agent.timeout_seconds must be >= 1");
  if (!(curation.corr_threshold > 0.0 && curation.corr_threshold <= 1.0)) {
    throw ConfigError("curation.corr_threshold must be in (0, 1]");
  }
  if (curation.max_size < 1) throw ConfigError("curation.max_size must be >= 1");
  if (!(ridge_lambda >= 0.0) || !std::isfinite(ridge_lambda)) throw ConfigError("ridge.lambda must be >= 0");
  portfolio.validate();
  if (fees.empty()) throw ConfigError("fees must not be empty");
  for (double f : fees)
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("fees must be finite and >= 0");
  if (!std::is_sorted(fees.begin(), fees.end())) throw ConfigError("fees must be ascending");
  if (epoch.size() != 20 || epoch[10] != 'T' || epoch.back() != 'Z') {
    throw ConfigError("epoch must look like YYYY-MM-DDTHH:MM:SSZ");
  }
}

json SessionConfig::to_json() const {
  json schema_j{{"date", schema.date},     {"symbol", schema.symbol}, {"open", schema.open},
                {"high", schema.high},     {"low", schema.low},       {"close", schema.close},
                {"volume", schema.volume}, {"market_cap", schema.market_cap}};
  json agent_j{{"kind", agent.kind},
               {"seed", agent.seed ? json(*agent.seed) : json(nullptr)},
               {"focus_columns", agent.focus_columns},
               {"focus_probability", agent.focus_probability},
               {"endpoint", agent.endpoint},
               {"model", agent.model},
               {"api_key_env", agent.api_key_env},
               {"timeout_seconds", agent.timeout_seconds}};
  return json{
      {"data", {{"path", data_path}, {"schema", schema_j}, {"extra_columns", schema.extra}}},
      {"filter",
       {{"min_history_days", filter.min_history_days},
        {"min_avg_volume", filter.min_avg_volume},
        {"volume_mode", filter.volume_mode == VolumeFilterMode::full_history ? "full_history" : "rolling"}}},
      {"derived", {{"relvol", derived.relvol}, {"rvol", derived.rvol}, {"price_to_ma", derived.price_to_ma}}},
      {"target", {{"exec_lag", exec_lag}, {"hold", hold}}},
      {"split", {{"train", range_json(split.train)}, {"validation", range_json(split.validation)}, {"oos", range_json(split.oos)}}},
      {"gate", gate_to_json(gate)},
      {"eval", {{"ls_quantile", ls_quantile}, {"max_depth", max_depth}}},
      {"search", {{"rounds", rounds}, {"mechanical", batch.mechanical}, {"hypothesis", batch.hypothesis}}},
      {"agent", agent_j},
      {"curation", {{"corr_threshold", curation.corr_threshold}, {"max_size", curation.max_size}}},
      {"ridge", {{"lambda", ridge_lambda}}},
      {"portfolio", {{"n_groups", portfolio.n_groups}, {"fee_one_way", portfolio.fee_one_way}}},
      {"fees", fees},
      {"output_dir", output_dir},
      {"seed", seed},
      {"clock", clock == ClockMode::logical ? "logical" : "wall"},
      {"epoch", epoch}};
}

SplitConfig default_split() {
  return SplitConfig{DateRange{parse_date("2020-01-01"), parse_date("2022-12-31")},
                     DateRange{parse_date("2023-01-01"), parse_date("2023-12-31")},
                     DateRange{parse_date("2024-01-01"), parse_date("2025-12-31")}};
}

SessionConfig SessionConfig::from_json(const json& j) {
  SessionConfig c;
  Section root(j, "");
  if (auto s = root.sub("data")) {
    s->get("path", c.data_path);
    s->get("extra_columns", c.schema.extra);
    if (auto m = s->sub("schema")) {
      m->get("date", c.schema.date);
      m->get("symbol", c.schema.symbol);
      m->get("open", c.schema.open);
      m->get("high", c.schema.high);
      m->get("low", c.schema.low);
      m->get("close", c.schema.close);
      m->get("volume", c.schema.volume);
      m->get("market_cap", c.schema.market_cap);
      m->finish();
    }
    s->finish();
  }
  if (auto s = root.sub("filter")) {
    s->get("min_history_days", c.filter.min_history_days);
    s->get("min_avg_volume", c.filter.min_avg_volume);
    std::string mode = "full_history";
    s->get("volume_mode", mode);
    if (mode == "full_history") {
      c.filter.volume_mode = VolumeFilterMode::full_history;
    } else if (mode == "rolling") {
      c.filter.volume_mode = VolumeFilterMode::rolling;
    } else {
      throw ConfigError("filter.volume_mode must be full_history or rolling");
    }
    s->finish();
  }
  if (auto s = root.sub("derived")) {
    s->get("relvol", c.derived.relvol);
    s->get("rvol", c.derived.rvol);
    s->get("price_to_ma", c.derived.price_to_ma);
    s->finish();
  }
  if (auto s = root.sub("target")) {
    s->get("exec_lag", c.exec_lag);
    s->get("hold", c.hold);
    s->finish();
  }
  if (auto s = root.sub("split")) {
    s->get_date_range("train", c.split.train);
    s->get_date_range("validation", c.split.validation);
    s->get_date_range("oos", c.split.oos);
    s->finish();
  }
  if (auto s = root.sub("gate")) {
    s->get("tau_ic", c.gate.tau_ic);
    s->get("tau_t", c.gate.tau_t);
    s->get("min_names_per_day", c.gate.min_names_per_day);
    s->get("min_days", c.gate.min_days);
    s->finish();
  }
  if (auto s = root.sub("eval")) {
    s->get("ls_quantile", c.ls_quantile);
    s->get("max_depth", c.max_depth);
    s->finish();
  }
  if (auto s = root.sub("search")) {
    s->get("rounds", c.rounds);
    s->get("mechanical", c.batch.mechanical);
    s->get("hypothesis", c.batch.hypothesis);
    s->finish();
  }
  if (auto s = root.sub("agent")) {
    s->get("kind", c.agent.kind);
    if (s->has("seed")) {
      s->mark("seed");
      const json& v = s->raw("seed");
      if (!v.is_null()) {
        if (!v.is_number_unsigned()) throw ConfigError("agent.seed must be a non-negative integer or null");
        c.agent.seed = v.get<std::uint64_t>();
      }
    }
    s->get("focus_columns", c.agent.focus_columns);
    s->get("focus_probability", c.agent.focus_probability);
    s->get("endpoint", c.agent.endpoint);
    s->get("model", c.agent.model);
    s->get("api_key_env", c.agent.api_key_env);
    s->get("timeout_seconds", c.agent.timeout_seconds);
    s->finish();
  }
  if (auto s = root.sub("curation")) {
    s->get("corr_threshold", c.curation.corr_threshold);
    s->get("max_size", c.curation.max_size);
    s->finish();
  }
  if (auto s = root.sub("ridge")) {
    s->get("lambda", c.ridge_lambda);
    s->finish();
  }
  if (auto s = root.sub("portfolio")) {
    s->get("n_groups", c.portfolio.n_groups);
    s->get("fee_one_way", c.portfolio.fee_one_way);
    s->finish();
  }
  root.get("fees", c.fees);
  root.get("output_dir", c.output_dir);
  root.get("seed", c.seed);
  std::string clock = "logical";
  root.get("clock", clock);
  if (clock == "logical") {
    c.clock = ClockMode::logical;
  } else if (clock == "wall") {
    c.clock = ClockMode::wall;
  } else {
    throw ConfigError("clock must be logical or wall");
  }
  root.get("epoch", c.epoch);
  root.finish();
  c.validate();
  return c;
}

SessionConfig SessionConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& ex) {
    throw ConfigError("config is not valid JSON: " + std::string(ex.what()));
  }
  SessionConfig c = from_json(j);
  c.base_dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  return c;
}

std::string SessionConfig::digest() const {
  json j = to_json();
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

std::filesystem::path SessionConfig::resolved_data_path() const {
  const std::filesystem::path p(data_path);
  return p.is_absolute() ? p : base_dir / p;
}

std::filesystem::path SessionConfig::resolved_output_dir() const {
  const std::filesystem::path p(output_dir);
  return p.is_absolute() ? p : base_dir / p;
}

}  // namespace factorlab
