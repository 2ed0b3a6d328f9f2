#pragma once

// Session configuration. The file is JSON; every field has a default, and
// unknown keys are rejected so typos cannot silently change a protocol.
// Field reference: docs/config.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "factorlab/eval.hpp"
#include "factorlab/panel.hpp"
#include "factorlab/portfolio.hpp"
#include "factorlab/search.hpp"
#include "factorlab/trace.hpp"

namespace factorlab {

struct AgentSettings {
  std::string kind = "stub";  // stub | remote
  std::optional<std::uint64_t> seed;  // stub; defaults to one derived from the session seed
  std::vector<std::string> focus_columns;
  double focus_probability = 0.5;
  std::string endpoint;  // remote
  std::string model;
  std::string api_key_env = "FACTORLAB_API_KEY";
  int timeout_seconds = 60;
};

// Train 2020-2022, validation 2023, out-of-sample 2024-2025.
SplitConfig default_split();

struct SessionConfig {
  std::string data_path;
  CsvSchema schema;
  UniverseFilter filter;
  DerivedWindows derived;
  int exec_lag = 1;
  int hold = 1;
  SplitConfig split = default_split();
  GateConfig gate;
  double ls_quantile = 0.2;
  std::size_t max_depth = dsl::kDefaultMaxDepth;
  int rounds = 5;
  BatchSizes batch;
  AgentSettings agent;
  CurationSettings curation;
  double ridge_lambda = 1.0;
  PortfolioConfig portfolio;
  std::vector<double> fees{0.0, 0.0005, 0.001, 0.002, 0.003};
  std::string output_dir = "out";
  std::uint64_t seed = 42;
  ClockMode clock = ClockMode::logical;
  std::string epoch = "2026-01-01T00:00:00Z";

  // Directory that relative paths are resolved against; not serialized.
  std::filesystem::path base_dir = ".";

  void validate() const;
  nlohmann::json to_json() const;
  static SessionConfig from_json(const nlohmann::json& j);
  static SessionConfig load(const std::filesystem::path& path);

  // SHA-256 of the canonical serialization without output_dir.
  std::string digest() const;

  std::filesystem::path resolved_data_path() const;
  std::filesystem::path resolved_output_dir() const;
};

}  // namespace factorlab
