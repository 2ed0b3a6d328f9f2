#pragma once

// Point-in-time market panel: CSV ingest, universe filtering, derived
// columns, forward-return targets and chronological splits.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "factorlab/types.hpp"

namespace factorlab {

// Column names for the raw fields inside a Panel.
namespace col {
inline constexpr const char* kOpen = "open";
inline constexpr const char* kHigh = "high";
inline constexpr const char* kLow = "low";
inline constexpr const char* kClose = "close";
inline constexpr const char* kVolume = "volume";
inline constexpr const char* kMcap = "mcap";
}  // namespace col

// Names of the columns added by compute_derived, in insertion order.
const std::vector<std::string>& derived_column_names();
const std::vector<std::string>& raw_column_names();

// Maps CSV header names onto the eight required fields. `extra` lists
// additional numeric CSV columns that are loaded verbatim as raw panel
// columns (they must be point-in-time by construction of the source).
struct CsvSchema {
  std::string date = "date";
  std::string symbol = "symbol";
  std::string open = "open";
  std::string high = "high";
  std::string low = "low";
  std::string close = "close";
  std::string volume = "volume";
  std::string market_cap = "market_cap";
  std::vector<std::string> extra;
};

struct IngestViolation {
  std::size_t line = 0;
  std::string asset;
  std::string date;
  std::string reason;
};

struct IngestReport {
  std::string source;
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::vector<IngestViolation> violations;
  std::size_t n_assets = 0;
  std::size_t n_dates = 0;

  std::size_t dropped() const { return violations.size(); }
  // One JSON object per line: a summary line, then one line per violation.
  std::string to_jsonl() const;
};

class Panel {
 public:
  Panel() = default;
  // Throws std::invalid_argument if shapes disagree or dates are not
  // strictly increasing.
  Panel(std::vector<std::string> assets, std::vector<Date> dates, std::map<std::string, Matrix> columns,
        Mask tradable, std::map<std::string, std::string> provenance);

  const std::vector<std::string>& assets() const { return assets_; }
  const std::vector<Date>& dates() const { return dates_; }
  std::size_t n_assets() const { return assets_.size(); }
  std::size_t n_dates() const { return dates_.size(); }

  bool has_column(const std::string& name) const { return columns_.count(name) != 0; }
  const Matrix& column(const std::string& name) const;
  std::vector<std::string> column_names() const;
  const std::map<std::string, Matrix>& columns() const { return columns_; }

  const Mask& tradable() const { return tradable_; }
  const std::map<std::string, std::string>& provenance() const { return provenance_; }

  std::optional<std::size_t> date_index(Date d) const;

  Panel with_column(const std::string& name, Matrix values) const;
  Panel with_tradable(Mask mask) const;
  Panel with_provenance(const std::string& key, const std::string& value) const;
  // Keeps dates [0, n_dates). Used for point-in-time checks.
  Panel truncated(std::size_t n_dates) const;
  Panel select_assets(const std::vector<std::size_t>& keep) const;

  bool operator==(const Panel& other) const;

 private:
  std::vector<std::string> assets_;
  std::vector<Date> dates_;
  std::map<std::string, Matrix> columns_;
  Mask tradable_;
  std::map<std::string, std::string> provenance_;
};

struct LoadResult {
  Panel panel;
  IngestReport report;
};

// Errors: DataError for missing file, missing header column, unparseable
// field or duplicate (asset, date). Rows violating bar invariants are
// dropped and listed in the report.
LoadResult load_panel(const std::filesystem::path& path, const CsvSchema& schema = {});
LoadResult load_panel_from_string(const std::string& csv, const CsvSchema& schema = {},
                                  const std::string& source = "<memory>");

enum class VolumeFilterMode { full_history, rolling };

struct UniverseFilter {
  std::size_t min_history_days = 180;
  double min_avg_volume = 10'000.0;
  VolumeFilterMode volume_mode = VolumeFilterMode::full_history;
};

// Removes assets with too little history or liquidity and masks each
// survivor's first min_history_days - 1 observations as untradable.
// Throws DataError if no asset survives.
Panel filter_universe(const Panel& panel, const UniverseFilter& filter);

struct DerivedWindows {
  int relvol = 20;
  int rvol = 20;
  int price_to_ma = 20;
};

Panel compute_derived(const Panel& panel, const DerivedWindows& windows = {});

// target(i, t) = close(t + exec_lag + hold) / close(t + exec_lag) - 1.
Matrix forward_return(const Panel& panel, int exec_lag = 1, int hold = 1);

struct DateRange {
  Date start;
  Date end;
  bool contains(Date d) const { return start <= d && d <= end; }
  bool operator==(const DateRange&) const = default;
};

struct SplitConfig {
  DateRange train;
  DateRange validation;
  DateRange oos;

  // Throws ConfigError unless ranges are well formed and train < validation < oos.
  void validate() const;
  bool operator==(const SplitConfig&) const = default;
};

enum class Window { train, validation, oos };
const char* window_name(Window w);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> oos;

  const std::vector<std::size_t>& get(Window w) const;
};

// Partitions date indices by signal-formation date. Throws DataError if any
// partition is empty.
SplitIndices split(const Panel& panel, const SplitConfig& cfg);

// Columnar binary cache; see docs/panel_cache.md.
void write_panel_cache(const Panel& panel, const std::filesystem::path& path);
Panel read_panel_cache(const std::filesystem::path& path);

}  // namespace factorlab
