#pragma once

// Train-window signal evaluation and the pre-specified selection gate.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "factorlab/types.hpp"

namespace factorlab {

// Crypto trades every calendar day.
inline constexpr double kPeriodsPerYear = 365.0;

struct ICSummary {
  double mean_ic = kMissing;
  double ic_tstat = kMissing;
  // Set when the IC series has zero dispersion; ic_tstat then holds a
  // +/-infinity sentinel (or 0 when the mean is exactly 0).
  bool tstat_degenerate = false;
  std::size_t n_days = 0;
};

struct EvalMetrics {
  double mean_ic = kMissing;
  double ic_tstat = kMissing;
  bool tstat_degenerate = false;
  double ls_sharpe = kMissing;
  double coverage = 0.0;
  std::size_t n_days = 0;
};

struct GateConfig {
  double tau_ic = 0.01;
  double tau_t = 2.0;
  std::size_t min_names_per_day = 5;
  std::size_t min_days = 60;

  // Throws ConfigError for non-finite thresholds or min_names_per_day < 3.
  void validate() const;
  bool operator==(const GateConfig&) const = default;
};

namespace gate_reason {
inline constexpr const char* kMeanIc = "mean IC";
inline constexpr const char* kTStat = "t-stat";
inline constexpr const char* kInsufficientDays = "insufficient days";
}  // namespace gate_reason

struct Verdict {
  bool pass = false;
  std::vector<std::string> reasons;  // empty iff pass
};

// IC per listed date: Pearson correlation across assets with both a score
// and a target. Missing when fewer than min_names pairs or either side is
// constant. The result is aligned with `dates`.
std::vector<double> daily_ic(const Matrix& scores, const Matrix& targets, std::size_t min_names,
                             std::span<const std::size_t> dates);
std::vector<double> daily_ic(const Matrix& scores, const Matrix& targets, std::size_t min_names);

// Mean and one-sample t-statistic of the defined ICs. Throws DataError when
// fewer than two ICs are defined.
ICSummary summarize_ic(std::span<const double> ic);

// Gross, equal-weight top-minus-bottom quantile spread, annualized.
// Dates with fewer than 2 / quantile usable names are skipped. Returns
// missing when fewer than two days survive or the spread is constant.
double signal_ls_sharpe(const Matrix& scores, const Matrix& targets, double quantile,
                        std::span<const std::size_t> dates);

// Non-missing score cells over tradable cells within `dates`.
double coverage(const Matrix& scores, const Mask& tradable, std::span<const std::size_t> dates);

struct SignalEvalSettings {
  std::size_t min_names_per_day = 5;
  double ls_quantile = 0.2;
};

// Full feedback tuple on one window. Untradable cells are dropped before
// any statistic is computed.
EvalMetrics evaluate_signal(const Matrix& scores, const Matrix& targets, const Mask& tradable,
                            std::span<const std::size_t> dates, const SignalEvalSettings& settings);

Verdict apply_gate(const EvalMetrics& m, const GateConfig& g);

}  // namespace factorlab
