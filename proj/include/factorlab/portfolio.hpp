#pragma once

// Quantile portfolio backtests: group sorting, equal / cap weighting,
// one-way turnover, proportional costs and performance rows.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "factorlab/panel.hpp"
#include "factorlab/types.hpp"

namespace factorlab {

enum class Weighting { equal, cap };
const char* to_string(Weighting w);

struct PortfolioConfig {
  int n_groups = 5;
  Weighting weighting = Weighting::equal;
  double fee_one_way = 0.0005;
  int exec_lag = 1;  // already embedded in the forward-return target

  void validate() const;
};

// Group index per (asset, date); -1 where unassigned.
class GroupAssignment {
 public:
  GroupAssignment() = default;
  GroupAssignment(std::size_t n_assets, std::size_t n_dates, int n_groups)
      : n_assets_(n_assets), n_dates_(n_dates), n_groups_(n_groups), group_(n_assets * n_dates, -1) {}

  int operator()(std::size_t asset, std::size_t date) const { return group_[asset * n_dates_ + date]; }
  void set(std::size_t asset, std::size_t date, int g) { group_[asset * n_dates_ + date] = g; }
  std::size_t n_assets() const { return n_assets_; }
  std::size_t n_dates() const { return n_dates_; }
  int n_groups() const { return n_groups_; }
  bool assigned(std::size_t date) const;
  std::vector<std::size_t> group_sizes(std::size_t date) const;

 private:
  std::size_t n_assets_ = 0;
  std::size_t n_dates_ = 0;
  int n_groups_ = 0;
  std::vector<int> group_;
};

// Ascending sort of tradable, non-missing scores per date into n_groups
// buckets whose sizes differ by at most one; the remainder goes to the
// highest-numbered groups and ties break by asset order (names are sorted).
GroupAssignment sort_groups(const Matrix& scores, int n_groups, const Mask& tradable,
                            std::span<const std::size_t> dates);

// Daily series for every group on the dates where all groups are populated.
struct GroupReturns {
  std::vector<std::size_t> dates;
  std::vector<std::vector<double>> returns;  // [group][k]
  std::vector<std::vector<double>> turnover;  // [group][k], first day = 1.0
};

// Members without a forward return (or, for cap weighting, without a
// positive market cap) are left out and the remaining weights renormalized.
GroupReturns group_returns(const GroupAssignment& groups, const Matrix& targets, Weighting weighting,
                           const Matrix& mcap, std::span<const std::size_t> dates);

// top - bottom, elementwise.
std::vector<double> long_short(std::span<const double> top, std::span<const double> bottom);

// 0.5 * sum |w_now - w_prev| over one leg.
double turnover(std::span<const double> weights_now, std::span<const double> weights_prev);

// net_t = gross_t - fee_one_way * turnover_t.
std::vector<double> apply_costs(std::span<const double> gross, std::span<const double> turnover, double fee_one_way);

// Cumulative wealth starting from 1 before the first return.
std::vector<double> wealth_path(std::span<const double> returns);

struct PerformanceRow {
  double ann_ret = kMissing;
  double ann_vol = kMissing;
  double sharpe = kMissing;
  double max_dd = 0.0;
  double calmar = kMissing;
  double turnover = kMissing;
  std::size_t n_obs = 0;
  bool sharpe_defined = false;  // false when the series has zero variance
  bool calmar_defined = false;  // false when there is no drawdown
};

inline constexpr std::size_t kMinMetricObservations = 30;

// Throws DataError with fewer than kMinMetricObservations returns. The
// first turnover entry (initial deployment) is left out of the average
// unless include_first_turnover is set.
PerformanceRow performance_metrics(std::span<const double> net, std::span<const double> turnover,
                                   bool include_first_turnover = false);

struct ReportRow {
  std::string label;  // Q0 .. Q{n-1}, L-S
  PerformanceRow perf;
};

struct PortfolioReport {
  std::vector<ReportRow> rows;
  // Header: Group,AnnRet,AnnVol,Sharpe,MaxDD,Calmar,Turnover
  std::string to_csv() const;
};

struct BacktestResult {
  GroupReturns groups;
  std::vector<double> ls_gross;
  std::vector<double> ls_turnover;  // long leg + short leg
  std::vector<double> ls_net;
  std::vector<std::vector<double>> group_net;
  std::vector<double> benchmark;  // equal-weight mean target of all sorted names
  PortfolioReport report;
};

// Rows Q0..Q{n-1} and L-S, all net of cfg.fee_one_way.
BacktestResult run_backtest(const Matrix& scores, const Matrix& targets, const Matrix& mcap, const Mask& tradable,
                            std::span<const std::size_t> dates, const PortfolioConfig& cfg);

struct FeeSweepRow {
  double fee = 0.0;
  PerformanceRow perf;
  double alpha = kMissing;  // annualized mean(net L-S) - mean(benchmark)
};

struct FeeSweep {
  std::vector<FeeSweepRow> rows;
  std::vector<std::vector<double>> cumulative;  // [fee][k], wealth - 1
  // Header: Fee Rate,AnnRet,AnnVol,Sharpe Ratio,Alpha
  std::string to_csv() const;
};

// Throws std::invalid_argument when fees are not ascending.
FeeSweep fee_sweep(std::span<const double> ls_gross, std::span<const double> ls_turnover,
                   std::span<const double> benchmark, std::span<const double> fees);

// Long-format plot data: date,series,value.
std::string paths_to_csv(std::span<const Date> dates, const std::vector<std::string>& series,
                         const std::vector<std::vector<double>>& values);

}  // namespace factorlab
