#include "factorlab/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "factorlab/eval.hpp"

namespace factorlab {

const char* to_string(Weighting w) { return w == Weighting::equal ? "equal" : "cap"; }

void PortfolioConfig::validate() const {
  if (n_groups < 2) throw ConfigError("n_groups must be >= 2");
  if (!(fee_one_way >= 0.0)) throw ConfigError("fee_one_way must be >= 0");
  if (exec_lag < 1) throw ConfigError("exec_lag must be >= 1");
}

bool GroupAssignment::assigned(std::size_t date) const {
  for (std::size_t i = 0; i < n_assets_; ++i)
    if ((*this)(i, date) >= 0) return true;
  return false;
}

std::vector<std::size_t> GroupAssignment::group_sizes(std::size_t date) const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(n_groups_), 0);
  for (std::size_t i = 0; i < n_assets_; ++i) {
    const int g = (*this)(i, date);
    if (g >= 0) ++sizes[static_cast<std::size_t>(g)];
  }
  return sizes;
}

GroupAssignment sort_groups(const Matrix& scores, int n_groups, const Mask& tradable,
                            std::span<const std::size_t> dates) {
  if (n_groups < 2) throw std::invalid_argument("n_groups must be >= 2");
  GroupAssignment out(scores.n_assets(), scores.n_dates(), n_groups);
  const auto g = static_cast<std::size_t>(n_groups);
  std::vector<std::size_t> idx;
  for (std::size_t t : dates) {
    idx.clear();
    for (std::size_t i = 0; i < scores.n_assets(); ++i)
      if (tradable(i, t) && !is_missing(scores(i, t))) idx.push_back(i);
    if (idx.size() < g) continue;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores(a, t) < scores(b, t); });
    const std::size_t base = idx.size() / g;
    const std::size_t extra = idx.size() % g;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < g; ++k) {
      const std::size_t size = base + (k >= g - extra ? 1 : 0);
      for (std::size_t j = 0; j < size; ++j) out.set(idx[pos++], t, static_cast<int>(k));
    }
  }
  return out;
}

GroupReturns group_returns(const GroupAssignment& groups, const Matrix& targets, Weighting weighting,
                           const Matrix& mcap, std::span<const std::size_t> dates) {
  const auto G = static_cast<std::size_t>(groups.n_groups());
  const std::size_t A = groups.n_assets();
  GroupReturns out;
  out.returns.resize(G);
  out.turnover.resize(G);
  std::vector<std::vector<double>> prev(G);
  std::vector<std::vector<double>> w(G, std::vector<double>(A));
  std::vector<double> ret(G);
  for (std::size_t t : dates) {
    bool usable = groups.assigned(t);
    for (std::size_t k = 0; k < G && usable; ++k) {
      std::fill(w[k].begin(), w[k].end(), 0.0);
      // Cap weights are scaled by the group's largest cap, so equal caps give
      // exactly 1.0 and reproduce the equal-weight arithmetic.
      double max_cap = 0.0;
      if (weighting == Weighting::cap) {
        for (std::size_t i = 0; i < A; ++i) {
          if (groups(i, t) == static_cast<int>(k) && !is_missing(targets(i, t)) && !is_missing(mcap(i, t))) {
            max_cap = std::max(max_cap, mcap(i, t));
          }
        }
      }
      double total = 0.0;
      for (std::size_t i = 0; i < A; ++i) {
        if (groups(i, t) != static_cast<int>(k) || is_missing(targets(i, t))) continue;
        double raw = 1.0;
        if (weighting == Weighting::cap) {
          raw = (!is_missing(mcap(i, t)) && mcap(i, t) > 0.0 && max_cap > 0.0) ? mcap(i, t) / max_cap : 0.0;
        }
        w[k][i] = raw;
        total += raw;
      }
      if (!(total > 0.0)) {
        usable = false;
        break;
      }
      double r = 0.0;
      for (std::size_t i = 0; i < A; ++i) {
        if (w[k][i] == 0.0) continue;
        w[k][i] /= total;
        r += w[k][i] * targets(i, t);
      }
      ret[k] = r;
    }
    if (!usable) continue;
    out.dates.push_back(t);
    for (std::size_t k = 0; k < G; ++k) {
      out.returns[k].push_back(ret[k]);
      out.turnover[k].push_back(prev[k].empty() ? 1.0 : turnover(w[k], prev[k]));
      prev[k] = w[k];
    }
  }
  return out;
}

std::vector<double> long_short(std::span<const double> top, std::span<const double> bottom) {
  if (top.size() != bottom.size()) throw std::invalid_argument("long_short: length mismatch");
  std::vector<double> out(top.size());
  for (std::size_t k = 0; k < top.size(); ++k) out[k] = top[k] - bottom[k];
  return out;
}

double turnover(std::span<const double> weights_now, std::span<const double> weights_prev) {
  if (weights_now.size() != weights_prev.size()) throw std::invalid_argument("turnover: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights_now.size(); ++i) s += std::fabs(weights_now[i] - weights_prev[i]);
  return 0.5 * s;
}

std::vector<double> apply_costs(std::span<const double> gross, std::span<const double> turnover_series,
                                double fee_one_way) {
  if (gross.size() != turnover_series.size()) throw std::invalid_argument("apply_costs: length mismatch");
  std::vector<double> net(gross.size());
  for (std::size_t k = 0; k < gross.size(); ++k) net[k] = gross[k] - fee_one_way * turnover_series[k];
  return net;
}

std::vector<double> wealth_path(std::span<const double> returns) {
  std::vector<double> out(returns.size());
  double w = 1.0;
  for (std::size_t k = 0; k < returns.size(); ++k) {
    w *= 1.0 + returns[k];
    out[k] = w;
  }
  return out;
}

PerformanceRow performance_metrics(std::span<const double> net, std::span<const double> turnover_series,
                                   bool include_first_turnover) {
  if (net.size() < kMinMetricObservations) {
    throw DataError("performance metrics need at least " + std::to_string(kMinMetricObservations) +
                    " observations, got " + std::to_string(net.size()));
  }
  PerformanceRow row;
  row.n_obs = net.size();
  const double n = static_cast<double>(net.size());

  const auto wealth = wealth_path(net);
  const double final_wealth = wealth.back();
  row.ann_ret = final_wealth > 0.0 ? std::pow(final_wealth, kPeriodsPerYear / n) - 1.0 : -1.0;

  double mean = 0.0;
  for (double r : net) mean += r;
  mean /= n;
  const bool constant = all_identical(net);
  double sd = 0.0;
  if (!constant) {
    double ss = 0.0;
    for (double r : net) ss += (r - mean) * (r - mean);
    sd = std::sqrt(ss / (n - 1.0));
  }
  row.ann_vol = sd * std::sqrt(kPeriodsPerYear);
  row.sharpe_defined = sd > 0.0;
  row.sharpe = row.sharpe_defined ? mean / sd * std::sqrt(kPeriodsPerYear) : kMissing;

  double peak = 1.0;
  double mdd = 0.0;
  for (double w : wealth) {
    peak = std::max(peak, w);
    mdd = std::min(mdd, w / peak - 1.0);
  }
  row.max_dd = std::max(mdd, -1.0);
  row.calmar_defined = row.max_dd < 0.0;
  row.calmar = row.calmar_defined ? row.ann_ret / std::fabs(row.max_dd) : kMissing;

  const std::size_t first = include_first_turnover ? 0 : 1;
  if (turnover_series.size() > first) {
    double s = 0.0;
    for (std::size_t k = first; k < turnover_series.size(); ++k) s += turnover_series[k];
    row.turnover = s / static_cast<double>(turnover_series.size() - first);
  }
  return row;
}

std::string PortfolioReport::to_csv() const {
  std::string out = "Group,AnnRet,AnnVol,Sharpe,MaxDD,Calmar,Turnover\n";
  for (const auto& r : rows) {
    out += r.label + "," + format_double(r.perf.ann_ret) + "," + format_double(r.perf.ann_vol) + "," +
           format_double(r.perf.sharpe) + "," + format_double(r.perf.max_dd) + "," + format_double(r.perf.calmar) +
           "," + format_double(r.perf.turnover) + "\n";
  }
  return out;
}

BacktestResult run_backtest(const Matrix& scores, const Matrix& targets, const Matrix& mcap, const Mask& tradable,
                            std::span<const std::size_t> dates, const PortfolioConfig& cfg) {
  cfg.validate();
  BacktestResult res;
  const GroupAssignment groups = sort_groups(scores, cfg.n_groups, tradable, dates);
  res.groups = group_returns(groups, targets, cfg.weighting, mcap, dates);
  const auto G = static_cast<std::size_t>(cfg.n_groups);
  const auto& gr = res.groups;

  res.ls_gross = long_short(gr.returns[G - 1], gr.returns[0]);
  res.ls_turnover.resize(gr.dates.size());
  for (std::size_t k = 0; k < gr.dates.size(); ++k) res.ls_turnover[k] = gr.turnover[G - 1][k] + gr.turnover[0][k];
  res.ls_net = apply_costs(res.ls_gross, res.ls_turnover, cfg.fee_one_way);

  for (std::size_t t : gr.dates) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < groups.n_assets(); ++i) {
      if (groups(i, t) >= 0 && !is_missing(targets(i, t))) {
        s += targets(i, t);
        ++n;
      }
    }
    res.benchmark.push_back(s / static_cast<double>(n));
  }

  for (std::size_t k = 0; k < G; ++k) {
    res.group_net.push_back(apply_costs(gr.returns[k], gr.turnover[k], cfg.fee_one_way));
    res.report.rows.push_back({"Q" + std::to_string(k), performance_metrics(res.group_net.back(), gr.turnover[k])});
  }
  res.report.rows.push_back({"L-S", performance_metrics(res.ls_net, res.ls_turnover)});
  return res;
}

std::string FeeSweep::to_csv() const {
  std::string out = "Fee Rate,AnnRet,AnnVol,Sharpe Ratio,Alpha\n";
  for (const auto& r : rows) {
    out += format_double(r.fee) + "," + format_double(r.perf.ann_ret) + "," + format_double(r.perf.ann_vol) + "," +
           format_double(r.perf.sharpe) + "," + format_double(r.alpha) + "\n";
  }
  return out;
}

FeeSweep fee_sweep(std::span<const double> ls_gross, std::span<const double> ls_turnover,
                   std::span<const double> benchmark, std::span<const double> fees) {
  if (!std::is_sorted(fees.begin(), fees.end())) throw std::invalid_argument("fee_sweep: fees must be ascending");
  if (benchmark.size() != ls_gross.size()) throw std::invalid_argument("fee_sweep: benchmark length mismatch");
  double bench_mean = 0.0;
  for (double b : benchmark) bench_mean += b;
  bench_mean /= static_cast<double>(benchmark.size());

  FeeSweep out;
  for (double fee : fees) {
    const auto net = apply_costs(ls_gross, ls_turnover, fee);
    FeeSweepRow row;
    row.fee = fee;
    row.perf = performance_metrics(net, ls_turnover);
    double mean = 0.0;
    for (double r : net) mean += r;
    mean /= static_cast<double>(net.size());
    row.alpha = (mean - bench_mean) * kPeriodsPerYear;
    out.rows.push_back(row);
    auto cum = wealth_path(net);
    for (double& c : cum) c -= 1.0;
    out.cumulative.push_back(std::move(cum));
  }
  return out;
}

std::string paths_to_csv(std::span<const Date> dates, const std::vector<std::string>& series,
                         const std::vector<std::vector<double>>& values) {
  if (series.size() != values.size()) throw std::invalid_argument("paths_to_csv: series/value count mismatch");
  std::string out = "date,series,value\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (values[s].size() != dates.size()) throw std::invalid_argument("paths_to_csv: length mismatch");
    for (std::size_t k = 0; k < dates.size(); ++k) {
      out += format_date(dates[k]) + "," + series[s] + "," + format_double(values[s][k]) + "\n";
    }
  }
  return out;
}

}  // namespace factorlab
