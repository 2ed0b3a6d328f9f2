#include "factorlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace factorlab {

void GateConfig::validate() const {
  if (!std::isfinite(tau_ic) || !std::isfinite(tau_t)) throw ConfigError("gate thresholds must be finite");
  if (min_names_per_day < 3) throw ConfigError("gate min_names_per_day must be >= 3");
}

namespace {

std::vector<std::size_t> all_dates(const Matrix& m) {
  std::vector<std::size_t> d(m.n_dates());
  std::iota(d.begin(), d.end(), std::size_t{0});
  return d;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (all_identical(x) || all_identical(y)) return kMissing;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx, dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return kMissing;
  return finite_or_missing(sxy / std::sqrt(sxx * syy));
}

}  // namespace

std::vector<double> daily_ic(const Matrix& scores, const Matrix& targets, std::size_t min_names,
                             std::span<const std::size_t> dates) {
  if (!scores.same_shape(targets)) throw std::invalid_argument("daily_ic: score/target shape mismatch");
  std::vector<double> out;
  out.reserve(dates.size());
  std::vector<double> x, y;
  for (std::size_t t : dates) {
    x.clear();
    y.clear();
    for (std::size_t i = 0; i < scores.n_assets(); ++i) {
      const double s = scores(i, t), r = targets(i, t);
      if (!is_missing(s) && !is_missing(r)) {
        x.push_back(s);
        y.push_back(r);
      }
    }
    out.push_back(x.size() >= std::max<std::size_t>(min_names, 2) ? pearson(x, y) : kMissing);
  }
  return out;
}

std::vector<double> daily_ic(const Matrix& scores, const Matrix& targets, std::size_t min_names) {
  const auto d = all_dates(scores);
  return daily_ic(scores, targets, min_names, d);
}

ICSummary summarize_ic(std::span<const double> ic) {
  std::vector<double> v;
  for (double x : ic)
    if (!is_missing(x)) v.push_back(x);
  if (v.size() < 2) throw DataError("summarize_ic: need at least 2 defined ICs, got " + std::to_string(v.size()));
  ICSummary s;
  s.n_days = v.size();
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean_ic = sum / n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean_ic) * (x - s.mean_ic);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!all_identical(v) && sd > 0.0) {
    s.ic_tstat = s.mean_ic / (sd / std::sqrt(n));
  } else {
    s.tstat_degenerate = true;
    s.ic_tstat = s.mean_ic > 0.0   ? std::numeric_limits<double>::infinity()
                 : s.mean_ic < 0.0 ? -std::numeric_limits<double>::infinity()
                                   : 0.0;
  }
  return s;
}

double signal_ls_sharpe(const Matrix& scores, const Matrix& targets, double quantile,
                        std::span<const std::size_t> dates) {
  if (!(quantile > 0.0 && quantile <= 0.5)) throw std::invalid_argument("ls quantile must be in (0, 0.5]");
  if (!scores.same_shape(targets)) throw std::invalid_argument("signal_ls_sharpe: shape mismatch");
  const double min_names = 2.0 / quantile;
  std::vector<double> spread;
  std::vector<std::size_t> idx;
  for (std::size_t t : dates) {
    idx.clear();
    for (std::size_t i = 0; i < scores.n_assets(); ++i) {
      if (!is_missing(scores(i, t)) && !is_missing(targets(i, t))) idx.push_back(i);
    }
    // Small tolerance so that 2 / 0.2 is not rejected by rounding.
    if (static_cast<double>(idx.size()) + 1e-9 < min_names) continue;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return scores(a, t) < scores(b, t) || (scores(a, t) == scores(b, t) && a < b);
    });
    const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(idx.size()) * quantile + 1e-9));
    double top = 0.0, bottom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      bottom += targets(idx[j], t);
      top += targets(idx[idx.size() - 1 - j], t);
    }
    spread.push_back(top / static_cast<double>(k) - bottom / static_cast<double>(k));
  }
  if (spread.size() < 2 || all_identical(spread)) return kMissing;
  const double n = static_cast<double>(spread.size());
  double mean = 0.0;
  for (double x : spread) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : spread) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) return kMissing;
  return mean / sd * std::sqrt(kPeriodsPerYear);
}

double coverage(const Matrix& scores, const Mask& tradable, std::span<const std::size_t> dates) {
  std::size_t scored = 0, cells = 0;
  for (std::size_t t : dates) {
    for (std::size_t i = 0; i < scores.n_assets(); ++i) {
      if (!tradable(i, t)) continue;
      ++cells;
      if (!is_missing(scores(i, t))) ++scored;
    }
  }
  return cells == 0 ? 0.0 : static_cast<double>(scored) / static_cast<double>(cells);
}

EvalMetrics evaluate_signal(const Matrix& scores, const Matrix& targets, const Mask& tradable,
                            std::span<const std::size_t> dates, const SignalEvalSettings& settings) {
  Matrix masked = scores;
  for (std::size_t i = 0; i < masked.n_assets(); ++i)
    for (std::size_t t = 0; t < masked.n_dates(); ++t)
      if (!tradable(i, t)) masked(i, t) = kMissing;

  EvalMetrics m;
  m.coverage = coverage(scores, tradable, dates);
  const auto ic = daily_ic(masked, targets, settings.min_names_per_day, dates);
  m.n_days = static_cast<std::size_t>(std::count_if(ic.begin(), ic.end(), [](double x) { return !is_missing(x); }));
  if (m.n_days >= 2) {
    const auto s = summarize_ic(ic);
    m.mean_ic = s.mean_ic;
    m.ic_tstat = s.ic_tstat;
    m.tstat_degenerate = s.tstat_degenerate;
  } else if (m.n_days == 1) {
    m.mean_ic = *std::find_if(ic.begin(), ic.end(), [](double x) { return !is_missing(x); });
  }
  m.ls_sharpe = signal_ls_sharpe(masked, targets, settings.ls_quantile, dates);
  return m;
}

Verdict apply_gate(const EvalMetrics& m, const GateConfig& g) {
  Verdict v;
  // NaN compares false, so undefined statistics fail their condition.
  if (!(m.mean_ic >= g.tau_ic)) v.reasons.emplace_back(gate_reason::kMeanIc);
  if (!(m.ic_tstat >= g.tau_t)) v.reasons.emplace_back(gate_reason::kTStat);
  if (m.n_days < g.min_days) v.reasons.emplace_back(gate_reason::kInsufficientDays);
  v.pass = v.reasons.empty();
  return v;
}

}  // namespace factorlab
