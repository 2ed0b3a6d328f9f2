#include <algorithm>
#include <cmath>
#include <numeric>

#include "factorlab/dsl.hpp"

namespace factorlab::dsl {

bool ValidationReport::has_rule(std::string_view r) const {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.rule == r; });
}

std::set<std::string> approved_columns(const Panel& panel) {
  const auto names = panel.column_names();
  return {names.begin(), names.end()};
}

namespace {

struct Validator {
  const std::set<std::string>& allowed;
  ValidationReport report;
  bool has_transform = false;

  void add(const char* r, std::string msg, const std::string& path) {
    report.violations.push_back({r, std::move(msg), path});
  }

  void walk(const Expr& e, const std::string& path) {
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Column>) {
            if (allowed.count(x.name) == 0) add(rule::kApprovedColumn, "column '" + x.name + "' is not approved", path);
          } else if constexpr (std::is_same_v<T, CrossSectional>) {
            walk(*x.child, path + "/0");
          } else if constexpr (std::is_same_v<T, TimeSeries>) {
            has_transform = true;
            if (x.window < 1) {
              add(rule::kWindowParam, std::string(op_name(x.op)) + " window must be >= 1, got " + std::to_string(x.window),
                  path);
            }
            walk(*x.child, path + "/0");
          } else if constexpr (std::is_same_v<T, Unary>) {
            has_transform = true;
            walk(*x.child, path + "/0");
          } else if constexpr (std::is_same_v<T, Clip>) {
            has_transform = true;
            if (!std::isfinite(x.lo) || !std::isfinite(x.hi)) {
              add(rule::kFiniteConstant, "clip bounds must be finite", path);
            } else if (!(x.lo < x.hi)) {
              add(rule::kClipBounds, "clip requires lo < hi, got " + format_double(x.lo) + " >= " + format_double(x.hi),
                  path);
            }
            walk(*x.child, path + "/0");
          } else {
            if (x.terms.empty()) add(rule::kFiniteConstant, "lincomb needs at least one term", path);
            for (std::size_t k = 0; k < x.terms.size(); ++k) {
              if (!std::isfinite(x.terms[k].weight)) add(rule::kFiniteConstant, "lincomb weight must be finite", path);
              walk(*x.terms[k].child, path + "/" + std::to_string(k));
            }
          }
        },
        e.node);
  }
};

}  // namespace

ValidationReport validate(const Expr& e, const std::set<std::string>& allowed_columns, std::size_t max_depth) {
  Validator v{allowed_columns, {}, false};
  v.walk(e, "root");
  if (!v.has_transform) {
    v.add(rule::kTransformRequired, "recipe needs at least one time-series or nonlinear transformation", "root");
  }
  const std::size_t d = depth(e);
  if (d > max_depth) {
    v.add(rule::kMaxDepth, "depth " + std::to_string(d) + " exceeds limit " + std::to_string(max_depth), "root");
  }
  v.report.ok = v.report.violations.empty();
  v.report.notes.push_back("no operator reads a later date; forward-looking recipes are unrepresentable");
  return v.report;
}

// ---------------------------------------------------------------------------
// Vectorized evaluation: each node materializes a full asset x date matrix.

namespace {

Matrix eval_node(const Expr& e, const Panel& panel);

void cross_rank(Matrix& m) {
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < m.n_dates(); ++t) {
    idx.clear();
    for (std::size_t i = 0; i < m.n_assets(); ++i)
      if (!is_missing(m(i, t))) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return m(a, t) < m(b, t) || (m(a, t) == m(b, t) && a < b);
    });
    const double n = static_cast<double>(idx.size());
    std::vector<double> ranks(idx.size());
    for (std::size_t a = 0; a < idx.size();) {
      std::size_t b = a + 1;
      while (b < idx.size() && m(idx[b], t) == m(idx[a], t)) ++b;
      // Ranks a+1 .. b share their average.
      const double avg = (static_cast<double>(a + 1) + static_cast<double>(b)) / 2.0;
      for (std::size_t k = a; k < b; ++k) ranks[k] = avg / n;
      a = b;
    }
    for (std::size_t k = 0; k < idx.size(); ++k) m(idx[k], t) = ranks[k];
  }
}

void cross_zscore(Matrix& m) {
  std::vector<double> present;
  for (std::size_t t = 0; t < m.n_dates(); ++t) {
    present.clear();
    for (std::size_t i = 0; i < m.n_assets(); ++i)
      if (!is_missing(m(i, t))) present.push_back(m(i, t));
    double mean = 0.0;
    double sd = 0.0;
    if (present.size() >= 2 && !all_identical(present)) {
      double sum = 0.0;
      for (double v : present) sum += v;
      mean = sum / static_cast<double>(present.size());
      double ss = 0.0;
      for (double v : present) ss += (v - mean) * (v - mean);
      sd = std::sqrt(ss / static_cast<double>(present.size() - 1));
    }
    for (std::size_t i = 0; i < m.n_assets(); ++i) {
      if (!(sd > 0.0)) {
        m(i, t) = kMissing;
      } else if (!is_missing(m(i, t))) {
        m(i, t) = finite_or_missing((m(i, t) - mean) / sd);
      }
    }
  }
}

Matrix time_series(const TimeSeries& node, const Matrix& x) {
  Matrix out(x.n_assets(), x.n_dates());
  if (node.window < 1) return out;
  const auto w = static_cast<std::size_t>(node.window);
  for (std::size_t i = 0; i < x.n_assets(); ++i) {
    const auto in = x.row(i);
    auto dst = out.row(i);
    for (std::size_t t = 0; t < in.size(); ++t) {
      double v = kMissing;
      switch (node.op) {
        case SeriesOp::lag:
          if (t >= w) v = in[t - w];
          break;
        case SeriesOp::diff:
          if (t >= w && !is_missing(in[t]) && !is_missing(in[t - w])) v = in[t] - in[t - w];
          break;
        case SeriesOp::pct_change:
          if (t >= w && !is_missing(in[t]) && !is_missing(in[t - w]) && in[t - w] != 0.0) v = in[t] / in[t - w] - 1.0;
          break;
        case SeriesOp::roll_mean:
        case SeriesOp::roll_std: {
          if (t + 1 < w) break;
          const std::size_t lo = t + 1 - w;
          bool complete = true;
          double sum = 0.0;
          for (std::size_t j = lo; j <= t && complete; ++j) {
            complete = !is_missing(in[j]);
            sum += in[j];
          }
          if (!complete) break;
          const double mean = sum / static_cast<double>(w);
          if (node.op == SeriesOp::roll_mean) {
            v = mean;
          } else if (w >= 2 && all_identical(in.subspan(lo, w))) {
            v = 0.0;
          } else if (w >= 2) {
            double ss = 0.0;
            for (std::size_t j = lo; j <= t; ++j) ss += (in[j] - mean) * (in[j] - mean);
            v = std::sqrt(ss / static_cast<double>(w - 1));
          }
          break;
        }
      }
      dst[t] = finite_or_missing(v);
    }
  }
  return out;
}

Matrix eval_node(const Expr& e, const Panel& panel) {
  return std::visit(
      [&](const auto& x) -> Matrix {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Column>) {
          if (!panel.has_column(x.name)) throw std::invalid_argument("unknown column '" + x.name + "'");
          Matrix m = panel.column(x.name);
          for (double& v : m.values()) v = finite_or_missing(v);
          return m;
        } else if constexpr (std::is_same_v<T, CrossSectional>) {
          Matrix m = eval_node(*x.child, panel);
          if (x.op == CrossOp::rank) cross_rank(m);
          else cross_zscore(m);
          return m;
        } else if constexpr (std::is_same_v<T, TimeSeries>) {
          return time_series(x, eval_node(*x.child, panel));
        } else if constexpr (std::is_same_v<T, Unary>) {
          Matrix m = eval_node(*x.child, panel);
          for (double& v : m.values()) {
            if (is_missing(v)) continue;
            if (x.op == UnaryOp::abs) v = std::fabs(v);
            else v = v > -1.0 ? finite_or_missing(std::log1p(v)) : kMissing;
          }
          return m;
        } else if constexpr (std::is_same_v<T, Clip>) {
          Matrix m = eval_node(*x.child, panel);
          for (double& v : m.values()) {
            if (!is_missing(v)) v = std::min(std::max(v, x.lo), x.hi);
          }
          return m;
        } else {
          Matrix acc(panel.n_assets(), panel.n_dates(), 0.0);
          for (const auto& term : x.terms) {
            const Matrix c = eval_node(*term.child, panel);
            auto dst = acc.values();
            const auto src = c.values();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += term.weight * src[k];
          }
          for (double& v : acc.values()) v = finite_or_missing(v);
          return acc;
        }
      },
      e.node);
}

}  // namespace

Matrix evaluate(const Expr& e, const Panel& panel) { return eval_node(e, panel); }

}  // namespace factorlab::dsl
