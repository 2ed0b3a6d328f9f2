#include "factorlab/combine.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace factorlab {

Matrix standardize_by_date(const Matrix& scores) {
  Matrix out(scores.n_assets(), scores.n_dates());
  std::vector<double> present;
  for (std::size_t t = 0; t < scores.n_dates(); ++t) {
    present.clear();
    for (std::size_t i = 0; i < scores.n_assets(); ++i)
      if (!is_missing(scores(i, t))) present.push_back(scores(i, t));
    if (present.size() < 2 || all_identical(present)) continue;
    double sum = 0.0;
    for (double v : present) sum += v;
    const double mean = sum / static_cast<double>(present.size());
    double ss = 0.0;
    for (double v : present) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(present.size() - 1));
    if (!(sd > 0.0)) continue;
    for (std::size_t i = 0; i < scores.n_assets(); ++i) {
      if (!is_missing(scores(i, t))) out(i, t) = finite_or_missing((scores(i, t) - mean) / sd);
    }
  }
  return out;
}

FactorMatrix make_factor_matrix(std::vector<std::string> names, const std::vector<Matrix>& raw_scores) {
  if (names.size() != raw_scores.size()) throw std::invalid_argument("factor names and matrices differ in count");
  FactorMatrix f;
  f.names = std::move(names);
  for (const auto& m : raw_scores) {
    if (!f.factors.empty() && !m.same_shape(f.factors.front())) throw std::invalid_argument("factor shapes differ");
    f.factors.push_back(standardize_by_date(m));
  }
  return f;
}

NormalEquations normal_equations(const FactorMatrix& f, const Matrix& targets, std::span<const std::size_t> dates) {
  NormalEquations ne;
  ne.q = f.q();
  ne.gram.assign(ne.q * ne.q, 0.0);
  ne.rhs.assign(ne.q, 0.0);
  std::vector<double> row(ne.q);
  for (std::size_t t : dates) {
    for (std::size_t i = 0; i < targets.n_assets(); ++i) {
      const double r = targets(i, t);
      if (is_missing(r)) continue;
      bool complete = true;
      for (std::size_t k = 0; k < ne.q && complete; ++k) {
        row[k] = f.factors[k](i, t);
        complete = !is_missing(row[k]);
      }
      if (!complete) continue;
      ++ne.n_rows;
      for (std::size_t a = 0; a < ne.q; ++a) {
        ne.rhs[a] += row[a] * r;
        for (std::size_t b = 0; b < ne.q; ++b) ne.gram[a * ne.q + b] += row[a] * row[b];
      }
    }
  }
  return ne;
}

RidgeModel fit_ridge(const FactorMatrix& f, const Matrix& targets, double lambda,
                     std::span<const std::size_t> fit_dates, std::span<const Date> calendar) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("ridge lambda must be >= 0");
  if (f.q() == 0) throw std::invalid_argument("fit_ridge needs at least one factor");
  const NormalEquations ne = normal_equations(f, targets, fit_dates);
  if (ne.n_rows < ne.q + 1) {
    throw std::invalid_argument("fit_ridge: " + std::to_string(ne.n_rows) + " complete rows for " +
                                std::to_string(ne.q) + " factors");
  }
  const auto q = static_cast<Eigen::Index>(ne.q);
  Eigen::MatrixXd a(q, q);
  Eigen::VectorXd b(q);
  for (Eigen::Index r = 0; r < q; ++r) {
    b(r) = ne.rhs[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < q; ++c) a(r, c) = ne.gram[static_cast<std::size_t>(r * q + c)];
    a(r, r) += lambda;
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  const Eigen::VectorXd d = ldlt.vectorD();
  const double d_max = d.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * d_max) || !(ldlt.rcond() > 1e-12)) {
    throw SingularSystemError("ridge system is singular; set lambda > 0");
  }
  const Eigen::VectorXd beta = ldlt.solve(b);
  RidgeModel m;
  m.factor_names = f.names;
  m.lambda = lambda;
  m.n_rows = ne.n_rows;
  m.beta.assign(beta.data(), beta.data() + beta.size());
  for (double x : m.beta) {
    if (!std::isfinite(x)) throw SingularSystemError("ridge solution is not finite");
  }
  if (!calendar.empty() && !fit_dates.empty()) {
    m.fit_window = DateRange{calendar[fit_dates.front()], calendar[fit_dates.back()]};
  }
  return m;
}

Matrix composite_score(const RidgeModel& model, const FactorMatrix& f) {
  if (model.factor_names != f.names) throw std::invalid_argument("composite_score: factor name order mismatch");
  if (model.beta.size() != f.q()) throw std::invalid_argument("composite_score: beta length mismatch");
  if (f.q() == 0) return {};
  const Matrix& first = f.factors.front();
  Matrix out(first.n_assets(), first.n_dates());
  for (std::size_t i = 0; i < out.n_assets(); ++i) {
    for (std::size_t t = 0; t < out.n_dates(); ++t) {
      double s = 0.0;
      bool complete = true;
      for (std::size_t k = 0; k < f.q() && complete; ++k) {
        const double v = f.factors[k](i, t);
        complete = !is_missing(v);
        s += model.beta[k] * v;
      }
      if (complete) out(i, t) = finite_or_missing(s);
    }
  }
  return out;
}

nlohmann::json RidgeModel::to_json() const {
  return nlohmann::json{{"factor_names", factor_names},
                        {"recipes", recipes},
                        {"beta", beta},
                        {"lambda", lambda},
                        {"fit_window", {format_date(fit_window.start), format_date(fit_window.end)}},
                        {"n_rows", n_rows},
                        {"trace_header_hash", trace_header_hash}};
}

RidgeModel RidgeModel::from_json(const nlohmann::json& j) {
  RidgeModel m;
  m.factor_names = j.at("factor_names").get<std::vector<std::string>>();
  m.recipes = j.at("recipes").get<std::vector<std::string>>();
  m.beta = j.at("beta").get<std::vector<double>>();
  m.lambda = j.at("lambda").get<double>();
  m.fit_window = DateRange{parse_date(j.at("fit_window").at(0).get<std::string>()),
                           parse_date(j.at("fit_window").at(1).get<std::string>())};
  m.n_rows = j.at("n_rows").get<std::size_t>();
  m.trace_header_hash = j.at("trace_header_hash").get<std::string>();
  if (m.beta.size() != m.factor_names.size()) throw std::invalid_argument("model beta/factor length mismatch");
  return m;
}

}  // namespace factorlab
