#pragma once

// Ridge aggregation of curated factors into one composite score.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "factorlab/panel.hpp"
#include "factorlab/types.hpp"

namespace factorlab {

// Per date: (x - mean) / sample std over non-missing names. Missing when a
// date has fewer than two names or zero dispersion.
Matrix standardize_by_date(const Matrix& scores);

struct FactorMatrix {
  std::vector<std::string> names;
  std::vector<Matrix> factors;  // each already standardized by date

  std::size_t q() const { return factors.size(); }
};

// Standardizes each raw score matrix; names and matrices must pair up.
FactorMatrix make_factor_matrix(std::vector<std::string> names, const std::vector<Matrix>& raw_scores);

struct NormalEquations {
  std::vector<double> gram;  // q x q, row-major: S^T S
  std::vector<double> rhs;   // S^T r
  std::size_t q = 0;
  std::size_t n_rows = 0;  // complete (factor, target) rows used
};

// Pooled over (asset, date) rows in `dates` where every factor and the
// target are present.
NormalEquations normal_equations(const FactorMatrix& f, const Matrix& targets, std::span<const std::size_t> dates);

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RidgeModel {
  std::vector<std::string> factor_names;
  std::vector<std::string> recipes;  // canonical recipe per factor, if known
  std::vector<double> beta;
  double lambda = 1.0;
  DateRange fit_window{};
  std::size_t n_rows = 0;
  std::string trace_header_hash;

  nlohmann::json to_json() const;
  static RidgeModel from_json(const nlohmann::json& j);
};

// Solves (S^T S + lambda I) beta = S^T r without an intercept. Throws
// std::invalid_argument for lambda < 0 or fewer than q + 1 complete rows,
// and SingularSystemError when the system cannot be solved reliably.
RidgeModel fit_ridge(const FactorMatrix& f, const Matrix& targets, double lambda,
                     std::span<const std::size_t> fit_dates, std::span<const Date> calendar = {});

// sum_k beta_k * F_k; missing if any component is missing. Throws
// std::invalid_argument if the factor names differ from the model's.
Matrix composite_score(const RidgeModel& model, const FactorMatrix& f);

}  // namespace factorlab
