#pragma once

// Constrained factor recipe language.
//
// A recipe is an immutable expression tree over approved point-in-time
// panel columns. There is no operator that reads a later date, so
// forward-looking recipes cannot be written at all.
//
// Concrete syntax (see docs/recipe_grammar.md):
//
//   cs_rank(lincomb(-0.6, log1p(col(mcap)), 0.5, roll_mean(10, col(range))))

#include <cstddef>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "factorlab/panel.hpp"
#include "factorlab/types.hpp"

namespace factorlab::dsl {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

enum class CrossOp { rank, zscore };
enum class SeriesOp { lag, roll_mean, roll_std, diff, pct_change };
enum class UnaryOp { log1p, abs };

struct Column {
  std::string name;
};
struct CrossSectional {
  CrossOp op;
  ExprPtr child;
};
struct TimeSeries {
  SeriesOp op;
  int window;
  ExprPtr child;
};
struct Unary {
  UnaryOp op;
  ExprPtr child;
};
struct Clip {
  double lo;
  double hi;
  ExprPtr child;
};
struct Term {
  double weight;
  ExprPtr child;
};
struct LinComb {
  std::vector<Term> terms;
};

struct Expr {
  std::variant<Column, CrossSectional, TimeSeries, Unary, Clip, LinComb> node;
};

// Deep structural equality. Weights compare with ==.
bool operator==(const Expr& a, const Expr& b);
bool equal(const ExprPtr& a, const ExprPtr& b);

ExprPtr col(std::string name);
ExprPtr cs_rank(ExprPtr child);
ExprPtr cs_zscore(ExprPtr child);
ExprPtr lag(int n, ExprPtr child);
ExprPtr roll_mean(int w, ExprPtr child);
ExprPtr roll_std(int w, ExprPtr child);
ExprPtr diff(int n, ExprPtr child);
ExprPtr pct_change(int n, ExprPtr child);
ExprPtr log1p(ExprPtr child);
ExprPtr abs(ExprPtr child);
ExprPtr clip(double lo, double hi, ExprPtr child);
ExprPtr lincomb(std::vector<Term> terms);

const char* op_name(CrossOp op);
const char* op_name(SeriesOp op);
const char* op_name(UnaryOp op);

// A leaf has depth 1.
std::size_t depth(const Expr& e);
std::set<std::string> columns_used(const Expr& e);

// Single-line text; weights use the shortest round-trip decimal form.
std::string canonical_form(const Expr& e);

class RecipeParseError : public std::runtime_error {
 public:
  enum class Kind { syntax, unknown_operator, arity };
  RecipeParseError(Kind kind, std::size_t offset, const std::string& message);
  Kind kind() const { return kind_; }
  // Byte offset into the source text.
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

ExprPtr parse_recipe(std::string_view text);

struct Violation {
  std::string rule;
  std::string message;
  std::string path;  // "root", "root/0", "root/0/2", ...
};

struct ValidationReport {
  bool ok = true;
  std::vector<Violation> violations;
  std::vector<std::string> notes;

  bool has_rule(std::string_view rule) const;
};

inline constexpr std::size_t kDefaultMaxDepth = 8;

namespace rule {
inline constexpr const char* kApprovedColumn = "approved-column";
inline constexpr const char* kTransformRequired = "transform-required";
inline constexpr const char* kMaxDepth = "max-depth";
inline constexpr const char* kWindowParam = "window-param";
inline constexpr const char* kClipBounds = "clip-bounds";
inline constexpr const char* kFiniteConstant = "finite-constant";
}  // namespace rule

ValidationReport validate(const Expr& e, const std::set<std::string>& allowed_columns,
                          std::size_t max_depth = kDefaultMaxDepth);

// Every column the panel carries is point-in-time by construction.
std::set<std::string> approved_columns(const Panel& panel);

// Total function: missing inputs, undefined operations and non-finite
// intermediate values all yield missing cells.
Matrix evaluate(const Expr& e, const Panel& panel);

struct Recipe {
  std::string name;
  ExprPtr expr;
  std::string source_text;  // canonical form of expr

  static Recipe from_text(std::string name, std::string_view text);
};

}  // namespace factorlab::dsl
