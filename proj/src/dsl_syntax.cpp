#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

#include "factorlab/dsl.hpp"

namespace factorlab::dsl {

// ---------------------------------------------------------------------------
// Builders and structure

ExprPtr col(std::string name) { return std::make_shared<const Expr>(Expr{Column{std::move(name)}}); }
ExprPtr cs_rank(ExprPtr c) { return std::make_shared<const Expr>(Expr{CrossSectional{CrossOp::rank, std::move(c)}}); }
ExprPtr cs_zscore(ExprPtr c) {
  return std::make_shared<const Expr>(Expr{CrossSectional{CrossOp::zscore, std::move(c)}});
}
ExprPtr lag(int n, ExprPtr c) { return std::make_shared<const Expr>(Expr{TimeSeries{SeriesOp::lag, n, std::move(c)}}); }
ExprPtr roll_mean(int w, ExprPtr c) {
  return std::make_shared<const Expr>(Expr{TimeSeries{SeriesOp::roll_mean, w, std::move(c)}});
}
ExprPtr roll_std(int w, ExprPtr c) {
  return std::make_shared<const Expr>(Expr{TimeSeries{SeriesOp::roll_std, w, std::move(c)}});
}
ExprPtr diff(int n, ExprPtr c) { return std::make_shared<const Expr>(Expr{TimeSeries{SeriesOp::diff, n, std::move(c)}}); }
ExprPtr pct_change(int n, ExprPtr c) {
  return std::make_shared<const Expr>(Expr{TimeSeries{SeriesOp::pct_change, n, std::move(c)}});
}
ExprPtr log1p(ExprPtr c) { return std::make_shared<const Expr>(Expr{Unary{UnaryOp::log1p, std::move(c)}}); }
ExprPtr abs(ExprPtr c) { return std::make_shared<const Expr>(Expr{Unary{UnaryOp::abs, std::move(c)}}); }
ExprPtr clip(double lo, double hi, ExprPtr c) { return std::make_shared<const Expr>(Expr{Clip{lo, hi, std::move(c)}}); }
ExprPtr lincomb(std::vector<Term> terms) { return std::make_shared<const Expr>(Expr{LinComb{std::move(terms)}}); }

const char* op_name(CrossOp op) { return op == CrossOp::rank ? "cs_rank" : "cs_zscore"; }

const char* op_name(SeriesOp op) {
  switch (op) {
    case SeriesOp::lag: return "lag";
    case SeriesOp::roll_mean: return "roll_mean";
    case SeriesOp::roll_std: return "roll_std";
    case SeriesOp::diff: return "diff";
    case SeriesOp::pct_change: return "pct_change";
  }
  return "?";
}

const char* op_name(UnaryOp op) { return op == UnaryOp::log1p ? "log1p" : "abs"; }

bool equal(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, Column>) {
          return x.name == y.name;
        } else if constexpr (std::is_same_v<T, CrossSectional> || std::is_same_v<T, Unary>) {
          return x.op == y.op && equal(x.child, y.child);
        } else if constexpr (std::is_same_v<T, TimeSeries>) {
          return x.op == y.op && x.window == y.window && equal(x.child, y.child);
        } else if constexpr (std::is_same_v<T, Clip>) {
          return x.lo == y.lo && x.hi == y.hi && equal(x.child, y.child);
        } else {
          if (x.terms.size() != y.terms.size()) return false;
          for (std::size_t k = 0; k < x.terms.size(); ++k) {
            if (!(x.terms[k].weight == y.terms[k].weight) || !equal(x.terms[k].child, y.terms[k].child)) return false;
          }
          return true;
        }
      },
      a.node);
}

std::size_t depth(const Expr& e) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Column>) {
          return 1;
        } else if constexpr (std::is_same_v<T, LinComb>) {
          std::size_t d = 0;
          for (const auto& t : x.terms) d = std::max(d, depth(*t.child));
          return d + 1;
        } else {
          return depth(*x.child) + 1;
        }
      },
      e.node);
}

namespace {
void collect_columns(const Expr& e, std::set<std::string>& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Column>) {
          out.insert(x.name);
        } else if constexpr (std::is_same_v<T, LinComb>) {
          for (const auto& t : x.terms) collect_columns(*t.child, out);
        } else {
          collect_columns(*x.child, out);
        }
      },
      e.node);
}

void write_canonical(const Expr& e, std::string& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Column>) {
          out += "col(" + x.name + ")";
        } else if constexpr (std::is_same_v<T, CrossSectional> || std::is_same_v<T, Unary>) {
          out += op_name(x.op);
          out += "(";
          write_canonical(*x.child, out);
          out += ")";
        } else if constexpr (std::is_same_v<T, TimeSeries>) {
          out += op_name(x.op);
          out += "(" + std::to_string(x.window) + ", ";
          write_canonical(*x.child, out);
          out += ")";
        } else if constexpr (std::is_same_v<T, Clip>) {
          out += "clip(" + format_double(x.lo) + ", " + format_double(x.hi) + ", ";
          write_canonical(*x.child, out);
          out += ")";
        } else {
          out += "lincomb(";
          for (std::size_t k = 0; k < x.terms.size(); ++k) {
            if (k) out += ", ";
            out += format_double(x.terms[k].weight) + ", ";
            write_canonical(*x.terms[k].child, out);
          }
          out += ")";
        }
      },
      e.node);
}
}  // namespace

std::set<std::string> columns_used(const Expr& e) {
  std::set<std::string> out;
  collect_columns(e, out);
  return out;
}

std::string canonical_form(const Expr& e) {
  std::string out;
  write_canonical(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parser
//
// Two stages: a generic call-tree reader (identifiers, numbers, nested calls)
// and a typed conversion that checks operator names and arities.

RecipeParseError::RecipeParseError(Kind kind, std::size_t offset, const std::string& message)
    : std::runtime_error(message + " at byte " + std::to_string(offset)), kind_(kind), offset_(offset) {}

namespace {

struct Node {
  enum class Kind { ident, number, call } kind;
  std::size_t offset = 0;
  std::string text;  // identifier / call name / number literal
  std::vector<Node> args;
};

class Reader {
 public:
  explicit Reader(std::string_view src) : src_(src) {}

  Node read_all() {
    skip_ws();
    Node n = read_node();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected trailing input");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw RecipeParseError(RecipeParseError::Kind::syntax, pos_, msg);
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

  Node read_node() {
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (ident_start(c)) return read_ident_or_call();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') return read_number();
    fail(std::string("unexpected character '") + c + "'");
  }

  Node read_ident_or_call() {
    Node n;
    n.offset = pos_;
    const std::size_t start = pos_;
    while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
    n.text = std::string(src_.substr(start, pos_ - start));
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      n.kind = Node::Kind::call;
      ++pos_;
      skip_ws();
      if (pos_ < src_.size() && src_[pos_] == ')') {
        ++pos_;
        return n;
      }
      while (true) {
        skip_ws();
        n.args.push_back(read_node());
        skip_ws();
        if (pos_ >= src_.size()) fail("unterminated argument list");
        if (src_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (src_[pos_] == ')') {
          ++pos_;
          break;
        }
        fail("expected ',' or ')'");
      }
    } else {
      n.kind = Node::Kind::ident;
    }
    return n;
  }

  // [+-]? (digits [. digits?] | . digits) ([eE] [+-]? digits)?
  Node read_number() {
    Node n;
    n.kind = Node::Kind::number;
    n.offset = pos_;
    const std::size_t start = pos_;
    auto digits = [&] {
      const std::size_t s = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      return pos_ - s;
    };
    if (src_[pos_] == '-' || src_[pos_] == '+') ++pos_;
    std::size_t mantissa = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) fail("malformed number");
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '-' || src_[pos_] == '+')) ++pos_;
      if (digits() == 0) fail("malformed exponent");
    }
    n.text = std::string(src_.substr(start, pos_ - start));
    return n;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

[[noreturn]] void arity_error(const Node& n, const std::string& expected) {
  throw RecipeParseError(RecipeParseError::Kind::arity, n.offset,
                         n.text + " expects " + expected + ", got " + std::to_string(n.args.size()) + " argument(s)");
}

double to_double(const Node& n) {
  if (n.kind != Node::Kind::number) {
    throw RecipeParseError(RecipeParseError::Kind::syntax, n.offset, "expected a number");
  }
  std::string_view s = n.text;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw RecipeParseError(RecipeParseError::Kind::syntax, n.offset, "number out of range '" + n.text + "'");
  }
  return v;
}

int to_int(const Node& n) {
  if (n.kind != Node::Kind::number || n.text.find_first_of(".eE") != std::string::npos) {
    throw RecipeParseError(RecipeParseError::Kind::syntax, n.offset, "expected an integer window");
  }
  std::string_view s = n.text;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw RecipeParseError(RecipeParseError::Kind::syntax, n.offset, "integer out of range '" + n.text + "'");
  }
  return v;
}

ExprPtr convert(const Node& n);

ExprPtr convert_expr(const Node& n) {
  if (n.kind != Node::Kind::call) {
    throw RecipeParseError(RecipeParseError::Kind::syntax, n.offset,
                           "expected an operator call, found '" + n.text + "'");
  }
  return convert(n);
}

std::optional<SeriesOp> series_op(std::string_view name) {
  for (auto op : {SeriesOp::lag, SeriesOp::roll_mean, SeriesOp::roll_std, SeriesOp::diff, SeriesOp::pct_change}) {
    if (name == op_name(op)) return op;
  }
  return std::nullopt;
}

ExprPtr convert(const Node& n) {
  const std::string& name = n.text;
  const auto argc = n.args.size();
  if (name == "col") {
    if (argc != 1) arity_error(n, "1 argument");
    const Node& a = n.args[0];
    if (a.kind != Node::Kind::ident) {
      throw RecipeParseError(RecipeParseError::Kind::syntax, a.offset, "col expects a column name");
    }
    return col(a.text);
  }
  if (name == "cs_rank" || name == "cs_zscore" || name == "log1p" || name == "abs") {
    if (argc != 1) arity_error(n, "1 argument");
    auto child = convert_expr(n.args[0]);
    if (name == "cs_rank") return cs_rank(std::move(child));
    if (name == "cs_zscore") return cs_zscore(std::move(child));
    if (name == "log1p") return log1p(std::move(child));
    return abs(std::move(child));
  }
  if (auto op = series_op(name)) {
    if (argc != 2) arity_error(n, "2 arguments");
    const int w = to_int(n.args[0]);
    return std::make_shared<const Expr>(Expr{TimeSeries{*op, w, convert_expr(n.args[1])}});
  }
  if (name == "clip") {
    if (argc != 3) arity_error(n, "3 arguments");
    return clip(to_double(n.args[0]), to_double(n.args[1]), convert_expr(n.args[2]));
  }
  if (name == "lincomb") {
    if (argc < 2 || argc % 2 != 0) arity_error(n, "an even number (>= 2) of arguments");
    std::vector<Term> terms;
    for (std::size_t k = 0; k < argc; k += 2) terms.push_back({to_double(n.args[k]), convert_expr(n.args[k + 1])});
    return lincomb(std::move(terms));
  }
  throw RecipeParseError(RecipeParseError::Kind::unknown_operator, n.offset, "unknown operator '" + name + "'");
}

}  // namespace

ExprPtr parse_recipe(std::string_view text) {
  Reader reader(text);
  return convert_expr(reader.read_all());
}

Recipe Recipe::from_text(std::string name, std::string_view text) {
  Recipe r;
  r.name = std::move(name);
  r.expr = parse_recipe(text);
  r.source_text = canonical_form(*r.expr);
  return r;
}

}  // namespace factorlab::dsl
