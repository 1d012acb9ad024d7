#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

#include "aqpl/error.hpp"
#include "aqpl/query.hpp"

namespace aqpl {

namespace {

struct Token {
  enum class Kind { Ident, Number, String, Symbol, End } kind = Kind::End;
  std::string text;  // identifiers keep their case; symbols are the operator text
  double number = 0.0;
  std::size_t pos = 0;
};

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

std::vector<Token> lex(std::string_view sql) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < sql.size()) {
    const char ch = sql[i];
    if (std::isspace(static_cast<unsigned char>(ch))) {
      ++i;
      continue;
    }
    Token t;
    t.pos = i;
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      std::size_t j = i;
      while (j < sql.size() && (std::isalnum(static_cast<unsigned char>(sql[j])) || sql[j] == '_' || sql[j] == '.')) ++j;
      t.kind = Token::Kind::Ident;
      t.text = std::string(sql.substr(i, j - i));
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(ch)) ||
               (ch == '.' && i + 1 < sql.size() && std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
      std::size_t j = i;
      while (j < sql.size() && (std::isdigit(static_cast<unsigned char>(sql[j])) || sql[j] == '.')) ++j;
      if (j < sql.size() && (sql[j] == 'e' || sql[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < sql.size() && (sql[k] == '+' || sql[k] == '-')) ++k;
        if (k < sql.size() && std::isdigit(static_cast<unsigned char>(sql[k]))) {
          j = k;
          while (j < sql.size() && std::isdigit(static_cast<unsigned char>(sql[j]))) ++j;
        }
      }
      t.kind = Token::Kind::Number;
      t.text = std::string(sql.substr(i, j - i));
      auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
      if (ec != std::errc{} || ptr != t.text.data() + t.text.size())
        throw ParseError("invalid number '" + t.text + "' at position " + std::to_string(i));
      i = j;
    } else if (ch == '\'') {
      std::string s;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < sql.size()) {
        if (sql[j] == '\'') {
          if (j + 1 < sql.size() && sql[j + 1] == '\'') {
            s.push_back('\'');
            j += 2;
            continue;
          }
          closed = true;
          ++j;
          break;
        }
        s.push_back(sql[j++]);
      }
      if (!closed) throw ParseError("unterminated string literal at position " + std::to_string(i));
      t.kind = Token::Kind::String;
      t.text = std::move(s);
      i = j;
    } else {
      static constexpr std::string_view two[] = {"<=", ">=", "<>", "!="};
      t.kind = Token::Kind::Symbol;
      bool matched = false;
      for (auto op : two) {
        if (sql.substr(i, 2) == op) {
          t.text = std::string(op);
          i += 2;
          matched = true;
          break;
        }
      }
      if (!matched) {
        if (std::string_view("(),*+-=<>;").find(ch) == std::string_view::npos)
          throw ParseError(std::string("unexpected character '") + ch + "' at position " + std::to_string(i));
        t.text = std::string(1, ch);
        ++i;
      }
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.pos = sql.size();
  out.push_back(end);
  return out;
}

// Valid SQL outside the supported class that the raw engine cannot answer.
struct HardUnsupported {
  std::string reason;
};

struct SelectItem {
  std::optional<AggregateSpec> aggregate;
  std::string column;
};

class Parser {
 public:
  Parser(std::string_view sql, const Schema& schema) : tokens_(lex(sql)), schema_(schema) {}

  ParseResult run() {
    expect_keyword("SELECT");
    if (is_keyword("DISTINCT")) throw HardUnsupported{std::string(reason::kDistinct)};
    std::vector<SelectItem> items;
    do {
      items.push_back(select_item());
    } while (accept_symbol(","));

    expect_keyword("FROM");
    if (peek_symbol("(")) throw HardUnsupported{std::string(reason::kSubquery)};
    std::string table = expect_ident("table name");
    if (peek_symbol(",") || is_keyword("JOIN") || is_keyword("INNER") || is_keyword("LEFT") ||
        is_keyword("RIGHT") || is_keyword("CROSS") || is_keyword("NATURAL"))
      throw HardUnsupported{std::string(reason::kJoin)};

    Filter filter;
    if (accept_keyword("WHERE")) filter = disjunction();

    std::vector<std::string> groupby;
    if (accept_keyword("GROUP")) {
      expect_keyword("BY");
      do {
        const auto name = expect_ident("group-by attribute");
        schema_.index_of_or_parse_error(name);
        groupby.push_back(name);
      } while (accept_symbol(","));
    }
    if (is_keyword("HAVING")) throw HardUnsupported{std::string(reason::kHaving)};
    if (is_keyword("ORDER")) throw HardUnsupported{std::string(reason::kOrderBy)};
    if (is_keyword("LIMIT")) throw HardUnsupported{std::string(reason::kLimit)};
    accept_symbol(";");
    if (cur().kind != Token::Kind::End) error("unexpected trailing input");

    std::vector<std::string> selected;
    std::vector<AggregateSpec> aggregates;
    for (auto& item : items) {
      if (item.aggregate) {
        aggregates.push_back(std::move(*item.aggregate));
      } else {
        if (std::find(groupby.begin(), groupby.end(), item.column) == groupby.end())
          throw ParseError("column '" + item.column + "' must appear in GROUP BY");
        selected.push_back(item.column);
      }
    }
    if (aggregates.empty()) throw ParseError("query has no aggregate");

    GeneralQuery general{aggregates, filter, groupby};
    for (const auto& g : groupby)
      if (schema_.attr(g).role != Role::Dimension)
        return Unsupported{std::string(reason::kMeasureGroupBy), general};

    SupportedQuery q;
    q.table = std::move(table);
    q.selected_groups = std::move(selected);
    q.aggregates = std::move(aggregates);
    q.groupby = std::move(groupby);
    if (auto why = to_predicate(filter, q.predicate)) return Unsupported{*why, general};
    for (const auto& [attr, r] : q.predicate.ranges)
      if (r.is_empty()) return Unsupported{std::string(reason::kEmptyPredicate), general};
    for (const auto& [attr, values] : q.predicate.in_lists)
      if (values.empty()) return Unsupported{std::string(reason::kEmptyPredicate), general};
    return q;
  }

 private:
  struct SchemaView {
    const Schema& s;
    std::size_t index_of_or_parse_error(const std::string& name) const {
      if (auto i = s.find(name)) return *i;
      throw ParseError("unknown attribute '" + name + "'");
    }
    const Attribute& attr(const std::string& name) const { return s[index_of_or_parse_error(name)]; }
  };

  const Token& cur() const { return tokens_[pos_]; }
  void advance() {
    if (pos_ + 1 < tokens_.size()) ++pos_;
  }

  [[noreturn]] void error(const std::string& what) const {
    std::string near = cur().kind == Token::Kind::End ? "end of input" : "'" + cur().text + "'";
    throw ParseError(what + " near " + near + " at position " + std::to_string(cur().pos));
  }

  bool is_keyword(std::string_view kw) const {
    return cur().kind == Token::Kind::Ident && upper(cur().text) == kw;
  }
  bool accept_keyword(std::string_view kw) {
    if (!is_keyword(kw)) return false;
    advance();
    return true;
  }
  void expect_keyword(std::string_view kw) {
    if (!accept_keyword(kw)) error("expected " + std::string(kw));
  }
  bool peek_symbol(std::string_view s) const {
    return cur().kind == Token::Kind::Symbol && cur().text == s;
  }
  bool accept_symbol(std::string_view s) {
    if (!peek_symbol(s)) return false;
    advance();
    return true;
  }
  void expect_symbol(std::string_view s) {
    if (!accept_symbol(s)) error("expected '" + std::string(s) + "'");
  }
  std::string expect_ident(const char* what) {
    if (cur().kind != Token::Kind::Ident) error(std::string("expected ") + what);
    std::string s = cur().text;
    advance();
    return s;
  }

  SelectItem select_item() {
    if (cur().kind != Token::Kind::Ident) error("expected aggregate or column");
    const std::string name = cur().text;
    advance();
    if (!accept_symbol("(")) {
      schema_.index_of_or_parse_error(name);
      return {std::nullopt, name};
    }
    const std::string fn = upper(name);
    if (is_keyword("DISTINCT")) throw HardUnsupported{std::string(reason::kDistinct)};
    if (fn != "AVG" && fn != "SUM" && fn != "COUNT") {
      static constexpr std::string_view known[] = {"MIN", "MAX", "STDDEV", "VARIANCE", "MEDIAN"};
      if (std::find(std::begin(known), std::end(known), fn) == std::end(known))
        error("unknown function " + name);
      throw HardUnsupported{std::string(reason::kAggregate)};
    }
    AggregateSpec spec;
    if (accept_symbol("*")) {
      if (fn != "COUNT") error(fn + "(*) is not valid");
      spec.fn = AggregateSpec::Fn::Count;
    } else {
      if (fn == "COUNT") throw HardUnsupported{std::string(reason::kAggregate)};
      spec.fn = fn == "AVG" ? AggregateSpec::Fn::Avg : AggregateSpec::Fn::Sum;
      spec.arg = expression();
      for (const auto& a : spec.arg->attributes()) {
        const auto& attr = schema_.attr(a);
        if (attr.role != Role::Measure)
          throw ParseError("attribute '" + a + "' inside an aggregate must be a measure");
      }
    }
    expect_symbol(")");
    return {spec, {}};
  }

  Expr expression() {
    Expr lhs = term();
    while (peek_symbol("+") || peek_symbol("-")) {
      const auto op = cur().text == "+" ? Expr::Op::Add : Expr::Op::Sub;
      advance();
      lhs = Expr::binary(op, std::move(lhs), term());
    }
    return lhs;
  }

  Expr term() {
    Expr lhs = factor();
    while (accept_symbol("*")) lhs = Expr::binary(Expr::Op::Mul, std::move(lhs), factor());
    return lhs;
  }

  Expr factor() {
    if (accept_symbol("-")) {
      Expr inner = factor();
      if (inner.op == Expr::Op::Const) return Expr::constant(-inner.value);
      return Expr::binary(Expr::Op::Mul, Expr::constant(-1.0), std::move(inner));
    }
    if (accept_symbol("(")) {
      if (is_keyword("SELECT")) throw HardUnsupported{std::string(reason::kSubquery)};
      Expr e = expression();
      expect_symbol(")");
      return e;
    }
    if (cur().kind == Token::Kind::Number) {
      const double v = cur().number;
      advance();
      return Expr::constant(v);
    }
    if (cur().kind == Token::Kind::Ident) {
      std::string name = cur().text;
      advance();
      return Expr::attr(std::move(name));
    }
    error("expected expression");
  }

  Filter disjunction() {
    Filter lhs = conjunction();
    if (!is_keyword("OR")) return lhs;
    Filter f;
    f.kind = Filter::Kind::Or;
    f.children.push_back(std::move(lhs));
    while (accept_keyword("OR")) f.children.push_back(conjunction());
    return f;
  }

  Filter conjunction() {
    Filter lhs = unary();
    if (!is_keyword("AND")) return lhs;
    Filter f;
    f.kind = Filter::Kind::And;
    f.children.push_back(std::move(lhs));
    while (accept_keyword("AND")) f.children.push_back(unary());
    return f;
  }

  Filter unary() {
    if (accept_keyword("NOT")) {
      Filter f;
      f.kind = Filter::Kind::Not;
      f.children.push_back(unary());
      return f;
    }
    if (accept_symbol("(")) {
      if (is_keyword("SELECT")) throw HardUnsupported{std::string(reason::kSubquery)};
      Filter f = disjunction();
      expect_symbol(")");
      return f;
    }
    return atom();
  }

  // Literal converted to the attribute's kind.
  Value literal(const Attribute& attr) {
    bool negative = false;
    if (accept_symbol("-")) negative = true;
    if (cur().kind == Token::Kind::Number) {
      Value v = attr.kind == Kind::Numeric ? Value(negative ? -cur().number : cur().number)
                                           : Value((negative ? "-" : "") + cur().text);
      advance();
      return v;
    }
    if (cur().kind == Token::Kind::String && !negative) {
      if (attr.kind == Kind::Numeric)
        error("string literal compared with numeric attribute '" + attr.name + "'");
      Value v = cur().text;
      advance();
      return v;
    }
    if (accept_symbol("(") && is_keyword("SELECT")) throw HardUnsupported{std::string(reason::kSubquery)};
    error("expected literal");
  }

  Filter atom() {
    const std::string name = expect_ident("attribute");
    const Attribute& attr = schema_.attr(name);
    Filter f;
    f.attr = name;
    bool negated = false;
    if (accept_keyword("NOT")) negated = true;

    if (accept_keyword("IN")) {
      expect_symbol("(");
      if (is_keyword("SELECT")) throw HardUnsupported{std::string(reason::kSubquery)};
      f.kind = Filter::Kind::In;
      do {
        f.literals.push_back(literal(attr));
      } while (accept_symbol(","));
      expect_symbol(")");
    } else if (accept_keyword("BETWEEN")) {
      f.kind = Filter::Kind::Between;
      f.literals.push_back(literal(attr));
      expect_keyword("AND");
      f.literals.push_back(literal(attr));
    } else if (accept_keyword("LIKE")) {
      if (cur().kind != Token::Kind::String) error("expected pattern string");
      f.kind = Filter::Kind::Like;
      f.literals.emplace_back(cur().text);
      advance();
    } else {
      if (negated) error("expected IN, BETWEEN or LIKE after NOT");
      if (cur().kind != Token::Kind::Symbol) error("expected comparison operator");
      const std::string op = cur().text;
      if (op == "=") f.cmp = Filter::Cmp::Eq;
      else if (op == "<>" || op == "!=") f.cmp = Filter::Cmp::Ne;
      else if (op == "<") f.cmp = Filter::Cmp::Lt;
      else if (op == "<=") f.cmp = Filter::Cmp::Le;
      else if (op == ">") f.cmp = Filter::Cmp::Gt;
      else if (op == ">=") f.cmp = Filter::Cmp::Ge;
      else error("expected comparison operator");
      advance();
      f.kind = Filter::Kind::Compare;
      f.literals.push_back(literal(attr));
    }
    if (!negated) return f;
    Filter n;
    n.kind = Filter::Kind::Not;
    n.children.push_back(std::move(f));
    return n;
  }

  // Folds a conjunctive filter into a predicate; returns the reason when the
  // filter falls outside the supported class.
  std::optional<std::string> to_predicate(const Filter& f, Predicate& out) const {
    switch (f.kind) {
      case Filter::Kind::True: return std::nullopt;
      case Filter::Kind::And:
        for (const auto& c : f.children)
          if (auto why = to_predicate(c, out)) return why;
        return std::nullopt;
      case Filter::Kind::Or: return std::string(reason::kDisjunction);
      case Filter::Kind::Not: return std::string(reason::kNegation);
      case Filter::Kind::Like: return std::string(reason::kLike);
      default: break;
    }
    const Attribute& attr = schema_.attr(f.attr);
    if (attr.role != Role::Dimension) return std::string(reason::kMeasurePredicate);
    if (f.kind == Filter::Kind::Compare && f.cmp == Filter::Cmp::Ne) return std::string(reason::kInequality);

    if (attr.kind == Kind::Categorical) {
      if (f.kind == Filter::Kind::Between ||
          (f.kind == Filter::Kind::Compare && f.cmp != Filter::Cmp::Eq))
        return std::string(reason::kCategoricalRange);
      std::vector<std::string> values;
      for (const auto& v : f.literals) values.push_back(std::get<std::string>(v));
      out.add_in_list(f.attr, std::move(values));
      return std::nullopt;
    }

    if (f.kind == Filter::Kind::In) {
      std::vector<double> vs;
      for (const auto& v : f.literals) vs.push_back(std::get<double>(v));
      std::sort(vs.begin(), vs.end());
      vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
      if (vs.size() > 1) return std::string(reason::kDisjunction);
      out.add_range(f.attr, Range::point(vs.front()));
      return std::nullopt;
    }
    if (f.kind == Filter::Kind::Between) {
      Range r{std::get<double>(f.literals[0]), std::get<double>(f.literals[1]), false, false};
      out.add_range(f.attr, r);
      return std::nullopt;
    }
    const double v = std::get<double>(f.literals[0]);
    Range r;
    switch (f.cmp) {
      case Filter::Cmp::Eq: r = Range::point(v); break;
      case Filter::Cmp::Lt: r.hi = v; r.hi_open = true; break;
      case Filter::Cmp::Le: r.hi = v; break;
      case Filter::Cmp::Gt: r.lo = v; r.lo_open = true; break;
      case Filter::Cmp::Ge: r.lo = v; break;
      case Filter::Cmp::Ne: break;
    }
    out.add_range(f.attr, r);
    return std::nullopt;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  SchemaView schema_;
};

}  // namespace

ParseResult parse(std::string_view sql, const Schema& schema) {
  try {
    return Parser(sql, schema).run();
  } catch (const HardUnsupported& u) {
    return Unsupported{u.reason, std::nullopt};
  }
}

}  // namespace aqpl
