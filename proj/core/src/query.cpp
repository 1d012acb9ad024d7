#include "aqpl/query.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "aqpl/error.hpp"

namespace aqpl {

Expr Expr::attr(std::string name) {
  Expr e;
  e.op = Op::Attr;
  e.name = std::move(name);
  return e;
}

Expr Expr::constant(double v) {
  Expr e;
  e.op = Op::Const;
  e.value = v;
  return e;
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  Expr e;
  e.op = op;
  e.args.push_back(std::move(lhs));
  e.args.push_back(std::move(rhs));
  return e;
}

std::vector<std::string> Expr::attributes() const {
  std::vector<std::string> out;
  auto walk = [&](const Expr& e, auto&& self) -> void {
    if (e.op == Op::Attr) {
      if (std::find(out.begin(), out.end(), e.name) == out.end()) out.push_back(e.name);
    }
    for (const auto& a : e.args) self(a, self);
  };
  walk(*this, walk);
  return out;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

namespace {

std::string print_operand(const Expr& e) {
  if (e.op == Expr::Op::Attr || e.op == Expr::Op::Const) return print(e);
  return "(" + print(e) + ")";
}

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') out += "''";
    else out.push_back(ch);
  }
  out += '\'';
  return out;
}

void print_predicate(std::ostringstream& os, const Predicate& p) {
  std::vector<std::string> terms;
  for (const auto& [attr, r] : p.ranges) {
    const bool lo = std::isfinite(r.lo), hi = std::isfinite(r.hi);
    if (r.is_point()) {
      terms.push_back(attr + " = " + format_number(r.lo));
    } else if (lo && hi && !r.lo_open && !r.hi_open) {
      terms.push_back(attr + " BETWEEN " + format_number(r.lo) + " AND " + format_number(r.hi));
    } else {
      if (lo) terms.push_back(attr + (r.lo_open ? " > " : " >= ") + format_number(r.lo));
      if (hi) terms.push_back(attr + (r.hi_open ? " < " : " <= ") + format_number(r.hi));
    }
  }
  for (const auto& [attr, values] : p.in_lists) {
    if (values.size() == 1) {
      terms.push_back(attr + " = " + quote(values.front()));
    } else {
      std::string t = attr + " IN (";
      for (std::size_t i = 0; i < values.size(); ++i) t += (i ? ", " : "") + quote(values[i]);
      terms.push_back(t + ")");
    }
  }
  if (terms.empty()) return;
  os << " WHERE ";
  for (std::size_t i = 0; i < terms.size(); ++i) os << (i ? " AND " : "") << terms[i];
}

}  // namespace

std::string print(const Expr& e) {
  switch (e.op) {
    case Expr::Op::Attr: return e.name;
    case Expr::Op::Const: return format_number(e.value);
    case Expr::Op::Add: return print_operand(e.args[0]) + " + " + print_operand(e.args[1]);
    case Expr::Op::Sub: return print_operand(e.args[0]) + " - " + print_operand(e.args[1]);
    case Expr::Op::Mul: return print_operand(e.args[0]) + " * " + print_operand(e.args[1]);
  }
  return {};
}

std::string print(const AggregateSpec& a) {
  switch (a.fn) {
    case AggregateSpec::Fn::Avg: return "AVG(" + print(*a.arg) + ")";
    case AggregateSpec::Fn::Sum: return "SUM(" + print(*a.arg) + ")";
    case AggregateSpec::Fn::Count: return "COUNT(*)";
  }
  return {};
}

Range Range::intersect(const Range& o) const {
  Range r = *this;
  if (o.lo > r.lo || (o.lo == r.lo && o.lo_open)) {
    r.lo = o.lo;
    r.lo_open = o.lo_open;
  }
  if (o.hi < r.hi || (o.hi == r.hi && o.hi_open)) {
    r.hi = o.hi;
    r.hi_open = o.hi_open;
  }
  return r;
}

void Predicate::add_range(const std::string& attr, const Range& r) {
  auto [it, inserted] = ranges.emplace(attr, r);
  if (!inserted) it->second = it->second.intersect(r);
}

void Predicate::add_in_list(const std::string& attr, std::vector<std::string> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  auto [it, inserted] = in_lists.emplace(attr, values);
  if (!inserted) {
    std::vector<std::string> both;
    std::set_intersection(it->second.begin(), it->second.end(), values.begin(), values.end(),
                          std::back_inserter(both));
    it->second = std::move(both);
  }
}

std::string QuerySnippet::key() const {
  if (agg == SnippetAgg::Freq) return "FREQ";
  return "AVG(" + print(*measure) + ")";
}

std::string print(const QuerySnippet& s, std::string_view table) {
  std::ostringstream os;
  os << "SELECT " << (s.agg == SnippetAgg::Freq ? "COUNT(*)" : "AVG(" + print(*s.measure) + ")")
     << " FROM " << table;
  print_predicate(os, s.predicate);
  return os.str();
}

std::string print(const SupportedQuery& q) {
  std::ostringstream os;
  os << "SELECT ";
  bool first = true;
  for (const auto& g : q.selected_groups) {
    os << (first ? "" : ", ") << g;
    first = false;
  }
  for (const auto& a : q.aggregates) {
    os << (first ? "" : ", ") << print(a);
    first = false;
  }
  os << " FROM " << q.table;
  print_predicate(os, q.predicate);
  if (!q.groupby.empty()) {
    os << " GROUP BY ";
    for (std::size_t i = 0; i < q.groupby.size(); ++i) os << (i ? ", " : "") << q.groupby[i];
  }
  return os.str();
}

std::size_t Decomposition::snippet_count() const {
  std::size_t n = 0;
  for (const auto& g : improved) n += g.snippets.size();
  return n;
}

std::vector<QuerySnippet> group_snippets(const SupportedQuery& q, const GroupKey& key) {
  Predicate pred = q.predicate;
  for (std::size_t i = 0; i < q.groupby.size() && i < key.size(); ++i) {
    if (const auto* d = std::get_if<double>(&key[i])) pred.add_range(q.groupby[i], Range::point(*d));
    else pred.add_in_list(q.groupby[i], {std::get<std::string>(key[i])});
  }
  std::vector<QuerySnippet> out;
  auto push = [&](SnippetAgg agg, const std::optional<Expr>& measure) {
    QuerySnippet s{agg, agg == SnippetAgg::Avg ? measure : std::nullopt, pred};
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  };
  for (const auto& a : q.aggregates) {
    switch (a.fn) {
      case AggregateSpec::Fn::Avg: push(SnippetAgg::Avg, a.arg); break;
      case AggregateSpec::Fn::Count: push(SnippetAgg::Freq, std::nullopt); break;
      case AggregateSpec::Fn::Sum:
        push(SnippetAgg::Avg, a.arg);
        push(SnippetAgg::Freq, std::nullopt);
        break;
    }
  }
  return out;
}

Decomposition decompose(const SupportedQuery& q, std::span<const GroupKey> group_values,
                        std::size_t n_max) {
  Decomposition d;
  if (q.groupby.empty()) {
    if (n_max > 0) d.improved.push_back({GroupKey{}, group_snippets(q, GroupKey{})});
    else d.passthrough.emplace_back();
    return d;
  }
  for (std::size_t i = 0; i < group_values.size(); ++i) {
    if (i < n_max) d.improved.push_back({group_values[i], group_snippets(q, group_values[i])});
    else d.passthrough.push_back(group_values[i]);
  }
  return d;
}

namespace {

const SnippetValue& find_answer(std::span<const SnippetValue> answers, const std::string& key) {
  for (const auto& a : answers)
    if (a.key == key) return a;
  throw DataError("missing snippet answer for " + key);
}

}  // namespace

ComposedAnswer compose_answer(std::span<const SnippetValue> answers, const AggregateSpec& spec,
                              std::size_t cardinality) {
  const double n = static_cast<double>(cardinality);
  switch (spec.fn) {
    case AggregateSpec::Fn::Avg: {
      const auto& a = find_answer(answers, "AVG(" + print(*spec.arg) + ")");
      return {a.value, a.error};
    }
    case AggregateSpec::Fn::Count: {
      const auto& f = find_answer(answers, "FREQ");
      return {std::round(f.value * n), f.error * n};
    }
    case AggregateSpec::Fn::Sum: {
      const auto& a = find_answer(answers, "AVG(" + print(*spec.arg) + ")");
      const auto& f = find_answer(answers, "FREQ");
      const double count = std::round(f.value * n);
      const double count_err = f.error * n;
      return {a.value * count, std::hypot(a.value * count_err, count * a.error)};
    }
  }
  return {};
}

}  // namespace aqpl
