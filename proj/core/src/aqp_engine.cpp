#include "aqpl/aqp_engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "aqpl/error.hpp"

namespace aqpl {

Sample build_sample(const Relation& relation, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw DataError("sample rate must be in (0, 1]");
  if (relation.empty()) throw DataError("empty relation");
  const std::size_t n = relation.row_count();
  Sample s{relation.version(), rate, seed, {}, false};
  const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(rate * static_cast<double>(n))), 1, n);
  if (k == n) {
    s.rows.resize(n);
    std::iota(s.rows.begin(), s.rows.end(), std::size_t{0});
    return s;
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  s.rows.reserve(k);
  std::mt19937_64 rng(seed);
  // Selection sampling over a forward range keeps the output sorted.
  std::sample(all.begin(), all.end(), std::back_inserter(s.rows), k, rng);
  return s;
}

RowMatcher::RowMatcher(const Relation& relation, const Predicate& predicate) {
  for (const auto& [attr, range] : predicate.ranges) {
    numeric_.push_back({relation.numeric(attr), range});
    if (range.is_empty()) never_ = true;
  }
  for (const auto& [attr, values] : predicate.in_lists) {
    const auto& col = relation.categorical(attr);
    CategoricalTest t{&col, std::vector<bool>(col.dictionary.size(), false)};
    for (std::size_t c = 0; c < col.dictionary.size(); ++c)
      t.allowed[c] = std::binary_search(values.begin(), values.end(), col.dictionary[c]);
    categorical_.push_back(std::move(t));
  }
}

bool RowMatcher::operator()(std::size_t row) const {
  if (never_) return false;
  for (const auto& t : numeric_)
    if (!t.range.contains(t.column[row])) return false;
  for (const auto& t : categorical_)
    if (!t.allowed[t.column->codes[row]]) return false;
  return true;
}

BoundExpr::BoundExpr(const Relation& relation, const Expr& expr) { root_ = build(relation, expr); }

int BoundExpr::build(const Relation& relation, const Expr& expr) {
  Node n{expr.op};
  if (expr.op == Expr::Op::Attr) n.column = relation.numeric(expr.name);
  else if (expr.op == Expr::Op::Const) n.value = expr.value;
  else {
    n.lhs = build(relation, expr.args.at(0));
    n.rhs = build(relation, expr.args.at(1));
  }
  nodes_.push_back(n);
  return static_cast<int>(nodes_.size()) - 1;
}

double BoundExpr::eval(int node, std::size_t row) const {
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  switch (n.op) {
    case Expr::Op::Attr: return n.column[row];
    case Expr::Op::Const: return n.value;
    case Expr::Op::Add: return eval(n.lhs, row) + eval(n.rhs, row);
    case Expr::Op::Sub: return eval(n.lhs, row) - eval(n.rhs, row);
    case Expr::Op::Mul: return eval(n.lhs, row) * eval(n.rhs, row);
  }
  return 0.0;
}

double BoundExpr::operator()(std::size_t row) const { return eval(root_, row); }

namespace {

// Welford running mean and variance.
struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double sample_variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

template <typename Rows>
RawAnswer scan(const Relation& relation, const Rows& rows, std::size_t total,
               const QuerySnippet& snippet, bool exact) {
  const RowMatcher match(relation, snippet.predicate);
  if (snippet.agg == SnippetAgg::Freq) {
    std::size_t m = 0;
    for (std::size_t r : rows) m += match(r) ? 1 : 0;
    const double p = total ? static_cast<double>(m) / static_cast<double>(total) : 0.0;
    const double beta = exact ? 0.0 : std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(total));
    return {p, beta, m};
  }
  const BoundExpr value(relation, *snippet.measure);
  Moments mo;
  for (std::size_t r : rows)
    if (match(r)) mo.add(value(r));
  if (mo.n == 0 || (!exact && mo.n < 2)) throw DataError("empty selection");
  const double beta = exact ? 0.0 : std::sqrt(mo.sample_variance() / static_cast<double>(mo.n));
  return {mo.mean, beta, mo.n};
}

struct AllRows {
  std::size_t n;
  struct It {
    std::size_t i;
    std::size_t operator*() const { return i; }
    It& operator++() {
      ++i;
      return *this;
    }
    bool operator!=(const It& o) const { return i != o.i; }
  };
  It begin() const { return {0}; }
  It end() const { return {n}; }
};

}  // namespace

RawAnswer estimate_snippet(const Relation& relation, const Sample& sample, const QuerySnippet& snippet) {
  if (sample.exhaustive) return exact_snippet(relation, snippet);
  if (sample.rows.empty()) throw DataError("empty sample");
  return scan(relation, sample.rows, sample.rows.size(), snippet, false);
}

RawAnswer exact_snippet(const Relation& relation, const QuerySnippet& snippet) {
  if (relation.empty()) throw DataError("empty relation");
  return scan(relation, AllRows{relation.row_count()}, relation.row_count(), snippet, true);
}

namespace {

GroupKey group_key(const Relation& relation, std::span<const std::size_t> cols, std::size_t row) {
  GroupKey key;
  key.reserve(cols.size());
  for (std::size_t c : cols) key.push_back(relation.value(row, c));
  return key;
}

bool like(std::string_view s, std::string_view p) {
  // Iterative wildcard match with backtracking on the last '%'.
  std::size_t si = 0, pi = 0, star = std::string_view::npos, mark = 0;
  while (si < s.size()) {
    if (pi < p.size() && (p[pi] == '_' || p[pi] == s[si])) {
      ++si;
      ++pi;
    } else if (pi < p.size() && p[pi] == '%') {
      star = pi++;
      mark = si;
    } else if (star != std::string_view::npos) {
      pi = star + 1;
      si = ++mark;
    } else {
      return false;
    }
  }
  while (pi < p.size() && p[pi] == '%') ++pi;
  return pi == p.size();
}

class FilterEval {
 public:
  FilterEval(const Relation& relation, const Filter& f) : relation_(relation), f_(f) {}
  bool operator()(std::size_t row) const { return eval(f_, row); }

 private:
  bool eval(const Filter& f, std::size_t row) const {
    switch (f.kind) {
      case Filter::Kind::True: return true;
      case Filter::Kind::And:
        return std::all_of(f.children.begin(), f.children.end(), [&](const Filter& c) { return eval(c, row); });
      case Filter::Kind::Or:
        return std::any_of(f.children.begin(), f.children.end(), [&](const Filter& c) { return eval(c, row); });
      case Filter::Kind::Not: return !eval(f.children.front(), row);
      default: break;
    }
    const Value v = relation_.value(row, relation_.schema().index_of(f.attr));
    switch (f.kind) {
      case Filter::Kind::In:
        return std::find(f.literals.begin(), f.literals.end(), v) != f.literals.end();
      case Filter::Kind::Between: return f.literals[0] <= v && v <= f.literals[1];
      case Filter::Kind::Like: {
        const auto* s = std::get_if<std::string>(&v);
        if (!s) throw DataError("LIKE on numeric attribute '" + f.attr + "'");
        return like(*s, std::get<std::string>(f.literals[0]));
      }
      default: break;
    }
    const Value& lit = f.literals[0];
    switch (f.cmp) {
      case Filter::Cmp::Eq: return v == lit;
      case Filter::Cmp::Ne: return v != lit;
      case Filter::Cmp::Lt: return v < lit;
      case Filter::Cmp::Le: return v <= lit;
      case Filter::Cmp::Gt: return v > lit;
      case Filter::Cmp::Ge: return v >= lit;
    }
    return false;
  }

  const Relation& relation_;
  const Filter& f_;
};

}  // namespace

std::vector<GroupKey> sample_groups(const Relation& relation, const Sample& sample,
                                    const Predicate& predicate, std::span<const std::string> groupby) {
  std::vector<std::size_t> cols;
  for (const auto& g : groupby) cols.push_back(relation.schema().index_of(g));
  const RowMatcher match(relation, predicate);
  std::map<GroupKey, std::size_t> seen;
  std::vector<GroupKey> out;
  for (std::size_t r : sample.rows) {
    if (!match(r)) continue;
    GroupKey key = group_key(relation, cols, r);
    if (seen.emplace(key, out.size()).second) out.push_back(std::move(key));
  }
  return out;
}

std::vector<GeneralRow> estimate_general(const Relation& relation, const Sample& sample,
                                         const GeneralQuery& query) {
  std::vector<std::size_t> cols;
  for (const auto& g : query.groupby) cols.push_back(relation.schema().index_of(g));
  const FilterEval match(relation, query.filter);

  std::vector<BoundExpr> exprs;
  for (const auto& a : query.aggregates)
    if (a.arg) exprs.emplace_back(relation, *a.arg);

  struct Acc {
    std::size_t m = 0;
    std::vector<Moments> moments;
  };
  std::map<GroupKey, std::size_t> index;
  std::vector<std::pair<GroupKey, Acc>> groups;
  for (std::size_t r : sample.rows) {
    if (!match(r)) continue;
    GroupKey key = group_key(relation, cols, r);
    auto [it, fresh] = index.emplace(key, groups.size());
    if (fresh) groups.push_back({std::move(key), Acc{0, std::vector<Moments>(exprs.size())}});
    auto& acc = groups[it->second].second;
    ++acc.m;
    for (std::size_t e = 0; e < exprs.size(); ++e) acc.moments[e].add(exprs[e](r));
  }
  if (query.groupby.empty() && groups.empty()) groups.push_back({GroupKey{}, Acc{0, std::vector<Moments>(exprs.size())}});

  const double n = static_cast<double>(sample.rows.size());
  std::vector<GeneralRow> out;
  for (auto& [key, acc] : groups) {
    GeneralRow row{key, {}};
    const double p = n > 0 ? static_cast<double>(acc.m) / n : 0.0;
    const double p_err = sample.exhaustive || n == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / n);
    std::size_t e = 0;
    for (const auto& a : query.aggregates) {
      std::vector<SnippetValue> parts{{"FREQ", p, p_err}};
      const std::string avg_key = a.arg ? "AVG(" + print(*a.arg) + ")" : "";
      if (a.arg) {
        const auto& mo = acc.moments[e++];
        if (mo.n == 0 || (!sample.exhaustive && mo.n < 2)) {
          row.aggregates.emplace_back(std::nullopt);
          continue;
        }
        const double err = sample.exhaustive ? 0.0 : std::sqrt(mo.sample_variance() / static_cast<double>(mo.n));
        parts.push_back({avg_key, mo.mean, err});
      }
      const auto c = compose_answer(parts, a, relation.row_count());
      row.aggregates.push_back(RawAnswer{c.value, c.error, acc.m});
    }
    out.push_back(std::move(row));
  }
  return out;
}

OnlineStream::OnlineStream(const Relation& relation, std::size_t batch_size, std::uint64_t seed)
    : permutation_(relation.row_count()), batch_size_(batch_size), version_(relation.version()), seed_(seed) {
  if (batch_size == 0) throw DataError("batch size must be at least 1");
  std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(permutation_.begin(), permutation_.end(), rng);
}

std::size_t OnlineStream::emissions() const noexcept {
  return (permutation_.size() + batch_size_ - 1) / batch_size_;
}

Sample OnlineStream::next() {
  consumed_ = std::min(consumed_ + batch_size_, permutation_.size());
  Sample s;
  s.parent_version = version_;
  s.seed = seed_;
  s.rate = permutation_.empty() ? 1.0 : static_cast<double>(consumed_) / static_cast<double>(permutation_.size());
  s.rows.assign(permutation_.begin(), permutation_.begin() + static_cast<std::ptrdiff_t>(consumed_));
  std::sort(s.rows.begin(), s.rows.end());
  s.exhaustive = consumed_ == permutation_.size();
  return s;
}

std::vector<RawAnswer> online_aggregate(const Relation& relation, const QuerySnippet& snippet,
                                        std::size_t batch_size, std::uint64_t seed) {
  OnlineStream stream(relation, batch_size, seed);
  std::vector<RawAnswer> out;
  out.reserve(stream.emissions());
  while (!stream.done()) out.push_back(estimate_snippet(relation, stream.next(), snippet));
  return out;
}

}  // namespace aqpl
