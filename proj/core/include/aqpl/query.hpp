#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "aqpl/relation.hpp"

namespace aqpl {

/// Arithmetic over measure attributes and constants.
struct Expr {
  enum class Op { Attr, Const, Add, Sub, Mul };

  Op op = Op::Const;
  std::string name;  // Attr
  double value = 0.0;  // Const
  std::vector<Expr> args;  // binary ops: exactly two

  static Expr attr(std::string name);
  static Expr constant(double v);
  static Expr binary(Op op, Expr lhs, Expr rhs);

  bool is_attr() const noexcept { return op == Op::Attr; }
  /// Attribute names referenced, in first-appearance order.
  std::vector<std::string> attributes() const;

  bool operator==(const Expr&) const = default;
};

std::string print(const Expr& e);

/// A closed or half-open numeric interval; infinite bounds mean "unconstrained
/// on that side" and are resolved against the catalog extent.
struct Range {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_open = false;
  bool hi_open = false;

  static Range point(double v) { return {v, v, false, false}; }
  bool contains(double x) const noexcept {
    return (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi);
  }
  bool is_point() const noexcept { return lo == hi && !lo_open && !hi_open; }
  bool is_empty() const noexcept { return lo > hi || (lo == hi && (lo_open || hi_open)); }
  Range intersect(const Range& o) const;

  bool operator==(const Range&) const = default;
};

/// Conjunction of per-attribute numeric ranges and categorical in-lists.
struct Predicate {
  std::map<std::string, Range> ranges;
  std::map<std::string, std::vector<std::string>> in_lists;  // sorted, unique

  void add_range(const std::string& attr, const Range& r);
  void add_in_list(const std::string& attr, std::vector<std::string> values);

  bool operator==(const Predicate&) const = default;
};

struct AggregateSpec {
  enum class Fn { Avg, Sum, Count };

  Fn fn = Fn::Avg;
  std::optional<Expr> arg;  // absent for COUNT(*)

  bool operator==(const AggregateSpec&) const = default;
};

std::string print(const AggregateSpec& a);

struct SupportedQuery {
  std::string table;
  std::vector<std::string> selected_groups;  // bare group-by columns in SELECT
  std::vector<AggregateSpec> aggregates;
  Predicate predicate;
  std::vector<std::string> groupby;

  bool operator==(const SupportedQuery&) const = default;
};

/// Internal aggregate of a snippet.
enum class SnippetAgg { Avg, Freq };

/// One scalar aggregate over one conjunctive region.
struct QuerySnippet {
  SnippetAgg agg = SnippetAgg::Freq;
  std::optional<Expr> measure;  // set iff agg == Avg
  Predicate predicate;

  /// Synopsis key: "FREQ" or "AVG(<expr>)".
  std::string key() const;
  bool operator==(const QuerySnippet&) const = default;
};

/// Renders a snippet as a standalone supported query over `table`.
std::string print(const QuerySnippet& s, std::string_view table = "t");

// --- General (possibly unsupported) filter, evaluable by the raw path. ---

struct Filter {
  enum class Kind { True, And, Or, Not, Compare, In, Between, Like };
  enum class Cmp { Eq, Ne, Lt, Le, Gt, Ge };

  Kind kind = Kind::True;
  std::vector<Filter> children;  // And/Or/Not
  std::string attr;
  Cmp cmp = Cmp::Eq;
  std::vector<Value> literals;  // Compare: 1, Between: 2, In: n, Like: 1 (pattern)
};

/// A query outside the supported class that the raw engine can still answer.
struct GeneralQuery {
  std::vector<AggregateSpec> aggregates;
  Filter filter;
  std::vector<std::string> groupby;
};

/// Stable reason strings for unsupported queries.
namespace reason {
inline constexpr std::string_view kDisjunction = "disjunction";
inline constexpr std::string_view kNegation = "negation";
inline constexpr std::string_view kInequality = "inequality";
inline constexpr std::string_view kLike = "like";
inline constexpr std::string_view kSubquery = "subquery";
inline constexpr std::string_view kHaving = "having";
inline constexpr std::string_view kOrderBy = "order by";
inline constexpr std::string_view kLimit = "limit";
inline constexpr std::string_view kJoin = "join";
inline constexpr std::string_view kAggregate = "unsupported aggregate";
inline constexpr std::string_view kDistinct = "distinct";
inline constexpr std::string_view kEmptyPredicate = "empty predicate";
inline constexpr std::string_view kMeasurePredicate = "predicate on measure attribute";
inline constexpr std::string_view kCategoricalRange = "range on categorical attribute";
inline constexpr std::string_view kMeasureGroupBy = "group by measure attribute";
}  // namespace reason

struct Unsupported {
  std::string reason;
  std::optional<GeneralQuery> fallback;  // set when the raw engine can still answer
};

using ParseResult = std::variant<SupportedQuery, Unsupported>;

/// Parses the supported SQL subset. Throws ParseError on lexical, syntactic or
/// name-resolution errors; returns Unsupported for valid SQL outside the class.
ParseResult parse(std::string_view sql, const Schema& schema);

/// Canonical SQL text; parse(print(q)) == q.
std::string print(const SupportedQuery& q);

/// Formats a double as the shortest text that round-trips.
std::string format_number(double v);

using GroupKey = std::vector<Value>;

struct GroupPlan {
  GroupKey key;
  std::vector<QuerySnippet> snippets;  // distinct internal snippets for this group
};

struct Decomposition {
  std::vector<GroupPlan> improved;
  std::vector<GroupKey> passthrough;  // groups beyond n_max

  std::size_t snippet_count() const;
};

/// Internal snippets of one group: AVG -> AVG(x), COUNT -> FREQ, SUM -> {AVG(x), FREQ}.
/// Identical internal snippets are emitted once.
std::vector<QuerySnippet> group_snippets(const SupportedQuery& q, const GroupKey& key);

/// Splits the query into per-group snippets; groups past n_max pass through.
/// An empty group_values list with no GROUP BY yields a single pseudo-group.
Decomposition decompose(const SupportedQuery& q, std::span<const GroupKey> group_values,
                        std::size_t n_max);

struct SnippetValue {
  std::string key;
  double value = 0.0;
  double error = 0.0;
};

struct ComposedAnswer {
  double value = 0.0;
  double error = 0.0;
};

/// AVG passes through; COUNT = round(FREQ * cardinality); SUM = AVG * COUNT
/// with a delta-method error. Throws DataError when a constituent is missing.
ComposedAnswer compose_answer(std::span<const SnippetValue> answers, const AggregateSpec& spec,
                              std::size_t cardinality);

}  // namespace aqpl
