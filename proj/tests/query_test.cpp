#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aqpl/error.hpp"
#include "aqpl/query.hpp"
#include "support.hpp"

namespace aqpl {
namespace {

Schema schema() {
  return Schema({{"day", Role::Dimension, Kind::Numeric},
                 {"year", Role::Dimension, Kind::Numeric},
                 {"region", Role::Dimension, Kind::Categorical},
                 {"sales", Role::Measure, Kind::Numeric},
                 {"cost", Role::Measure, Kind::Numeric}});
}

SupportedQuery supported(std::string_view sql) {
  auto r = parse(sql, schema());
  if (auto* u = std::get_if<Unsupported>(&r)) ADD_FAILURE() << sql << " -> unsupported: " << u->reason;
  return std::get<SupportedQuery>(r);
}

std::string unsupported_reason(std::string_view sql) {
  auto r = parse(sql, schema());
  if (!std::holds_alternative<Unsupported>(r)) {
    ADD_FAILURE() << sql << " parsed as supported";
    return {};
  }
  return std::get<Unsupported>(r).reason;
}

TEST(Parse, AvgWithBetween) {
  const auto q = supported("SELECT AVG(sales) FROM t WHERE day BETWEEN 10 AND 20");
  ASSERT_EQ(q.aggregates.size(), 1u);
  EXPECT_EQ(q.aggregates[0].fn, AggregateSpec::Fn::Avg);
  EXPECT_EQ(*q.aggregates[0].arg, Expr::attr("sales"));
  const Range& r = q.predicate.ranges.at("day");
  EXPECT_EQ(r.lo, 10.0);
  EXPECT_EQ(r.hi, 20.0);
  EXPECT_FALSE(r.lo_open || r.hi_open);
}

TEST(Parse, CountWithInListAndGroupBy) {
  const auto q = supported("SELECT COUNT(*) FROM t WHERE region IN ('E','W') GROUP BY year");
  EXPECT_EQ(q.aggregates[0].fn, AggregateSpec::Fn::Count);
  EXPECT_EQ(q.predicate.in_lists.at("region"), (std::vector<std::string>{"E", "W"}));
  EXPECT_EQ(q.groupby, (std::vector<std::string>{"year"}));
}

TEST(Parse, ComparisonsIntersect) {
  const auto q = supported("select avg(sales) from t where day > 3 and day <= 9 and day >= 4");
  const Range& r = q.predicate.ranges.at("day");
  EXPECT_EQ(r.lo, 4.0);
  EXPECT_FALSE(r.lo_open);
  EXPECT_EQ(r.hi, 9.0);
  EXPECT_FALSE(r.hi_open);
}

TEST(Parse, DerivedMeasureExpression) {
  const auto q = supported("SELECT SUM(sales - cost * 2) FROM t");
  EXPECT_EQ(print(*q.aggregates[0].arg), "sales - (cost * 2)");
}

TEST(Parse, UnsupportedReasons) {
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t WHERE day = 1 OR year = 2"), "disjunction");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t WHERE NOT day = 1"), "negation");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t WHERE region LIKE 'E%'"), "like");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t WHERE day <> 3"), "inequality");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t WHERE day IN (1, 2)"), "disjunction");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t GROUP BY year HAVING AVG(sales) > 1"), "having");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t ORDER BY day"), "order by");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t LIMIT 3"), "limit");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM (SELECT * FROM t)"), "subquery");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t JOIN u ON t.a = u.a"), "join");
  EXPECT_EQ(unsupported_reason("SELECT MAX(sales) FROM t"), "unsupported aggregate");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t WHERE sales > 3"), "predicate on measure attribute");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t WHERE region > 'E'"), "range on categorical attribute");
  EXPECT_EQ(unsupported_reason("SELECT AVG(sales) FROM t WHERE day BETWEEN 5 AND 1"), "empty predicate");
}

TEST(Parse, SoftUnsupportedKeepsFallback) {
  auto r = parse("SELECT AVG(sales) FROM t WHERE day = 1 OR year = 2", schema());
  const auto& u = std::get<Unsupported>(r);
  ASSERT_TRUE(u.fallback.has_value());
  EXPECT_EQ(u.fallback->filter.kind, Filter::Kind::Or);
  auto h = parse("SELECT AVG(sales) FROM t LIMIT 1", schema());
  EXPECT_FALSE(std::get<Unsupported>(h).fallback.has_value());
}

TEST(Parse, ErrorsAreDistinctFromUnsupported) {
  EXPECT_THROW(parse("SELECT AVG(sales FROM t", schema()), ParseError);
  EXPECT_THROW(parse("SELECT AVG(nope) FROM t", schema()), ParseError);
  EXPECT_THROW(parse("SELECT AVG(day) FROM t", schema()), ParseError);
  EXPECT_THROW(parse("SELECT day FROM t", schema()), ParseError);
  EXPECT_THROW(parse("SELECT year, AVG(sales) FROM t", schema()), ParseError);
  EXPECT_THROW(parse("SELECT AVG(sales) FROM t WHERE region = 'E", schema()), ParseError);
  EXPECT_THROW(parse("SELECT AVG(sales) FROM t WHERE day = 1 #", schema()), ParseError);
}

TEST(Print, ParsePrintFixpoint) {
  const char* queries[] = {
      "SELECT AVG(sales) FROM t WHERE day BETWEEN 10 AND 20",
      "SELECT COUNT(*) FROM t WHERE region IN ('E','W') GROUP BY year",
      "SELECT year, SUM(sales), AVG(cost) FROM t WHERE day > 1.5 AND day < 7 AND region = 'N' GROUP BY year",
      "SELECT AVG(sales * 2 + cost) FROM t WHERE day = 3",
      "SELECT COUNT(*) FROM t",
      "SELECT AVG(sales) FROM t WHERE day >= -2.25e-3",
  };
  for (const char* sql : queries) {
    const auto q = supported(sql);
    const std::string text = print(q);
    const auto again = supported(text);
    EXPECT_EQ(again.predicate, q.predicate) << text;
    EXPECT_EQ(again.groupby, q.groupby) << text;
    EXPECT_EQ(again.selected_groups, q.selected_groups) << text;
    ASSERT_EQ(again.aggregates.size(), q.aggregates.size());
    for (std::size_t i = 0; i < q.aggregates.size(); ++i) EXPECT_EQ(print(again.aggregates[i]), print(q.aggregates[i]));
    EXPECT_EQ(print(again), text);
  }
}

TEST(Print, RandomPredicatesRoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 200; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const std::string sql = "SELECT AVG(sales) FROM t WHERE day BETWEEN " + format_number(a) + " AND " +
                            format_number(b) + " AND year < " + format_number(u(rng));
    const auto q = supported(sql);
    EXPECT_EQ(supported(print(q)).predicate, q.predicate);
  }
}

TEST(Decompose, SingleAvgIsOneSnippet) {
  const auto q = supported("SELECT AVG(sales) FROM t WHERE day BETWEEN 1 AND 2");
  const auto d = decompose(q, {}, 1000);
  ASSERT_EQ(d.improved.size(), 1u);
  EXPECT_EQ(d.snippet_count(), 1u);
  EXPECT_EQ(d.improved[0].snippets[0].key(), "AVG(sales)");
}

TEST(Decompose, SumOverThreeGroupsIsSixSnippets) {
  const auto q = supported("SELECT year, SUM(sales) FROM t GROUP BY year");
  const std::vector<GroupKey> groups{{Value{2001.0}}, {Value{2002.0}}, {Value{2003.0}}};
  const auto d = decompose(q, groups, 1000);
  EXPECT_EQ(d.snippet_count(), 6u);
  std::size_t avg = 0, freq = 0;
  for (const auto& g : d.improved)
    for (const auto& s : g.snippets) {
      (s.agg == SnippetAgg::Avg ? avg : freq)++;
      EXPECT_TRUE(s.predicate.ranges.at("year").is_point());
    }
  EXPECT_EQ(avg, 3u);
  EXPECT_EQ(freq, 3u);
}

TEST(Decompose, GroupCapPassesThroughTheRest) {
  const auto q = supported("SELECT region, AVG(sales), COUNT(*) FROM t GROUP BY region");
  std::vector<GroupKey> groups;
  for (int i = 0; i < 1500; ++i) groups.push_back({Value{"g" + std::to_string(i)}});
  const auto d = decompose(q, groups, 1000);
  EXPECT_EQ(d.improved.size(), 1000u);
  EXPECT_EQ(d.passthrough.size(), 500u);
  EXPECT_EQ(d.snippet_count(), 2000u);
}

TEST(Decompose, SnippetsAreThemselvesSupportedQueries) {
  const auto q = supported("SELECT region, SUM(sales), AVG(cost) FROM t WHERE day BETWEEN 0 AND 5 GROUP BY region");
  const std::vector<GroupKey> groups{{Value{"E"}}, {Value{"W"}}};
  for (const auto& g : decompose(q, groups, 10).improved) {
    for (const auto& s : g.snippets) {
      const auto back = supported(print(s));
      EXPECT_TRUE(back.groupby.empty());
      ASSERT_EQ(back.aggregates.size(), 1u);
      EXPECT_EQ(back.predicate, s.predicate);
    }
  }
}

TEST(Decompose, DuplicateInternalSnippetsCollapse) {
  const auto q = supported("SELECT SUM(sales), AVG(sales), COUNT(*) FROM t");
  EXPECT_EQ(decompose(q, {}, 10).snippet_count(), 2u);
}

TEST(Compose, CountScalesFreq) {
  const std::vector<SnippetValue> v{{"FREQ", 0.25, 0.01}};
  const auto c = compose_answer(v, AggregateSpec{AggregateSpec::Fn::Count, std::nullopt}, 1000);
  EXPECT_DOUBLE_EQ(c.value, 250.0);
  EXPECT_DOUBLE_EQ(c.error, 10.0);
}

TEST(Compose, SumWithZeroErrors) {
  const std::vector<SnippetValue> v{{"FREQ", 0.25, 0.0}, {"AVG(x)", 4.0, 0.0}};
  const auto c = compose_answer(v, AggregateSpec{AggregateSpec::Fn::Sum, Expr::attr("x")}, 1000);
  EXPECT_DOUBLE_EQ(c.value, 1000.0);
  EXPECT_DOUBLE_EQ(c.error, 0.0);
}

TEST(Compose, SumDeltaMethodMatchesMonteCarlo) {
  const std::vector<SnippetValue> v{{"FREQ", 0.25, 0.01}, {"AVG(x)", 4.0, 0.1}};
  const auto c = compose_answer(v, AggregateSpec{AggregateSpec::Fn::Sum, Expr::attr("x")}, 1000);
  EXPECT_DOUBLE_EQ(c.value, 1000.0);
  EXPECT_NEAR(c.error, std::sqrt(1600.0 + 625.0), 1e-9);

  std::mt19937_64 rng(99);
  std::normal_distribution<double> avg(4.0, 0.1), count(250.0, 10.0);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = avg(rng) * count(rng);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(c.error / sd, 1.0, 0.05);
}

TEST(Compose, MissingConstituentThrows) {
  const std::vector<SnippetValue> v{{"AVG(x)", 4.0, 0.1}};
  EXPECT_THROW(compose_answer(v, AggregateSpec{AggregateSpec::Fn::Sum, Expr::attr("x")}, 10), DataError);
}

}  // namespace
}  // namespace aqpl
