#include <gtest/gtest.h>

#include <cmath>

#include "aqpl/append.hpp"
#include "aqpl/error.hpp"
#include "support.hpp"

namespace aqpl {
namespace {

using testing::sales_table;
using testing::uniform_table;

SynopsisEntry avg_entry(double theta, double beta, std::uint64_t version = 1) {
  SynopsisEntry e;
  e.snippet = QuerySnippet{SnippetAgg::Avg, Expr::attr("sales"), {}};
  e.snippet.predicate.add_range("day", Range{0, 50, false, false});
  e.theta = theta;
  e.beta = beta;
  e.data_version = version;
  return e;
}

SynopsisEntry freq_entry(double theta, std::uint64_t version) {
  SynopsisEntry e;
  e.snippet = QuerySnippet{SnippetAgg::Freq, std::nullopt, {}};
  e.snippet.predicate.add_range("day", Range{0, theta * 100, false, false});
  e.theta = theta;
  e.beta = 0.01;
  e.data_version = version;
  return e;
}

ShiftEstimate shift(double mu, double eta2, std::size_t n_old, std::size_t n_new) {
  ShiftEstimate s;
  s.measure = Expr::attr("sales");
  s.mu = mu;
  s.eta2 = eta2;
  s.n_old = n_old;
  s.n_new = n_new;
  s.from_version = 1;
  s.to_version = 2;
  return s;
}

// Offsets the measure column of a copy.
Relation shifted(const Relation& r, double drift) {
  Relation out(r.schema());
  for (std::size_t i = 0; i < r.row_count(); ++i) {
    const std::vector<Value> v{r.value(i, 0), r.value(i, 1), std::get<double>(r.value(i, 2)) + drift};
    out.add_row(v);
  }
  return out;
}

TEST(AdjustEntry, WorkedExample) {
  const auto e = adjust_entry(avg_entry(10, 1), shift(2, 1, 300, 100));
  EXPECT_DOUBLE_EQ(e.theta, 10.5);
  EXPECT_NEAR(e.beta, 1.03078, 1e-5);
  EXPECT_EQ(e.data_version, 2u);
}

TEST(AdjustEntry, NoNewRowsOrNoShift) {
  const auto a = adjust_entry(avg_entry(10, 1), shift(2, 1, 300, 0));
  EXPECT_EQ(a.theta, 10);
  EXPECT_EQ(a.beta, 1);
  const auto b = adjust_entry(avg_entry(10, 1), shift(0, 0, 300, 100));
  EXPECT_EQ(b.theta, 10);
  EXPECT_EQ(b.beta, 1);
}

TEST(AdjustEntry, ErrorNeverShrinks) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 5);
  for (int i = 0; i < 200; ++i) {
    const double beta = u(rng);
    const auto e = adjust_entry(avg_entry(u(rng), beta), shift(u(rng) - 2.5, u(rng), 1 + i, i));
    EXPECT_GE(e.beta, beta);
  }
}

TEST(AdjustEntry, Rejections) {
  EXPECT_THROW(adjust_entry(freq_entry(0.2, 1), shift(1, 1, 10, 10)), DataError);
  auto other = avg_entry(1, 1);
  other.snippet.measure = Expr::attr("cost");
  EXPECT_THROW(adjust_entry(other, shift(1, 1, 10, 10)), DataError);
  const auto once = adjust_entry(avg_entry(1, 1), shift(1, 1, 10, 10));
  EXPECT_THROW(adjust_entry(once, shift(1, 1, 10, 10)), DataError);
}

TEST(EstimateShift, NullShiftWithinThreeSigma) {
  int outside = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Relation old_rel = uniform_table(2000, 1000 + seed);
    const Relation extra = uniform_table(500, 5000 + seed);
    const auto s = estimate_shift(old_rel, extra, Expr::attr("sales"), 0.1, seed);
    EXPECT_GT(s.eta2, 0);
    if (std::abs(s.mu) > 3 * std::sqrt(s.eta2)) ++outside;
  }
  // 3 sigma: expected about 0.3 of 100.
  EXPECT_LE(outside, 2);
}

TEST(EstimateShift, DriftCoverage) {
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Relation old_rel = uniform_table(2000, 1000 + seed);
    const Relation extra = shifted(uniform_table(500, 9000 + seed), 1.0);
    const auto s = estimate_shift(old_rel, extra, Expr::attr("sales"), 0.1, seed);
    if (std::abs(s.mu - 1.0) <= 2 * std::sqrt(s.eta2)) ++covered;
  }
  EXPECT_GE(covered, 180);
}

TEST(EstimateShift, ConstantOffsetAtFullRate) {
  const Relation old_rel = uniform_table(300, 3);
  const auto s = estimate_shift(old_rel, shifted(old_rel, 2.5), Expr::attr("sales"), 1.0, 1);
  EXPECT_NEAR(s.mu, 2.5, 1e-9);
  EXPECT_EQ(s.n_old, 300u);
  EXPECT_EQ(s.n_new, 300u);
}

TEST(EstimateShift, TooFewRows) {
  const Relation one = sales_table({{1, "E", 1}});
  EXPECT_THROW(estimate_shift(uniform_table(100, 1), one, Expr::attr("sales"), 1.0, 1), DataError);
}

TEST(HandleFreq, EvictsOnlyStaleEntries) {
  Synopsis s;
  EXPECT_EQ(handle_freq_on_append(s, 2), 0u);
  for (int i = 0; i < 5; ++i) s.insert(freq_entry(0.1 * (i + 1), 1));
  s.insert(freq_entry(0.7, 2));
  s.insert(avg_entry(3, 1));
  EXPECT_EQ(handle_freq_on_append(s, 2), 5u);
  EXPECT_EQ(s.size("FREQ"), 1u);
  EXPECT_EQ(s.size(), 2u);
}

TEST(ApplyAppend, AdjustsAvgAndLogs) {
  const Relation old_rel = uniform_table(1000, 1);
  Synopsis s;
  s.set_catalog(old_rel.catalog());
  s.insert(avg_entry(5, 0.2));
  s.insert(avg_entry(6, 0.3));
  s.insert(freq_entry(0.5, 1));
  const Relation extra = shifted(uniform_table(250, 2), 4.0);
  const auto ev = apply_append(s, old_rel, extra, 2, 1.0, 7);
  EXPECT_EQ(ev.old_rows, 1000u);
  EXPECT_EQ(ev.new_rows, 250u);
  EXPECT_EQ(ev.evicted_freq, 1u);
  ASSERT_EQ(s.append_log().size(), 1u);
  const auto [mu, eta2] = ev.shifts.at("AVG(sales)");
  EXPECT_NEAR(mu, 4.0, 1.0);
  const auto list = s.entries_for("AVG(sales)");
  EXPECT_NEAR(list[0].theta, 5 + 0.2 * mu, 1e-12);
  EXPECT_NEAR(list[1].beta, std::sqrt(0.09 + 0.04 * eta2), 1e-12);
  EXPECT_EQ(list[0].data_version, 2u);
  EXPECT_EQ(s.catalog()->cardinality, 1250u);

  // The same event cannot be applied twice.
  EXPECT_THROW(adjust_entry(list[0], shift(mu, eta2, 1000, 250)), DataError);
}

TEST(ApplyAppend, EmptyBatchIsNoOp) {
  const Relation old_rel = uniform_table(100, 1);
  Synopsis s;
  s.insert(avg_entry(5, 0.2));
  s.insert(freq_entry(0.5, 1));
  const auto ev = apply_append(s, old_rel, Relation(old_rel.schema()), 2, 1.0, 7);
  EXPECT_EQ(ev.new_rows, 0u);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.entries_for("AVG(sales)")[0].theta, 5);
}

}  // namespace
}  // namespace aqpl
