#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "aqpl/aqp_engine.hpp"
#include "aqpl/harness.hpp"
#include "aqpl/learner.hpp"

namespace aqpl {
namespace {

TEST(Optimizer, ConcaveQuadratic) {
  const Objective f = [](std::span<const double> x) { return -(x[0] - 3) * (x[0] - 3); };
  const std::vector<double> start{0.0};
  const auto r = maximize(f, start);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x[0], 3.0, 1e-4);
  EXPECT_GE(r.value, f(start));
}

TEST(Optimizer, TwoDimensionalBowl) {
  const Objective f = [](std::span<const double> x) {
    return -(x[0] - 1) * (x[0] - 1) - 4 * (x[1] + 2) * (x[1] + 2) - 0.5 * x[0] * x[1];
  };
  const std::vector<double> start{5.0, 5.0};
  const auto r = maximize(f, start);
  // Stationary point: the gradient is linear, so solve H x = b.
  Eigen::Matrix2d h;
  h << -2, -0.5, -0.5, -8;
  const Eigen::Vector2d g(-2, 16);
  const Eigen::Vector2d opt = h.colPivHouseholderQr().solve(g);
  EXPECT_NEAR(r.x[0], opt(0), 1e-3);
  EXPECT_NEAR(r.x[1], opt(1), 1e-3);
}

TEST(Optimizer, MultistartFindsHigherBump) {
  const Objective f = [](std::span<const double> x) {
    return std::exp(-(x[0] - 1) * (x[0] - 1)) + 2 * std::exp(-(x[0] - 5) * (x[0] - 5) / 0.5);
  };
  // Grid-scan oracle for the global maximizer.
  double best_x = 0, best = -1;
  for (double x = -5; x <= 10; x += 1e-4)
    if (f(std::span<const double>(&x, 1)) > best) best = f(std::span<const double>(&x, 1)), best_x = x;
  int hits = 0;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 8);
  for (int run = 0; run < 3; ++run) {
    std::vector<std::vector<double>> starts{{u(rng)}, {u(rng)}, {u(rng)}};
    const auto r = maximize_multistart(f, starts);
    if (std::abs(r.x[0] - best_x) < 1e-2) ++hits;
    for (const auto& s : starts) EXPECT_GE(r.value, maximize(f, s).value);
  }
  EXPECT_GE(hits, 2);
}

TEST(Optimizer, IterationCapReportsNotConverged) {
  const Objective f = [](std::span<const double> x) { return -(x[0] - 30) * (x[0] - 30); };
  const std::vector<double> start{0.0};
  OptimizerConfig cfg;
  cfg.max_iterations = 3;
  const auto r = maximize(f, start, cfg);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3u);
  EXPECT_GE(r.value, f(start));
}

TEST(Optimizer, NaNStartThrowsAndInfIsAvoided) {
  const std::vector<double> start{0.0};
  EXPECT_THROW(maximize([](std::span<const double>) { return std::nan(""); }, start), std::invalid_argument);
  const Objective walled = [](std::span<const double> x) {
    return x[0] > 2 ? -std::numeric_limits<double>::infinity() : x[0];
  };
  const auto r = maximize(walled, start);
  EXPECT_LE(r.x[0], 2.0);
  EXPECT_GT(r.x[0], 1.9);
}

TEST(GaussianLogLikelihood, OneByOne) {
  Eigen::MatrixXd s(1, 1);
  s << 1.0;
  Eigen::VectorXd x(1);
  x << 0.0;
  EXPECT_NEAR(gaussian_log_likelihood(s, x), -0.918939, 1e-6);
  x << 1.0;
  EXPECT_NEAR(gaussian_log_likelihood(s, x), -0.5 - 0.5 * std::log(2 * std::numbers::pi), 1e-7);
}

// Past snippets answered from a sample of 1-D GP data.
std::vector<SynopsisEntry> gp_entries(std::size_t n, std::uint64_t seed, AttributeCatalog& catalog) {
  SyntheticSpec spec;
  spec.rows = 20000;
  spec.seed = seed;
  const SyntheticData data = gen_synthetic(spec);
  catalog = data.relation.catalog();
  std::mt19937_64 rng(seed * 31 + 1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<SynopsisEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.05 + 0.1 * u(rng);
    const double a = u(rng) * (1 - w);
    QuerySnippet s{SnippetAgg::Avg, Expr::attr("y"), {}};
    s.predicate.add_range("x0", Range{a, a + w, false, false});
    const RawAnswer r = estimate_snippet(data.relation, build_sample(data.relation, 0.05, seed + i), s);
    out.push_back({i + 1, s, r.theta, r.beta, 0, 1});
  }
  return out;
}

TEST(LogLikelihood, MatchesDenseOracle) {
  AttributeCatalog cat;
  const auto entries = gp_entries(20, 5, cat);
  CorrelationParams p;
  p.key = "AVG(y)";
  p.agg = SnippetAgg::Avg;
  p.lengths = {{"x0", 0.15}};
  p.sigma2 = 0.8;

  const std::size_t n = entries.size();
  Eigen::MatrixXd s(n, n);
  Eigen::VectorXd theta(n);
  double mean = 0.0;
  for (const auto& e : entries) mean += e.theta / n;
  for (std::size_t i = 0; i < n; ++i) {
    theta(i) = entries[i].theta - mean;
    for (std::size_t j = 0; j < n; ++j) s(i, j) = snippet_covariance(entries[i].snippet, entries[j].snippet, p, cat);
    s(i, i) += entries[i].beta * entries[i].beta;
  }
  s.diagonal().array() += 1e-8 * s.trace() / n;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(s);
  const double oracle =
      -0.5 * theta.dot(lu.solve(theta)) - 0.5 * std::log(lu.determinant()) - 0.5 * n * std::log(2 * std::numbers::pi);
  const double got = log_likelihood(p, entries, cat);
  EXPECT_NEAR(got, oracle, 1e-8 * std::max(1.0, std::abs(oracle)));
}

TEST(LogLikelihood, PermutationInvariant) {
  AttributeCatalog cat;
  auto entries = gp_entries(25, 6, cat);
  CorrelationParams p;
  p.key = "AVG(y)";
  p.lengths = {{"x0", 0.3}};
  p.sigma2 = 1.1;
  const double a = log_likelihood(p, entries, cat);
  std::mt19937_64 rng(1);
  std::shuffle(entries.begin(), entries.end(), rng);
  EXPECT_NEAR(log_likelihood(p, entries, cat), a, 1e-9);
}

TEST(Fit, TooFewEntriesIsUntrained) {
  AttributeCatalog cat;
  const auto entries = gp_entries(9, 7, cat);
  EXPECT_FALSE(fit(entries, cat).trained);
  EXPECT_TRUE(fit(gp_entries(10, 7, cat), cat).trained);
}

TEST(Fit, IdenticalAnswersGiveZeroSignal) {
  AttributeCatalog cat;
  auto entries = gp_entries(12, 8, cat);
  for (auto& e : entries) e.theta = 4.0;
  const FitResult r = fit(entries, cat);
  ASSERT_TRUE(r.trained);
  EXPECT_EQ(r.params.sigma2, 0.0);
  EXPECT_DOUBLE_EQ(r.params.mu, 4.0);
}

TEST(Fit, ImprovesLikelihoodAndStaysPositive) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    AttributeCatalog cat;
    const auto entries = gp_entries(40, seed, cat);
    FitConfig cfg;
    cfg.seed = seed;
    const FitResult r = fit(entries, cat, cfg);
    ASSERT_TRUE(r.trained);
    const double l = r.params.lengths.at("x0");
    EXPECT_GT(l, 0.0);
    EXPECT_TRUE(std::isfinite(l));
    EXPECT_GE(r.log_likelihood, r.start_log_likelihood);
    EXPECT_NEAR(r.log_likelihood, log_likelihood(r.params, entries, cat), 1e-9 * std::abs(r.log_likelihood));
    // Same seed, same answer.
    EXPECT_EQ(fit(entries, cat, cfg).params, r.params);
  }
}

}  // namespace
}  // namespace aqpl
