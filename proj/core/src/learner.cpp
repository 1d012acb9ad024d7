#include "aqpl/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "aqpl/error.hpp"
#include "aqpl/prior.hpp"

namespace aqpl {

double gaussian_log_likelihood(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& centered,
                               const JitterPolicy& policy) {
  const auto f = factorize_with_jitter(sigma, policy);
  const double log_det = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
  const double quad = centered.dot(f.llt.solve(centered));
  const double n = static_cast<double>(centered.size());
  return -0.5 * quad - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

namespace {

// Everything in the likelihood that does not depend on the lengths.
struct Prepared {
  std::vector<Region> regions;
  Eigen::VectorXd centered;
};

Prepared prepare(std::span<const SynopsisEntry> entries, SnippetAgg agg, const AttributeCatalog& catalog) {
  Prepared p;
  const auto prior = *prior_mean(entries, agg, catalog);
  p.centered.resize(static_cast<Eigen::Index>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    p.regions.push_back(resolve_region(entries[i].snippet, catalog));
    p.centered(static_cast<Eigen::Index>(i)) = entries[i].theta - prior.mean_for(p.regions.back().volume);
  }
  return p;
}

double prepared_log_likelihood(const Prepared& p, const CorrelationParams& params,
                               std::span<const SynopsisEntry> entries, const AttributeCatalog& catalog,
                               const JitterPolicy& policy) {
  const KernelEvaluator kernel(params, catalog);
  return gaussian_log_likelihood(observed_matrix(entries, p.regions, kernel), p.centered, policy);
}

}  // namespace

double log_likelihood(const CorrelationParams& params, std::span<const SynopsisEntry> entries,
                      const AttributeCatalog& catalog, const JitterPolicy& policy) {
  if (entries.empty()) throw std::invalid_argument("log_likelihood needs at least one entry");
  return prepared_log_likelihood(prepare(entries, params.agg, catalog), params, entries, catalog, policy);
}

FitResult fit(std::span<const SynopsisEntry> entries, const AttributeCatalog& catalog, const FitConfig& config) {
  FitResult out;
  if (entries.empty() || entries.size() < config.n_min) return out;
  const SnippetAgg agg = entries.front().snippet.agg;

  std::vector<double> volumes;
  for (const auto& e : entries) volumes.push_back(region_volume(e.snippet, catalog));
  const auto s2 = sigma_hat(entries, agg, volumes);
  if (!s2) return out;

  CorrelationParams params;
  params.key = entries.front().snippet.key();
  params.agg = agg;
  params.sigma2 = *s2;
  params.mu = prior_mean(entries, agg, catalog)->mu;

  const std::size_t dim = catalog.numeric.size();
  std::vector<double> extents, lo, hi;
  for (const auto& d : catalog.numeric) {
    const double e = d.extent() > 0.0 ? d.extent() : 1.0;
    extents.push_back(e);
    lo.push_back(std::log(1e-3 * e));
    hi.push_back(std::log(1e2 * e));
  }

  if (*s2 == 0.0) {
    // No signal: the lengths do not affect the likelihood, so keep the start.
    for (std::size_t k = 0; k < dim; ++k) params.lengths[catalog.numeric[k].name] = extents[k];
    out.params = params;
    out.trained = true;
    out.converged = true;
    try {
      out.log_likelihood = out.start_log_likelihood = log_likelihood(params, entries, catalog, config.jitter);
    } catch (const DegenerateSystem&) {
      out.trained = false;
    }
    return out;
  }

  const Prepared prepared = prepare(entries, agg, catalog);
  auto with_lengths = [&](std::span<const double> x) {
    CorrelationParams p = params;
    for (std::size_t k = 0; k < dim; ++k)
      p.lengths[catalog.numeric[k].name] = std::exp(std::clamp(x[k], lo[k], hi[k]));
    return p;
  };
  const Objective objective = [&](std::span<const double> x) {
    try {
      return prepared_log_likelihood(prepared, with_lengths(x), entries, catalog, config.jitter);
    } catch (const DegenerateSystem&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  std::vector<std::vector<double>> starts;
  starts.emplace_back();
  for (double e : extents) starts.back().push_back(std::log(e));
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> u(std::log(config.restart_low), std::log(config.restart_high));
  for (std::size_t r = 0; r < config.restarts; ++r) {
    std::vector<double> s;
    for (double e : extents) s.push_back(std::log(e) + u(rng));
    starts.push_back(std::move(s));
  }

  out.start_log_likelihood = objective(starts.front());
  const auto best = maximize_multistart(objective, starts, config.optimizer);
  out.params = with_lengths(best.x);
  out.log_likelihood = best.value;
  out.converged = best.converged;
  out.trained = std::isfinite(best.value);
  return out;
}

}  // namespace aqpl
