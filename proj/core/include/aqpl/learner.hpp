#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aqpl/entry.hpp"
#include "aqpl/kernel.hpp"

namespace aqpl {

struct OptimizerConfig {
  double tolerance = 1e-6;   // relative, on both step and objective
  std::size_t max_iterations = 500;
  double initial_step = 0.5;
};

struct OptimizerResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

using Objective = std::function<double(std::span<const double>)>;

/// Nelder-Mead maximization. Non-finite objective values count as -inf.
/// Throws std::invalid_argument if the objective is NaN at the start.
OptimizerResult maximize(const Objective& objective, std::span<const double> start,
                         const OptimizerConfig& config = {});

/// Runs maximize from each start and returns the best result.
OptimizerResult maximize_multistart(const Objective& objective,
                                    std::span<const std::vector<double>> starts,
                                    const OptimizerConfig& config = {});

/// -1/2 x' S^-1 x - 1/2 log|S| - n/2 log(2 pi) for centered x.
double gaussian_log_likelihood(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& centered,
                               const JitterPolicy& policy = {});

/// Log-likelihood of past answers (centered by the analytic prior mean) under
/// the given parameters. Throws DegenerateSystem.
double log_likelihood(const CorrelationParams& params, std::span<const SynopsisEntry> entries,
                      const AttributeCatalog& catalog, const JitterPolicy& policy = {});

struct FitConfig {
  std::size_t n_min = 10;
  std::size_t restarts = 3;
  std::uint64_t seed = 0;
  double restart_low = 0.05;   // restart lengths: log-uniform in [low, high] x extent
  double restart_high = 2.0;
  OptimizerConfig optimizer;
  JitterPolicy jitter;
};

struct FitResult {
  bool trained = false;  // false: fewer than n_min entries or no variance estimate
  CorrelationParams params;
  double log_likelihood = 0.0;
  double start_log_likelihood = 0.0;
  bool converged = false;
};

/// Maximum-likelihood lengths in log space, analytic sigma^2 and mu.
FitResult fit(std::span<const SynopsisEntry> entries, const AttributeCatalog& catalog,
              const FitConfig& config = {});

}  // namespace aqpl
