#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aqpl/entry.hpp"
#include "aqpl/prior.hpp"
#include "aqpl/query.hpp"
#include "aqpl/relation.hpp"

namespace aqpl {

/// Squared-exponential kernel parameters of one aggregate function g.
struct CorrelationParams {
  std::string key;
  SnippetAgg agg = SnippetAgg::Avg;
  std::map<std::string, double> lengths;  // per numeric dimension attribute, > 0
  double sigma2 = 0.0;
  double mu = 0.0;  // AVG: prior mean; FREQ: density per unit volume

  bool operator==(const CorrelationParams&) const = default;
};

/// A snippet's predicate resolved against the catalog: numeric intervals in
/// catalog order (unconstrained -> full extent, degenerate -> widened) and
/// categorical value sets (unconstrained -> full domain).
struct Region {
  std::vector<std::pair<double, double>> numeric;
  std::vector<std::vector<std::string>> categorical;
  double volume = 0.0;
};

/// Half-width used to widen equality predicates: (max - min) * 1e-6.
double equality_half_width(const NumericDomain& domain);

Region resolve_region(const QuerySnippet& snippet, const AttributeCatalog& catalog);

/// Product of numeric widths times product of categorical set sizes.
double region_volume(const QuerySnippet& snippet, const AttributeCatalog& catalog);

/// Integral over [a,b] x [c,d] of exp(-(x-y)^2 / z^2). Throws std::invalid_argument
/// when z <= 0 or a range is reversed.
double double_exp_integral(double a, double b, double c, double d, double z);

/// Covariance between exact snippet answers, evaluated on resolved regions.
class KernelEvaluator {
 public:
  KernelEvaluator(const CorrelationParams& params, const AttributeCatalog& catalog);

  double operator()(const Region& a, const Region& b) const;

  const std::vector<double>& lengths() const noexcept { return lengths_; }

 private:
  SnippetAgg agg_;
  double sigma2_;
  std::vector<double> lengths_;  // catalog.numeric order
};

double snippet_covariance(const QuerySnippet& qi, const QuerySnippet& qj,
                          const CorrelationParams& params, const AttributeCatalog& catalog);

/// snippet_covariance plus beta_i^2 on the diagonal.
double observed_covariance(std::size_t i, std::size_t j, std::span<const SynopsisEntry> entries,
                           const CorrelationParams& params, const AttributeCatalog& catalog);

/// Diagonal jitter: start at `initial * trace/n`, multiply by 10 up to
/// `max * trace/n`. An inverse is accepted once max|inv * sigma - I| <= residual_tol.
struct JitterPolicy {
  double initial = 1e-8;
  double max = 1e-4;
  double residual_tol = 1e-8;
};

/// Kernel Gram matrix plus beta_i^2 on the diagonal (no jitter).
Eigen::MatrixXd observed_matrix(std::span<const SynopsisEntry> entries,
                                std::span<const Region> regions, const KernelEvaluator& kernel);

struct JitteredFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

/// Cholesky of sigma + eps*I with the escalation schedule. Throws DegenerateSystem.
JitteredFactor factorize_with_jitter(const Eigen::MatrixXd& sigma, const JitterPolicy& policy);

struct JitteredInverse {
  Eigen::MatrixXd sigma;  // includes the jitter
  Eigen::MatrixXd inverse;
  double jitter = 0.0;
};

/// Inverse passing the residual bound. Throws DegenerateSystem("degenerate synopsis").
JitteredInverse invert_with_jitter(const Eigen::MatrixXd& sigma, const JitterPolicy& policy);

/// Offline part of the covariance system: everything that depends only on the
/// past entries. Immutable once built and shared between queries.
class TrainedSystem {
 public:
  static std::shared_ptr<const TrainedSystem> build(std::vector<SynopsisEntry> entries,
                                                    const CorrelationParams& params,
                                                    const AttributeCatalog& catalog,
                                                    const JitterPolicy& policy = {});
  /// Rebuild from a persisted inverse; an empty inverse is recomputed at the given jitter.
  static std::shared_ptr<const TrainedSystem> restore(std::vector<SynopsisEntry> entries,
                                                      const CorrelationParams& params,
                                                      const AttributeCatalog& catalog,
                                                      Eigen::MatrixXd sigma_inv, double jitter);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<SynopsisEntry>& entries() const noexcept { return entries_; }
  const CorrelationParams& params() const noexcept { return params_; }
  const AttributeCatalog& catalog() const noexcept { return catalog_; }
  const PriorMean& prior() const noexcept { return prior_; }
  const KernelEvaluator& kernel() const noexcept { return kernel_; }
  const std::vector<Region>& regions() const noexcept { return regions_; }

  const Eigen::MatrixXd& sigma_n() const noexcept { return sigma_n_; }
  const Eigen::MatrixXd& sigma_n_inv() const noexcept { return sigma_n_inv_; }
  const Eigen::VectorXd& theta() const noexcept { return theta_; }
  const Eigen::VectorXd& mu() const noexcept { return mu_; }
  /// sigma_n_inv * (theta - mu)
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  double jitter() const noexcept { return jitter_; }

 private:
  TrainedSystem(std::vector<SynopsisEntry> entries, const CorrelationParams& params,
                const AttributeCatalog& catalog);
  void finish();

  std::vector<SynopsisEntry> entries_;
  CorrelationParams params_;
  AttributeCatalog catalog_;
  KernelEvaluator kernel_;
  PriorMean prior_;
  std::vector<Region> regions_;
  Eigen::MatrixXd sigma_n_;
  Eigen::MatrixXd sigma_n_inv_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd mu_;
  Eigen::VectorXd weights_;
  double jitter_ = 0.0;
};

/// Past system plus the new snippet's covariance vector and variance.
struct CovarianceSystem {
  std::shared_ptr<const TrainedSystem> base;
  Eigen::VectorXd k_n;      // cov(theta_bar_i, theta_bar_new)
  double kappa_bar2 = 0.0;  // var(theta_bar_new)
  double mu_new = 0.0;

  const Eigen::MatrixXd& sigma_n() const { return base->sigma_n(); }
  const Eigen::MatrixXd& sigma_n_inv() const { return base->sigma_n_inv(); }
  Eigen::VectorXd mu_vec() const;  // length n + 1
};

/// O(n) kernel evaluations against a precomputed system.
CovarianceSystem system_for(std::shared_ptr<const TrainedSystem> base,
                            const QuerySnippet& new_snippet);

/// Builds the whole system from scratch. Throws std::invalid_argument on empty
/// entries and DegenerateSystem when no jitter level yields a valid inverse.
CovarianceSystem build_system(std::span<const SynopsisEntry> entries,
                              const QuerySnippet& new_snippet, const CorrelationParams& params,
                              const AttributeCatalog& catalog, const JitterPolicy& policy = {});

}  // namespace aqpl
