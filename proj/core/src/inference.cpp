#include "aqpl/inference.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

namespace aqpl {

namespace {

ModelAnswer blend(double theta_raw, double beta2, double gamma2, double theta_only) {
  ModelAnswer m;
  m.gamma2 = gamma2;
  m.theta_only = theta_only;
  if (beta2 == 0.0) {
    m.theta_model = theta_raw;
    m.beta_model = 0.0;
  } else if (gamma2 == 0.0) {
    m.theta_model = theta_only;
    m.beta_model = 0.0;
  } else {
    m.theta_model = (beta2 * theta_only + gamma2 * theta_raw) / (beta2 + gamma2);
    m.beta_model = std::sqrt(beta2 * gamma2 / (beta2 + gamma2));
  }
  return m;
}

}  // namespace

ModelAnswer infer(const RawAnswer& raw, const CovarianceSystem& system, double raw_beta) {
  const auto& base = *system.base;
  const Eigen::VectorXd v = base.sigma_n_inv() * system.k_n;
  const double gamma2 = std::max(0.0, system.kappa_bar2 - system.k_n.dot(v));
  const double theta_only = system.mu_new + system.k_n.dot(base.weights());
  return blend(raw.theta, raw_beta * raw_beta, gamma2, theta_only);
}

ModelAnswer infer_direct(const RawAnswer& raw, std::span<const SynopsisEntry> entries,
                         const QuerySnippet& new_snippet, const CorrelationParams& params,
                         const AttributeCatalog& catalog, const JitterPolicy& policy) {
  if (entries.empty()) throw std::invalid_argument("infer_direct needs at least one entry");
  const KernelEvaluator kernel(params, catalog);
  const auto prior = *prior_mean(entries, params.agg, catalog);
  const auto n = static_cast<Eigen::Index>(entries.size());

  std::vector<Region> regions;
  for (const auto& e : entries) regions.push_back(resolve_region(e.snippet, catalog));
  const Region target = resolve_region(new_snippet, catalog);

  // The past block carries the same diagonal jitter as the precomputed path.
  Eigen::MatrixXd past = observed_matrix(entries, regions, kernel);
  past.diagonal().array() += invert_with_jitter(past, policy).jitter;

  const double kappa2 = kernel(target, target);
  const double beta2 = raw.beta * raw.beta;
  Eigen::MatrixXd joint(n + 1, n + 1);
  Eigen::VectorXd k(n + 1), resid(n + 1);
  joint.topLeftCorner(n, n) = past;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = kernel(regions[static_cast<std::size_t>(i)], target);
    joint(i, n) = joint(n, i) = c;
    k(i) = c;
    resid(i) = entries[static_cast<std::size_t>(i)].theta - prior.mean_for(regions[static_cast<std::size_t>(i)].volume);
  }
  joint(n, n) = kappa2 + beta2;
  k(n) = kappa2;
  const double mu_new = prior.mean_for(target.volume);
  resid(n) = raw.theta - mu_new;

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(joint);
  const double mean = mu_new + k.dot(lu.solve(resid));
  const double var = kappa2 - k.dot(lu.solve(k));

  const Eigen::PartialPivLU<Eigen::MatrixXd> past_lu(past);
  const Eigen::VectorXd kn = k.head(n);
  ModelAnswer m;
  m.theta_model = beta2 == 0.0 ? raw.theta : mean;
  m.beta_model = beta2 == 0.0 ? 0.0 : std::sqrt(std::max(0.0, var));
  m.gamma2 = std::max(0.0, kappa2 - kn.dot(past_lu.solve(kn)));
  m.theta_only = mu_new + kn.dot(past_lu.solve(resid.head(n)));
  return m;
}

double confidence_multiplier(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("confidence must be in (0, 1)");
  return std::sqrt(2.0) * boost::math::erf_inv(delta);
}

}  // namespace aqpl
