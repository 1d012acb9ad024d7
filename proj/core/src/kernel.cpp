#include "aqpl/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "aqpl/error.hpp"

namespace aqpl {

double equality_half_width(const NumericDomain& domain) {
  const double w = domain.extent() * 1e-6;
  return w > 0.0 ? w : 1e-6;
}

Region resolve_region(const QuerySnippet& snippet, const AttributeCatalog& catalog) {
  Region out;
  out.volume = 1.0;
  for (const auto& dom : catalog.numeric) {
    double lo = dom.min, hi = dom.max;
    bool point = false;
    if (auto it = snippet.predicate.ranges.find(dom.name); it != snippet.predicate.ranges.end()) {
      lo = std::max(lo, it->second.lo);
      hi = std::min(hi, it->second.hi);
      point = it->second.is_point();
      if (point) lo = hi = it->second.lo;
    }
    const double w = equality_half_width(dom);
    if (point || hi - lo < 2.0 * w) {
      const double c = point ? lo : 0.5 * (lo + hi);
      lo = c - w;
      hi = c + w;
    }
    out.numeric.emplace_back(lo, hi);
    out.volume *= hi - lo;
  }
  for (const auto& dom : catalog.categorical) {
    if (auto it = snippet.predicate.in_lists.find(dom.name); it != snippet.predicate.in_lists.end())
      out.categorical.push_back(it->second);
    else
      out.categorical.push_back(dom.values);
    out.volume *= static_cast<double>(out.categorical.back().size());
  }
  return out;
}

double region_volume(const QuerySnippet& snippet, const AttributeCatalog& catalog) {
  return resolve_region(snippet, catalog).volume;
}

namespace {

// H'' (u) = exp(-u^2/z^2); the double integral is a second difference of H.
double antiderivative(double u, double z) {
  const double r = u / z;
  return 0.5 * z * z * std::exp(-r * r) + 0.5 * std::sqrt(std::numbers::pi) * z * u * std::erf(r);
}

// erf(p) - erf(q) without cancellation in the tails.
double erf_diff(double p, double q) {
  if (p >= 0.0 && q >= 0.0) return std::erfc(q) - std::erfc(p);
  if (p <= 0.0 && q <= 0.0) return std::erfc(-p) - std::erfc(-q);
  return std::erf(p) - std::erf(q);
}

// Five-point Gauss-Legendre over the narrow interval [a, b] of the exact inner
// integral over [c, d]. Used when the second difference would cancel.
double narrow_integral(double a, double b, double c, double d, double z) {
  static constexpr double nodes[] = {0.0, -0.5384693101056831, 0.5384693101056831,
                                     -0.9061798459386640, 0.9061798459386640};
  static constexpr double weights[] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                       0.2369268850561891, 0.2369268850561891};
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  double sum = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double x = mid + half * nodes[i];
    sum += weights[i] * erf_diff((d - x) / z, (c - x) / z);
  }
  return half * sum * 0.5 * std::sqrt(std::numbers::pi) * z;
}

}  // namespace

double double_exp_integral(double a, double b, double c, double d, double z) {
  if (!(z > 0.0) || !std::isfinite(z)) throw std::invalid_argument("double_exp_integral: z must be positive");
  if (a > b || c > d) throw std::invalid_argument("double_exp_integral: reversed range");
  const double wx = b - a, wy = d - c;
  if (wx == 0.0 || wy == 0.0) return 0.0;
  if (std::min(wx, wy) < 1e-2 * z) {
    return wx <= wy ? narrow_integral(a, b, c, d, z) : narrow_integral(c, d, a, b, z);
  }
  const double v = antiderivative(b - c, z) + antiderivative(a - d, z) - antiderivative(b - d, z) -
                   antiderivative(a - c, z);
  return std::max(v, 0.0);
}

KernelEvaluator::KernelEvaluator(const CorrelationParams& params, const AttributeCatalog& catalog)
    : agg_(params.agg), sigma2_(params.sigma2) {
  for (const auto& dom : catalog.numeric) {
    auto it = params.lengths.find(dom.name);
    if (it == params.lengths.end())
      throw std::invalid_argument("no correlation length for attribute '" + dom.name + "'");
    if (!(it->second > 0.0) || !std::isfinite(it->second))
      throw std::invalid_argument("correlation length for '" + dom.name + "' must be positive");
    lengths_.push_back(it->second);
  }
}

double KernelEvaluator::operator()(const Region& a, const Region& b) const {
  if (sigma2_ == 0.0) return 0.0;
  double v = sigma2_;
  for (std::size_t k = 0; k < a.categorical.size(); ++k) {
    const auto& x = a.categorical[k];
    const auto& y = b.categorical[k];
    std::size_t common = 0;
    for (auto i = x.begin(), j = y.begin(); i != x.end() && j != y.end();) {
      if (*i < *j) ++i;
      else if (*j < *i) ++j;
      else {
        ++common;
        ++i;
        ++j;
      }
    }
    if (common == 0) return 0.0;
    v *= static_cast<double>(common);
  }
  for (std::size_t k = 0; k < a.numeric.size(); ++k) {
    v *= double_exp_integral(a.numeric[k].first, a.numeric[k].second, b.numeric[k].first,
                             b.numeric[k].second, lengths_[k]);
    if (v == 0.0) return 0.0;
  }
  if (agg_ == SnippetAgg::Avg) v /= a.volume * b.volume;
  return v;
}

double snippet_covariance(const QuerySnippet& qi, const QuerySnippet& qj, const CorrelationParams& params,
                          const AttributeCatalog& catalog) {
  const KernelEvaluator kernel(params, catalog);
  return kernel(resolve_region(qi, catalog), resolve_region(qj, catalog));
}

double observed_covariance(std::size_t i, std::size_t j, std::span<const SynopsisEntry> entries,
                           const CorrelationParams& params, const AttributeCatalog& catalog) {
  const double cov = snippet_covariance(entries[i].snippet, entries[j].snippet, params, catalog);
  return i == j ? cov + entries[i].beta * entries[i].beta : cov;
}

Eigen::MatrixXd observed_matrix(std::span<const SynopsisEntry> entries, std::span<const Region> regions,
                                const KernelEvaluator& kernel) {
  const auto n = static_cast<Eigen::Index>(entries.size());
  Eigen::MatrixXd sigma(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = kernel(regions[static_cast<std::size_t>(i)], regions[static_cast<std::size_t>(j)]);
      sigma(i, j) = v;
      sigma(j, i) = v;
    }
    const double b = entries[static_cast<std::size_t>(i)].beta;
    sigma(i, i) += b * b;
  }
  return sigma;
}

namespace {

double jitter_scale(const Eigen::MatrixXd& sigma) {
  const double scale = sigma.trace() / static_cast<double>(sigma.rows());
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DegenerateSystem("degenerate synopsis: zero covariance");
  return scale;
}

}  // namespace

JitteredFactor factorize_with_jitter(const Eigen::MatrixXd& sigma, const JitterPolicy& policy) {
  const double scale = jitter_scale(sigma);
  for (double eps = policy.initial * scale; eps <= policy.max * scale * (1.0 + 1e-9); eps *= 10.0) {
    Eigen::MatrixXd m = sigma;
    m.diagonal().array() += eps;
    JitteredFactor f{Eigen::LLT<Eigen::MatrixXd>(m), eps};
    if (f.llt.info() != Eigen::Success) continue;
    const auto diag = f.llt.matrixLLT().diagonal();
    if ((diag.array() > 0.0).all() && diag.allFinite()) return f;
  }
  throw DegenerateSystem("degenerate synopsis");
}

JitteredInverse invert_with_jitter(const Eigen::MatrixXd& sigma, const JitterPolicy& policy) {
  const double scale = jitter_scale(sigma);
  const auto n = sigma.rows();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  for (double eps = policy.initial * scale; eps <= policy.max * scale * (1.0 + 1e-9); eps *= 10.0) {
    JitteredInverse out{sigma, {}, eps};
    out.sigma.diagonal().array() += eps;
    Eigen::LLT<Eigen::MatrixXd> llt(out.sigma);
    if (llt.info() != Eigen::Success) continue;
    out.inverse = llt.solve(identity);
    out.inverse = 0.5 * (out.inverse + out.inverse.transpose()).eval();
    if (!out.inverse.allFinite()) continue;
    const double residual = (out.inverse * out.sigma - identity).cwiseAbs().maxCoeff();
    if (residual <= policy.residual_tol) return out;
  }
  throw DegenerateSystem("degenerate synopsis");
}

TrainedSystem::TrainedSystem(std::vector<SynopsisEntry> entries, const CorrelationParams& params,
                             const AttributeCatalog& catalog)
    : entries_(std::move(entries)), params_(params), catalog_(catalog), kernel_(params, catalog) {
  if (entries_.empty()) throw std::invalid_argument("covariance system needs at least one entry");
  prior_ = *prior_mean(entries_, params.agg, catalog);
  regions_.reserve(entries_.size());
  for (const auto& e : entries_) regions_.push_back(resolve_region(e.snippet, catalog));
  const auto n = static_cast<Eigen::Index>(entries_.size());
  theta_.resize(n);
  mu_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    theta_(i) = entries_[static_cast<std::size_t>(i)].theta;
    mu_(i) = prior_.mean_for(regions_[static_cast<std::size_t>(i)].volume);
  }
}

void TrainedSystem::finish() { weights_ = sigma_n_inv_ * (theta_ - mu_); }

std::shared_ptr<const TrainedSystem> TrainedSystem::build(std::vector<SynopsisEntry> entries,
                                                          const CorrelationParams& params,
                                                          const AttributeCatalog& catalog,
                                                          const JitterPolicy& policy) {
  std::shared_ptr<TrainedSystem> sys(new TrainedSystem(std::move(entries), params, catalog));
  auto inv = invert_with_jitter(observed_matrix(sys->entries_, sys->regions_, sys->kernel_), policy);
  sys->sigma_n_ = std::move(inv.sigma);
  sys->sigma_n_inv_ = std::move(inv.inverse);
  sys->jitter_ = inv.jitter;
  sys->finish();
  return sys;
}

std::shared_ptr<const TrainedSystem> TrainedSystem::restore(std::vector<SynopsisEntry> entries,
                                                            const CorrelationParams& params,
                                                            const AttributeCatalog& catalog,
                                                            Eigen::MatrixXd sigma_inv, double jitter) {
  std::shared_ptr<TrainedSystem> sys(new TrainedSystem(std::move(entries), params, catalog));
  sys->sigma_n_ = observed_matrix(sys->entries_, sys->regions_, sys->kernel_);
  sys->sigma_n_.diagonal().array() += jitter;
  if (sigma_inv.size() == 0) {
    const Eigen::LLT<Eigen::MatrixXd> llt(sys->sigma_n_);
    if (llt.info() != Eigen::Success) throw DegenerateSystem("degenerate synopsis");
    sigma_inv = llt.solve(Eigen::MatrixXd::Identity(sys->sigma_n_.rows(), sys->sigma_n_.cols()));
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.transpose()).eval();
  }
  if (sigma_inv.rows() != static_cast<Eigen::Index>(sys->size()) || sigma_inv.cols() != sigma_inv.rows())
    throw std::invalid_argument("persisted inverse has the wrong shape");
  sys->sigma_n_inv_ = std::move(sigma_inv);
  sys->jitter_ = jitter;
  sys->finish();
  return sys;
}

Eigen::VectorXd CovarianceSystem::mu_vec() const {
  Eigen::VectorXd out(base->mu().size() + 1);
  out.head(base->mu().size()) = base->mu();
  out(out.size() - 1) = mu_new;
  return out;
}

CovarianceSystem system_for(std::shared_ptr<const TrainedSystem> base, const QuerySnippet& new_snippet) {
  const Region region = resolve_region(new_snippet, base->catalog());
  CovarianceSystem sys;
  const auto n = static_cast<Eigen::Index>(base->size());
  sys.k_n.resize(n);
  const auto& kernel = base->kernel();
  const auto& regions = base->regions();
  for (Eigen::Index i = 0; i < n; ++i) sys.k_n(i) = kernel(regions[static_cast<std::size_t>(i)], region);
  sys.kappa_bar2 = kernel(region, region);
  sys.mu_new = base->prior().mean_for(region.volume);
  sys.base = std::move(base);
  return sys;
}

CovarianceSystem build_system(std::span<const SynopsisEntry> entries, const QuerySnippet& new_snippet,
                              const CorrelationParams& params, const AttributeCatalog& catalog,
                              const JitterPolicy& policy) {
  if (entries.empty()) throw std::invalid_argument("covariance system needs at least one entry");
  auto base = TrainedSystem::build({entries.begin(), entries.end()}, params, catalog, policy);
  return system_for(std::move(base), new_snippet);
}

}  // namespace aqpl
