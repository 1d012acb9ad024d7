#include "aqpl/validator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aqpl {

std::string_view to_string(Rejection r) {
  switch (r) {
    case Rejection::None: return "";
    case Rejection::OutsideLikelyRegion: return "outside likely region";
    case Rejection::NegativeFreq: return "negative frequency";
    case Rejection::Untrained: return "untrained";
    case Rejection::Degenerate: return "degenerate synopsis";
  }
  return "";
}

double likely_region_half_width(double raw_beta, double delta_v, ValidationMethod method) {
  if (!(delta_v > 0.0 && delta_v < 1.0)) throw std::invalid_argument("delta_v must be in (0, 1)");
  if (method == ValidationMethod::Chebyshev) return raw_beta / std::sqrt(1.0 - delta_v);
  return confidence_multiplier(delta_v) * raw_beta;
}

bool validate(const ModelAnswer& model, const RawAnswer& raw, double delta_v, ValidationMethod method) {
  return std::abs(raw.theta - model.theta_model) < likely_region_half_width(raw.beta, delta_v, method);
}

namespace {

ImprovedAnswer with_interval(SnippetAgg agg, ImprovedAnswer a, double delta) {
  const double half = confidence_multiplier(delta) * a.beta_hat;
  a.ci = {a.theta_hat - half, a.theta_hat + half};
  if (agg == SnippetAgg::Freq) a.ci.first = std::max(0.0, a.ci.first);
  return a;
}

}  // namespace

ImprovedAnswer finalize(SnippetAgg agg, const ModelAnswer& model, const RawAnswer& raw, bool accept,
                        double delta) {
  if (!accept) return finalize_raw(agg, raw, Rejection::OutsideLikelyRegion, delta);
  if (agg == SnippetAgg::Freq && model.theta_model < 0.0)
    return finalize_raw(agg, raw, Rejection::NegativeFreq, delta);
  ImprovedAnswer a;
  a.theta_hat = model.theta_model;
  a.beta_hat = model.beta_model;
  a.model_used = true;
  return with_interval(agg, a, delta);
}

ImprovedAnswer finalize_raw(SnippetAgg agg, const RawAnswer& raw, Rejection reason, double delta) {
  ImprovedAnswer a;
  a.theta_hat = raw.theta;
  a.beta_hat = raw.beta;
  a.rejection = reason;
  return with_interval(agg, a, delta);
}

}  // namespace aqpl
