#pragma once

#include <span>

#include "aqpl/aqp_engine.hpp"
#include "aqpl/kernel.hpp"

namespace aqpl {

struct ModelAnswer {
  double theta_model = 0.0;  // blended model-based answer
  double beta_model = 0.0;   // its error, never above the raw error
  double gamma2 = 0.0;       // variance of the new exact answer given past answers
  double theta_only = 0.0;   // conditional mean before seeing the raw answer
};

/// Conditional-Gaussian blend of the model-only answer and the raw answer,
/// O(n^2) given the precomputed inverse.
ModelAnswer infer(const RawAnswer& raw, const CovarianceSystem& system, double raw_beta);
inline ModelAnswer infer(const RawAnswer& raw, const CovarianceSystem& system) {
  return infer(raw, system, raw.beta);
}

/// Reference path: solves the (n+1)x(n+1) joint system directly.
ModelAnswer infer_direct(const RawAnswer& raw, std::span<const SynopsisEntry> entries,
                         const QuerySnippet& new_snippet, const CorrelationParams& params,
                         const AttributeCatalog& catalog, const JitterPolicy& policy = {});

/// Two-sided standard-normal multiplier: Pr(|Z| < alpha) = delta.
/// Throws std::invalid_argument unless 0 < delta < 1.
double confidence_multiplier(double delta);

}  // namespace aqpl
