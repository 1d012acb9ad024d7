#pragma once

#include <optional>
#include <string_view>
#include <utility>

#include "aqpl/aqp_engine.hpp"
#include "aqpl/inference.hpp"

namespace aqpl {

enum class Rejection { None, OutsideLikelyRegion, NegativeFreq, Untrained, Degenerate };

std::string_view to_string(Rejection r);

enum class ValidationMethod { Clt, Chebyshev };

struct ImprovedAnswer {
  double theta_hat = 0.0;
  double beta_hat = 0.0;
  bool model_used = false;
  std::pair<double, double> ci{0.0, 0.0};
  Rejection rejection = Rejection::None;
};

/// Half-width t of the likely region around the model answer.
double likely_region_half_width(double raw_beta, double delta_v,
                                ValidationMethod method = ValidationMethod::Clt);

/// Accept iff |theta_raw - theta_model| < t.
bool validate(const ModelAnswer& model, const RawAnswer& raw, double delta_v = 0.99,
              ValidationMethod method = ValidationMethod::Clt);

/// Picks the model answer when accepted (and non-negative for FREQ), else the
/// raw answer. FREQ intervals are clamped at zero.
ImprovedAnswer finalize(SnippetAgg agg, const ModelAnswer& model, const RawAnswer& raw,
                        bool accept, double delta);

/// Raw passthrough with the given reason (untrained, degenerate, ...).
ImprovedAnswer finalize_raw(SnippetAgg agg, const RawAnswer& raw, Rejection reason, double delta);

}  // namespace aqpl
