#pragma once

#include <optional>
#include <span>
#include <vector>

#include "aqpl/entry.hpp"
#include "aqpl/relation.hpp"

namespace aqpl {

/// Prior means of past and new snippet answers.
///
/// AVG uses one scalar mean for every answer. FREQ keeps a per-unit-volume
/// density, so a snippet's prior mean is density * |F|.
struct PriorMean {
  SnippetAgg agg = SnippetAgg::Avg;
  double mu = 0.0;  // AVG: mean answer; FREQ: density

  double mean_for(double volume) const noexcept {
    return agg == SnippetAgg::Freq ? mu * volume : mu;
  }
};

/// Empty entries -> std::nullopt (inference is bypassed).
std::optional<PriorMean> prior_mean(std::span<const SynopsisEntry> entries, SnippetAgg agg,
                                    const AttributeCatalog& catalog);

/// Population variance of theta_i (AVG) or theta_i / |F_i| (FREQ); nullopt when n < 2.
std::optional<double> sigma_hat(std::span<const SynopsisEntry> entries, SnippetAgg agg,
                                std::span<const double> region_volumes);

}  // namespace aqpl
