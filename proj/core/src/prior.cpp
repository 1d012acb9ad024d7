#include "aqpl/prior.hpp"

#include "aqpl/kernel.hpp"

namespace aqpl {

std::optional<PriorMean> prior_mean(std::span<const SynopsisEntry> entries, SnippetAgg agg,
                                    const AttributeCatalog& catalog) {
  if (entries.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& e : entries)
    sum += agg == SnippetAgg::Freq ? e.theta / region_volume(e.snippet, catalog) : e.theta;
  return PriorMean{agg, sum / static_cast<double>(entries.size())};
}

std::optional<double> sigma_hat(std::span<const SynopsisEntry> entries, SnippetAgg agg,
                                std::span<const double> region_volumes) {
  const std::size_t n = entries.size();
  if (n < 2) return std::nullopt;
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i)
    xs[i] = agg == SnippetAgg::Freq ? entries[i].theta / region_volumes[i] : entries[i].theta;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return var / static_cast<double>(n);
}

}  // namespace aqpl
