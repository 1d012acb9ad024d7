#pragma once

#include <cstddef>
#include <cstdint>

#include "aqpl/entry.hpp"
#include "aqpl/query.hpp"
#include "aqpl/relation.hpp"
#include "aqpl/synopsis.hpp"

namespace aqpl {

/// Estimated difference between a measure's values in appended and old rows.
struct ShiftEstimate {
  Expr measure;
  double mu = 0.0;    // mean shift
  double eta2 = 0.0;  // sampling variance of the mean-difference estimate
  std::size_t n_old = 0;
  std::size_t n_new = 0;
  std::uint64_t from_version = 0;
  std::uint64_t to_version = 0;
};

/// Compares samples of `old_relation` and `appended`. Throws DataError when
/// either sample has fewer than two rows.
ShiftEstimate estimate_shift(const Relation& old_relation, const Relation& appended,
                             const Expr& measure, double sample_rate, std::uint64_t seed);

/// Shifts theta by w*mu and inflates beta^2 by (w*eta)^2, w = |r^a|/(|r|+|r^a|).
/// Throws DataError on an aggregate mismatch or an already-adjusted entry.
SynopsisEntry adjust_entry(const SynopsisEntry& entry, const ShiftEstimate& shift);

/// Drops FREQ entries recorded before `to_version`; returns how many.
std::size_t handle_freq_on_append(Synopsis& synopsis, std::uint64_t to_version);

/// Full append step: estimates shifts per AVG key, adjusts old entries, evicts
/// stale FREQ entries, drops precomputed systems and logs the event.
AppendEvent apply_append(Synopsis& synopsis, const Relation& old_relation,
                         const Relation& appended, std::uint64_t to_version, double sample_rate,
                         std::uint64_t seed);

}  // namespace aqpl
