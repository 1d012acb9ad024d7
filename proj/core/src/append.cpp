#include "aqpl/append.hpp"

#include <algorithm>
#include <cmath>

#include "aqpl/aqp_engine.hpp"
#include "aqpl/error.hpp"

namespace aqpl {

namespace {

// At least this many rows (or all of them) enter each side of the shift estimate.
constexpr double kMinShiftRows = 100.0;

RawAnswer sample_mean(const Relation& relation, const Expr& measure, double rate, std::uint64_t seed) {
  const double n = static_cast<double>(relation.row_count());
  if (n < 2.0) throw DataError("shift estimate needs at least two rows on each side");
  const double effective = std::min(1.0, std::max(rate, kMinShiftRows / n));
  Sample s = build_sample(relation, effective, seed);
  s.exhaustive = false;
  if (s.rows.size() < 2) throw DataError("shift estimate needs at least two sampled rows");
  return estimate_snippet(relation, s, QuerySnippet{SnippetAgg::Avg, measure, {}});
}

AttributeCatalog merge(const AttributeCatalog& a, const AttributeCatalog& b) {
  AttributeCatalog out = a;
  for (auto& d : out.numeric) {
    if (const auto* o = b.find_numeric(d.name)) {
      d.min = std::min(d.min, o->min);
      d.max = std::max(d.max, o->max);
    }
  }
  for (auto& d : out.categorical) {
    if (const auto* o = b.find_categorical(d.name)) {
      std::vector<std::string> both;
      std::set_union(d.values.begin(), d.values.end(), o->values.begin(), o->values.end(), std::back_inserter(both));
      d.values = std::move(both);
    }
  }
  out.cardinality = a.cardinality + b.cardinality;
  return out;
}

}  // namespace

ShiftEstimate estimate_shift(const Relation& old_relation, const Relation& appended, const Expr& measure,
                             double sample_rate, std::uint64_t seed) {
  const RawAnswer r = sample_mean(old_relation, measure, sample_rate, seed);
  const RawAnswer a = sample_mean(appended, measure, sample_rate, seed ^ 0x9e3779b97f4a7c15ULL);
  ShiftEstimate s;
  s.measure = measure;
  s.mu = a.theta - r.theta;
  s.eta2 = a.beta * a.beta + r.beta * r.beta;
  s.n_old = old_relation.row_count();
  s.n_new = appended.row_count();
  s.from_version = old_relation.version();
  s.to_version = old_relation.version() + 1;
  return s;
}

SynopsisEntry adjust_entry(const SynopsisEntry& entry, const ShiftEstimate& shift) {
  if (entry.snippet.agg != SnippetAgg::Avg || !entry.snippet.measure || *entry.snippet.measure != shift.measure)
    throw DataError("shift does not apply to " + entry.snippet.key());
  if (entry.data_version >= shift.to_version) throw DataError("entry already adjusted for this append");
  if (entry.data_version != shift.from_version) throw DataError("entry predates an unapplied append");
  const double w = static_cast<double>(shift.n_new) / static_cast<double>(shift.n_old + shift.n_new);
  SynopsisEntry out = entry;
  out.theta += w * shift.mu;
  out.beta = std::sqrt(entry.beta * entry.beta + w * w * shift.eta2);
  out.data_version = shift.to_version;
  return out;
}

std::size_t handle_freq_on_append(Synopsis& synopsis, std::uint64_t to_version) {
  return synopsis.remove_if("FREQ", [&](const SynopsisEntry& e) { return e.data_version < to_version; });
}

AppendEvent apply_append(Synopsis& synopsis, const Relation& old_relation, const Relation& appended,
                         std::uint64_t to_version, double sample_rate, std::uint64_t seed) {
  AppendEvent ev;
  ev.from_version = old_relation.version();
  ev.to_version = to_version;
  ev.old_rows = old_relation.row_count();
  ev.new_rows = appended.row_count();
  if (appended.empty()) return ev;

  for (const auto& key : synopsis.keys()) {
    if (key == "FREQ") continue;
    auto& list = synopsis.mutable_entries(key);
    const Expr measure = *list.front().snippet.measure;
    ShiftEstimate shift = estimate_shift(old_relation, appended, measure, sample_rate, seed);
    shift.to_version = to_version;
    for (auto& e : list)
      if (e.data_version == ev.from_version) e = adjust_entry(e, shift);
    ev.shifts[key] = {shift.mu, shift.eta2};
  }
  ev.evicted_freq = handle_freq_on_append(synopsis, to_version);
  synopsis.clear_model_systems();
  if (synopsis.catalog()) synopsis.set_catalog(merge(*synopsis.catalog(), appended.catalog()));
  synopsis.append_log().push_back(ev);
  return ev;
}

}  // namespace aqpl
