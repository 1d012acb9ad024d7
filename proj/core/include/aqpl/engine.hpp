#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aqpl/aqp_engine.hpp"
#include "aqpl/inference.hpp"
#include "aqpl/learner.hpp"
#include "aqpl/query.hpp"
#include "aqpl/relation.hpp"
#include "aqpl/synopsis.hpp"
#include "aqpl/validator.hpp"

namespace aqpl {

struct EngineConfig {
  std::size_t n_max = 1000;
  std::size_t c_g = 2000;
  double delta_v = 0.99;
  double confidence = 0.95;
  double sample_rate = 0.01;
  std::size_t batch_size = 1000;
  double jitter = 1e-8;
  std::uint64_t seed = 0;
  ValidationMethod validation = ValidationMethod::Clt;
  bool use_model = true;
  bool use_validation = true;
  bool record = true;  // insert raw snippet answers into the synopsis
  std::size_t restarts = 3;
  std::size_t n_min = 10;

  /// Reads the JSON config keys; unknown keys are rejected.
  static EngineConfig from_json(std::string_view text);
  std::string to_json() const;
  JitterPolicy jitter_policy() const { return JitterPolicy{jitter, 1e-4, 1e-8}; }
};

/// Fits every key of the synopsis with at least n_min entries against its
/// stored catalog and precomputes the systems. Returns the number of keys trained.
std::size_t train_synopsis(Synopsis& synopsis, const EngineConfig& config, std::uint64_t seed);

/// One internal snippet processed end to end.
struct SnippetResult {
  QuerySnippet snippet;
  std::optional<RawAnswer> raw;  // nullopt: empty selection
  std::optional<ModelAnswer> model;
  ImprovedAnswer improved;
  double infer_us = 0.0;
  std::string error;  // raw failure message
};

struct AggregateResult {
  AggregateSpec spec;
  std::optional<double> value;
  std::optional<double> error;
  std::pair<double, double> ci{0.0, 0.0};
  bool model_used = false;
  std::optional<double> raw_value;
  std::optional<double> raw_error;
  std::optional<double> model_value;
  std::optional<double> model_error;
  std::string reason;
};

struct ResultRow {
  GroupKey group;
  std::vector<AggregateResult> aggregates;
};

struct QueryAnswer {
  bool supported = true;
  std::string unsupported_reason;
  std::vector<std::string> groupby;
  std::vector<ResultRow> rows;
  std::vector<SnippetResult> snippets;
};

/// Query loop: raw answers from the sample, model-based improvement against
/// the trained snapshot, validation, composition, and synopsis insertion.
class Engine {
 public:
  Engine(const Relation& relation, Synopsis& synopsis, EngineConfig config = {});

  const EngineConfig& config() const noexcept { return config_; }
  EngineConfig& config() noexcept { return config_; }

  /// Uses a sample built from config().sample_rate and config().seed.
  QueryAnswer answer(std::string_view sql);
  QueryAnswer answer(std::string_view sql, const Sample& sample);

  /// Improves one raw snippet answer against the current model (no insertion).
  SnippetResult improve(const QuerySnippet& snippet, const RawAnswer& raw);

  /// Fits every key with at least n_min entries and precomputes its system.
  /// Returns the number of keys trained.
  std::size_t train(std::uint64_t seed);
  /// Recomputes systems for keys that have parameters but no system.
  void rebuild_systems();

  const Relation& relation() const noexcept { return *relation_; }
  void set_relation(const Relation& relation);
  Synopsis& synopsis() noexcept { return *synopsis_; }

 private:
  const Relation* relation_;
  Synopsis* synopsis_;
  EngineConfig config_;
};

}  // namespace aqpl
