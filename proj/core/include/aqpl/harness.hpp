#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aqpl/engine.hpp"
#include "aqpl/relation.hpp"

namespace aqpl {

/// Synthetic relation whose measure follows a squared-exponential Gaussian
/// process over 1-3 numeric dimensions named x0, x1, x2. An optional
/// categorical dimension "c" gives every category an independent draw.
struct SyntheticSpec {
  std::size_t dims = 1;
  std::vector<std::pair<double, double>> domain;  // per dim; default [0, 1]
  std::vector<double> lengths;                    // true lengths; default 0.2 * extent
  double sigma2 = 1.0;
  double noise = 0.1;  // stddev of per-row Gaussian noise
  double offset = 10.0;
  std::size_t rows = 100000;
  std::vector<std::size_t> grid;  // points per dim; default 500 / 50 / 15
  std::size_t categories = 0;
  std::uint64_t seed = 1;

  static SyntheticSpec from_json(std::string_view text);
};

/// Zero-mean GP on a regular grid, sampled through a Cholesky factor.
class GridProcess {
 public:
  /// Throws DataError when the grid has more than 10^4 points or dims > 3.
  explicit GridProcess(const SyntheticSpec& spec);

  std::size_t size() const noexcept { return points_.rows(); }
  const Eigen::MatrixXd& points() const noexcept { return points_; }
  Eigen::VectorXd draw(std::mt19937_64& rng) const;
  std::size_t nearest(std::span<const double> x) const;

 private:
  std::size_t dims_;
  std::vector<std::pair<double, double>> domain_;
  std::vector<std::size_t> grid_;
  Eigen::MatrixXd points_;
  Eigen::MatrixXd factor_;  // lower Cholesky factor (empty when sigma2 == 0)
};

struct SyntheticData {
  SyntheticSpec spec;  // with defaults filled in
  Relation relation;
  std::vector<Eigen::VectorXd> nu;  // per category (one when no categorical dim)
};

SyntheticData gen_synthetic(SyntheticSpec spec);

/// Extra rows over the same latent function, shifted by `drift`.
Relation gen_append_batch(const SyntheticData& data, std::size_t rows, double drift,
                          std::uint64_t seed);

struct WorkloadSpec {
  std::size_t count = 200;
  double min_width = 0.02;  // fraction of each dimension's extent
  double max_width = 0.10;
  double overlap = 0.5;     // probability a query is centered inside an earlier range
  double groupby_fraction = 0.0;
  double count_fraction = 0.0;
  double sum_fraction = 0.0;
  std::string measure = "y";
  std::string table = "t";
  std::uint64_t seed = 1;

  static WorkloadSpec from_json(std::string_view text);
};

/// Deterministic list of supported SQL texts over the catalog's numeric dims.
std::vector<std::string> gen_workload(const WorkloadSpec& spec, const AttributeCatalog& catalog);

struct BenchConfig {
  EngineConfig engine;
  bool inference = true;
  bool validation = true;
  /// Each query draws its own sample (seed + query index) so raw errors are independent.
  bool per_query_samples = true;
  /// Replace fitted lengths (after fitting); then scale them.
  std::optional<std::map<std::string, double>> fixed_lengths;
  double length_scale = 1.0;
  bool record_timings = true;
  bool adjust_appends = true;
  std::uint64_t fit_seed = 0;
};

struct QueryRecord {
  std::size_t qid = 0;
  std::string g;
  double theta_raw = 0.0;
  double beta_raw = 0.0;
  std::optional<double> theta_model;
  std::optional<double> beta_model;
  bool accepted = false;
  double theta_hat = 0.0;
  double beta_hat = 0.0;
  double exact = 0.0;
  double rel_err_raw = 0.0;
  double rel_err_hat = 0.0;
  double t_infer_us = 0.0;
  Rejection rejection = Rejection::None;
};

struct MetricsReport {
  std::vector<QueryRecord> records;  // phase-2 snippets, ordered by qid
  std::size_t phase1_entries = 0;
  std::size_t trained_keys = 0;
  std::size_t inferences = 0;        // records that reached the model
  std::size_t accepted = 0;
  std::size_t bound_violations = 0;  // beta_hat > beta_raw
  double error_bound_reduction = 0.0;  // 1 - mean(beta_hat) / mean(beta_raw)
  double violation_rate_hat = 0.0;     // |theta_hat - exact| > alpha * beta_hat
  double violation_rate_raw = 0.0;
  double mean_rel_err_raw = 0.0;
  double mean_rel_err_hat = 0.0;
  double mean_infer_us = 0.0;
  double confidence = 0.95;
  std::map<std::string, CorrelationParams> params;

  void summarize();
};

/// Phase 1 answers the first half raw and fits; phase 2 answers the rest with
/// the full pipeline and scores against exact answers. `append_batch`, when
/// given, is appended between the phases.
MetricsReport run_bench(const Relation& relation, std::span<const std::string> workload,
                        const BenchConfig& config, const Relation* append_batch = nullptr);

/// A drifting batch appended between the phases, sized as a fraction of the base rows.
struct AppendSpec {
  double fraction = 0.1;
  double drift = 0.0;
  std::uint64_t seed = 99;
};

/// Everything a `bench` run needs, read from one JSON document with the keys
/// data, workload, engine, append and the BenchConfig switches.
struct BenchSpec {
  SyntheticSpec data;
  WorkloadSpec workload;
  BenchConfig bench;
  std::optional<AppendSpec> append;

  static BenchSpec from_json(std::string_view text);
};

/// Generates data and workload, then runs the benchmark.
MetricsReport run_bench(const BenchSpec& spec);

enum class ReportFormat { Csv, Json };

/// Column order of the per-query CSV report.
inline constexpr const char* kReportColumns[] = {
    "qid",   "g",      "theta_raw",   "beta_raw",    "theta_model", "beta_model", "accepted",
    "theta_hat", "beta_hat", "exact", "rel_err_raw", "rel_err_hat", "t_infer_us"};

void emit_report(const MetricsReport& metrics, ReportFormat format, std::ostream& out);
void emit_report(const MetricsReport& metrics, ReportFormat format,
                 const std::filesystem::path& path);

}  // namespace aqpl
