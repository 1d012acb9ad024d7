#include "aqpl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "aqpl/append.hpp"
#include "aqpl/error.hpp"

namespace aqpl {

using json = nlohmann::json;

namespace {

constexpr std::size_t kMaxGridPoints = 10000;

SyntheticSpec with_defaults(SyntheticSpec s) {
  if (s.dims < 1 || s.dims > 3) throw DataError("synthetic data needs 1 to 3 dimensions");
  if (s.rows > 1000000) throw DataError("synthetic data is limited to 10^6 rows");
  if (s.domain.empty()) s.domain.assign(s.dims, {0.0, 1.0});
  if (s.domain.size() != s.dims) throw DataError("domain must list one range per dimension");
  for (const auto& [lo, hi] : s.domain)
    if (!(hi > lo)) throw DataError("domain ranges must have positive extent");
  if (s.lengths.empty())
    for (const auto& [lo, hi] : s.domain) s.lengths.push_back(0.2 * (hi - lo));
  if (s.lengths.size() != s.dims) throw DataError("lengths must list one value per dimension");
  for (double l : s.lengths)
    if (!(l > 0.0)) throw DataError("lengths must be positive");
  if (s.grid.empty()) {
    static constexpr std::size_t defaults[] = {500, 50, 15};
    s.grid.assign(s.dims, defaults[s.dims - 1]);
  }
  if (s.grid.size() != s.dims) throw DataError("grid must list one size per dimension");
  if (s.sigma2 < 0.0 || s.noise < 0.0) throw DataError("sigma2 and noise must be non-negative");
  return s;
}

std::string dim_name(std::size_t k) { return "x" + std::to_string(k); }

Relation generate_rows(const SyntheticData& data, std::size_t rows, double drift, std::mt19937_64& rng) {
  const auto& spec = data.spec;
  std::vector<Attribute> attrs;
  for (std::size_t k = 0; k < spec.dims; ++k) attrs.push_back({dim_name(k), Role::Dimension, Kind::Numeric});
  if (spec.categories > 0) attrs.push_back({"c", Role::Dimension, Kind::Categorical});
  attrs.push_back({"y", Role::Measure, Kind::Numeric});
  Relation rel{Schema(attrs)};
  rel.reserve(rows);

  const GridProcess grid_index(SyntheticSpec{spec.dims, spec.domain, spec.lengths, 0.0, 0.0, 0.0, 0, spec.grid});
  std::normal_distribution<double> normal;
  std::vector<std::uniform_real_distribution<double>> coord;
  for (const auto& [lo, hi] : spec.domain) coord.emplace_back(lo, hi);
  std::uniform_int_distribution<std::size_t> cat(0, spec.categories > 0 ? spec.categories - 1 : 0);

  std::vector<Value> row;
  std::vector<double> x(spec.dims);
  for (std::size_t r = 0; r < rows; ++r) {
    row.clear();
    for (std::size_t k = 0; k < spec.dims; ++k) {
      x[k] = coord[k](rng);
      row.emplace_back(x[k]);
    }
    std::size_t c = 0;
    if (spec.categories > 0) {
      c = cat(rng);
      row.emplace_back("c" + std::to_string(c));
    }
    const double y = spec.offset + data.nu[c](static_cast<Eigen::Index>(grid_index.nearest(x))) +
                     spec.noise * normal(rng) + drift;
    row.emplace_back(y);
    rel.add_row(row);
  }
  return rel;
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

SyntheticSpec SyntheticSpec::from_json(std::string_view text) {
  SyntheticSpec s;
  try {
    const json doc = json::parse(text);
    for (const auto& [k, v] : doc.items()) {
      if (k == "dims") s.dims = v.get<std::size_t>();
      else if (k == "domain") s.domain = v.get<std::vector<std::pair<double, double>>>();
      else if (k == "lengths") s.lengths = v.get<std::vector<double>>();
      else if (k == "sigma2") s.sigma2 = v.get<double>();
      else if (k == "noise") s.noise = v.get<double>();
      else if (k == "offset") s.offset = v.get<double>();
      else if (k == "rows") s.rows = v.get<std::size_t>();
      else if (k == "grid") s.grid = v.get<std::vector<std::size_t>>();
      else if (k == "categories") s.categories = v.get<std::size_t>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else throw std::invalid_argument("data spec: unknown key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("data spec: ") + e.what());
  }
  return s;
}

GridProcess::GridProcess(const SyntheticSpec& raw) {
  const SyntheticSpec spec = with_defaults(raw);
  dims_ = spec.dims;
  domain_ = spec.domain;
  grid_ = spec.grid;
  std::size_t total = 1;
  for (auto g : grid_) {
    if (g < 1) throw DataError("grid sizes must be positive");
    total *= g;
    if (total > kMaxGridPoints) throw DataError("grid too large (more than 10^4 points)");
  }
  points_.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(dims_));
  for (std::size_t p = 0; p < total; ++p) {
    std::size_t rest = p;
    for (std::size_t k = dims_; k-- > 0;) {
      const std::size_t i = rest % grid_[k];
      rest /= grid_[k];
      const auto [lo, hi] = domain_[k];
      points_(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) =
          grid_[k] == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_[k] - 1);
    }
  }
  if (spec.sigma2 == 0.0) return;

  const auto n = points_.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      double d2 = 0.0;
      for (std::size_t a = 0; a < dims_; ++a) {
        const double d = (points_(i, static_cast<Eigen::Index>(a)) - points_(j, static_cast<Eigen::Index>(a))) / spec.lengths[a];
        d2 += d * d;
      }
      k(i, j) = k(j, i) = spec.sigma2 * std::exp(-d2);
    }
  }
  // A smooth kernel on a dense grid is numerically singular; a tiny nugget fixes that.
  for (double eps = 1e-10; eps <= 1e-4; eps *= 10.0) {
    Eigen::MatrixXd m = k;
    m.diagonal().array() += eps * spec.sigma2;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
      return;
    }
  }
  throw DataError("grid covariance is not positive definite");
}

Eigen::VectorXd GridProcess::draw(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(points_.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  if (factor_.size() == 0) return Eigen::VectorXd::Zero(points_.rows());
  return factor_.triangularView<Eigen::Lower>() * z;
}

std::size_t GridProcess::nearest(std::span<const double> x) const {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < dims_; ++k) {
    const auto [lo, hi] = domain_[k];
    std::size_t i = 0;
    if (grid_[k] > 1) {
      const double t = std::round((x[k] - lo) / (hi - lo) * static_cast<double>(grid_[k] - 1));
      i = static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(grid_[k] - 1)));
    }
    idx = idx * grid_[k] + i;
  }
  return idx;
}

SyntheticData gen_synthetic(SyntheticSpec spec) {
  spec = with_defaults(spec);
  std::mt19937_64 rng(spec.seed);
  const GridProcess process(spec);
  SyntheticData data{spec, Relation{}, {}};
  const std::size_t draws = std::max<std::size_t>(1, spec.categories);
  for (std::size_t c = 0; c < draws; ++c) data.nu.push_back(process.draw(rng));
  data.relation = generate_rows(data, spec.rows, 0.0, rng);
  return data;
}

Relation gen_append_batch(const SyntheticData& data, std::size_t rows, double drift, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return generate_rows(data, rows, drift, rng);
}

WorkloadSpec WorkloadSpec::from_json(std::string_view text) {
  WorkloadSpec s;
  try {
    const json doc = json::parse(text);
    for (const auto& [k, v] : doc.items()) {
      if (k == "count") s.count = v.get<std::size_t>();
      else if (k == "min_width") s.min_width = v.get<double>();
      else if (k == "max_width") s.max_width = v.get<double>();
      else if (k == "overlap") s.overlap = v.get<double>();
      else if (k == "groupby_fraction") s.groupby_fraction = v.get<double>();
      else if (k == "count_fraction") s.count_fraction = v.get<double>();
      else if (k == "sum_fraction") s.sum_fraction = v.get<double>();
      else if (k == "measure") s.measure = v.get<std::string>();
      else if (k == "table") s.table = v.get<std::string>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else throw std::invalid_argument("workload spec: unknown key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("workload spec: ") + e.what());
  }
  if (!(s.min_width > 0.0 && s.min_width <= s.max_width && s.max_width <= 1.0))
    throw std::invalid_argument("workload spec: need 0 < min_width <= max_width <= 1");
  return s;
}

std::vector<std::string> gen_workload(const WorkloadSpec& spec, const AttributeCatalog& catalog) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<std::pair<double, double>>> history;
  std::vector<std::string> out;
  const CategoricalDomain* cat = catalog.categorical.empty() ? nullptr : &catalog.categorical.front();

  for (std::size_t q = 0; q < spec.count; ++q) {
    std::vector<std::pair<double, double>> ranges;
    const bool overlap = !history.empty() && unit(rng) < spec.overlap;
    const auto* anchor = overlap ? &history[std::min(history.size() - 1, static_cast<std::size_t>(unit(rng) * history.size()))]
                                 : nullptr;
    for (std::size_t k = 0; k < catalog.numeric.size(); ++k) {
      const auto& d = catalog.numeric[k];
      const double extent = d.extent();
      const double w = (spec.min_width + (spec.max_width - spec.min_width) * unit(rng)) * extent;
      double center;
      if (anchor) {
        const auto [alo, ahi] = (*anchor)[k];
        center = alo + (ahi - alo) * unit(rng);
      } else {
        center = d.min + w / 2 + (extent - w) * unit(rng);
      }
      center = std::clamp(center, d.min + w / 2, d.max - w / 2);
      ranges.emplace_back(round6(center - w / 2), round6(center + w / 2));
    }

    const double a = unit(rng);
    const std::string agg = a < spec.count_fraction ? "COUNT(*)"
                            : a < spec.count_fraction + spec.sum_fraction ? "SUM(" + spec.measure + ")"
                                                                          : "AVG(" + spec.measure + ")";
    const bool group = cat && unit(rng) < spec.groupby_fraction;
    const bool pick_category = cat && !group && unit(rng) < 0.5;
    const std::size_t category = cat ? std::min(cat->values.size() - 1, static_cast<std::size_t>(unit(rng) * cat->values.size())) : 0;

    std::string sql = "SELECT " + (group ? cat->name + ", " : std::string()) + agg + " FROM " + spec.table;
    std::string where;
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      where += (k ? " AND " : "") + catalog.numeric[k].name + " BETWEEN " + format_number(ranges[k].first) +
               " AND " + format_number(ranges[k].second);
    }
    if (pick_category) where += (where.empty() ? "" : " AND ") + cat->name + " = '" + cat->values[category] + "'";
    if (!where.empty()) sql += " WHERE " + where;
    if (group) sql += " GROUP BY " + cat->name;
    out.push_back(std::move(sql));
    history.push_back(std::move(ranges));
  }
  return out;
}

void MetricsReport::summarize() {
  inferences = accepted = bound_violations = 0;
  double sum_beta = 0.0, sum_hat = 0.0, sum_rel_raw = 0.0, sum_rel_hat = 0.0, sum_us = 0.0;
  std::size_t viol_hat = 0, viol_raw = 0;
  const double alpha = confidence_multiplier(confidence);
  for (const auto& r : records) {
    if (r.theta_model) {
      ++inferences;
      sum_us += r.t_infer_us;
    }
    if (r.accepted) ++accepted;
    if (r.beta_hat > r.beta_raw) ++bound_violations;
    sum_beta += r.beta_raw;
    sum_hat += r.beta_hat;
    sum_rel_raw += r.rel_err_raw;
    sum_rel_hat += r.rel_err_hat;
    if (std::abs(r.theta_hat - r.exact) > alpha * r.beta_hat) ++viol_hat;
    if (std::abs(r.theta_raw - r.exact) > alpha * r.beta_raw) ++viol_raw;
  }
  const double n = static_cast<double>(records.size());
  error_bound_reduction = sum_beta > 0.0 ? 1.0 - sum_hat / sum_beta : 0.0;
  violation_rate_hat = records.empty() ? 0.0 : static_cast<double>(viol_hat) / n;
  violation_rate_raw = records.empty() ? 0.0 : static_cast<double>(viol_raw) / n;
  mean_rel_err_raw = records.empty() ? 0.0 : sum_rel_raw / n;
  mean_rel_err_hat = records.empty() ? 0.0 : sum_rel_hat / n;
  mean_infer_us = inferences ? sum_us / static_cast<double>(inferences) : 0.0;
}

namespace {

double relative_error(double estimate, double exact) {
  const double diff = std::abs(estimate - exact);
  return exact != 0.0 ? diff / std::abs(exact) : diff;
}

Sample query_sample(const Relation& rel, const BenchConfig& config, std::size_t qid) {
  const std::uint64_t seed = config.per_query_samples ? config.engine.seed + qid : config.engine.seed;
  return build_sample(rel, config.engine.sample_rate, seed);
}

}  // namespace

MetricsReport run_bench(const Relation& relation, std::span<const std::string> workload, const BenchConfig& config,
                        const Relation* append_batch) {
  MetricsReport report;
  report.confidence = config.engine.confidence;
  Synopsis synopsis(config.engine.c_g);
  EngineConfig ec = config.engine;
  ec.record = true;
  ec.use_model = false;
  Engine engine(relation, synopsis, ec);

  const std::size_t half = workload.size() / 2;
  for (std::size_t q = 0; q < half; ++q) engine.answer(workload[q], query_sample(relation, config, q));
  report.phase1_entries = synopsis.size();

  Relation current = relation;
  if (append_batch && !append_batch->empty()) {
    AppendResult grown = append_rows(relation, *append_batch);
    if (config.adjust_appends) {
      apply_append(synopsis, relation, *append_batch, grown.relation.version(), ec.sample_rate, ec.seed);
    } else {
      synopsis.clear_model_systems();
    }
    current = std::move(grown.relation);
    engine.set_relation(current);
  }

  report.trained_keys = engine.train(config.fit_seed);
  if (config.fixed_lengths || config.length_scale != 1.0) {
    for (const auto& [key, m] : std::map<std::string, Synopsis::Model>(synopsis.models())) {
      CorrelationParams p = m.params;
      if (config.fixed_lengths) p.lengths = *config.fixed_lengths;
      for (auto& [name, l] : p.lengths) l *= config.length_scale;
      synopsis.set_model(key, {p, nullptr});
    }
    engine.rebuild_systems();
  }
  for (const auto& [key, m] : synopsis.models()) report.params[key] = m.params;

  engine.config().record = false;
  engine.config().use_model = config.inference;
  engine.config().use_validation = config.validation;
  for (std::size_t q = half; q < workload.size(); ++q) {
    const QueryAnswer ans = engine.answer(workload[q], query_sample(current, config, q));
    for (const auto& s : ans.snippets) {
      if (!s.raw) continue;
      QueryRecord r;
      r.qid = q;
      r.g = s.snippet.key();
      r.theta_raw = s.raw->theta;
      r.beta_raw = s.raw->beta;
      if (s.model) {
        r.theta_model = s.model->theta_model;
        r.beta_model = s.model->beta_model;
      }
      r.accepted = s.improved.model_used;
      r.theta_hat = s.improved.theta_hat;
      r.beta_hat = s.improved.beta_hat;
      r.exact = exact_snippet(current, s.snippet).theta;
      r.rel_err_raw = relative_error(r.theta_raw, r.exact);
      r.rel_err_hat = relative_error(r.theta_hat, r.exact);
      r.t_infer_us = config.record_timings ? s.infer_us : 0.0;
      r.rejection = s.improved.rejection;
      report.records.push_back(std::move(r));
    }
  }
  report.summarize();
  return report;
}

BenchSpec BenchSpec::from_json(std::string_view text) {
  BenchSpec s;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bench config: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("bench config: expected a JSON object");
  try {
    for (const auto& [k, v] : doc.items()) {
      if (k == "data") s.data = SyntheticSpec::from_json(v.dump());
      else if (k == "workload") s.workload = WorkloadSpec::from_json(v.dump());
      else if (k == "engine") s.bench.engine = EngineConfig::from_json(v.dump());
      else if (k == "inference") s.bench.inference = v.get<bool>();
      else if (k == "validation") s.bench.validation = v.get<bool>();
      else if (k == "per_query_samples") s.bench.per_query_samples = v.get<bool>();
      else if (k == "fixed_lengths") s.bench.fixed_lengths = v.get<std::map<std::string, double>>();
      else if (k == "length_scale") s.bench.length_scale = v.get<double>();
      else if (k == "record_timings") s.bench.record_timings = v.get<bool>();
      else if (k == "adjust_appends") s.bench.adjust_appends = v.get<bool>();
      else if (k == "fit_seed") s.bench.fit_seed = v.get<std::uint64_t>();
      else if (k == "append") {
        AppendSpec a;
        for (const auto& [ak, av] : v.items()) {
          if (ak == "fraction") a.fraction = av.get<double>();
          else if (ak == "drift") a.drift = av.get<double>();
          else if (ak == "seed") a.seed = av.get<std::uint64_t>();
          else throw std::invalid_argument("bench config: unknown append key '" + ak + "'");
        }
        if (!(a.fraction >= 0.0)) throw std::invalid_argument("bench config: append fraction must be >= 0");
        s.append = a;
      } else {
        throw std::invalid_argument("bench config: unknown key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bench config: ") + e.what());
  }
  if (!(s.bench.length_scale > 0.0)) throw std::invalid_argument("bench config: length_scale must be positive");
  return s;
}

MetricsReport run_bench(const BenchSpec& spec) {
  const SyntheticData data = gen_synthetic(spec.data);
  const auto workload = gen_workload(spec.workload, data.relation.catalog());
  if (!spec.append) return run_bench(data.relation, workload, spec.bench);
  const auto rows = static_cast<std::size_t>(std::llround(spec.append->fraction * static_cast<double>(data.relation.row_count())));
  const Relation batch = gen_append_batch(data, rows, spec.append->drift, spec.append->seed);
  return run_bench(data.relation, workload, spec.bench, &batch);
}

namespace {

std::string num(double v) { return format_number(v); }
std::string opt(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

}  // namespace

void emit_report(const MetricsReport& m, ReportFormat format, std::ostream& out) {
  if (format == ReportFormat::Csv) {
    bool first = true;
    for (const char* c : kReportColumns) {
      out << (first ? "" : ",") << c;
      first = false;
    }
    out << '\n';
    for (const auto& r : m.records) {
      out << r.qid << ',' << '"' << r.g << '"' << ',' << num(r.theta_raw) << ',' << num(r.beta_raw) << ','
          << opt(r.theta_model) << ',' << opt(r.beta_model) << ',' << (r.accepted ? 1 : 0) << ','
          << num(r.theta_hat) << ',' << num(r.beta_hat) << ',' << num(r.exact) << ',' << num(r.rel_err_raw) << ','
          << num(r.rel_err_hat) << ',' << num(r.t_infer_us) << '\n';
    }
    return;
  }
  json params = json::object();
  for (const auto& [key, p] : m.params) params[key] = {{"lengths", p.lengths}, {"sigma2", p.sigma2}, {"mu", p.mu}};
  const json doc{{"records", m.records.size()},
                 {"phase1_entries", m.phase1_entries},
                 {"trained_keys", m.trained_keys},
                 {"inferences", m.inferences},
                 {"accepted", m.accepted},
                 {"bound_violations", m.bound_violations},
                 {"error_bound_reduction", m.error_bound_reduction},
                 {"violation_rate_hat", m.violation_rate_hat},
                 {"violation_rate_raw", m.violation_rate_raw},
                 {"mean_rel_err_raw", m.mean_rel_err_raw},
                 {"mean_rel_err_hat", m.mean_rel_err_hat},
                 {"mean_infer_us", m.mean_infer_us},
                 {"confidence", m.confidence},
                 {"params", params}};
  out << doc.dump(2) << '\n';
}

void emit_report(const MetricsReport& m, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  emit_report(m, format, out);
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace aqpl
