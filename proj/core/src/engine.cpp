#include "aqpl/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "aqpl/error.hpp"

namespace aqpl {

using json = nlohmann::json;

EngineConfig EngineConfig::from_json(std::string_view text) {
  EngineConfig c;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("config: expected a JSON object");
  try {
    for (const auto& [k, v] : doc.items()) {
      if (k == "n_max") c.n_max = v.get<std::size_t>();
      else if (k == "c_g") c.c_g = v.get<std::size_t>();
      else if (k == "delta_v") c.delta_v = v.get<double>();
      else if (k == "confidence") c.confidence = v.get<double>();
      else if (k == "sample_rate") c.sample_rate = v.get<double>();
      else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (k == "jitter") c.jitter = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "validation") {
        const auto m = v.get<std::string>();
        if (m == "clt") c.validation = ValidationMethod::Clt;
        else if (m == "chebyshev") c.validation = ValidationMethod::Chebyshev;
        else throw std::invalid_argument("config: validation must be \"clt\" or \"chebyshev\"");
      } else if (k == "use_model") c.use_model = v.get<bool>();
      else if (k == "use_validation") c.use_validation = v.get<bool>();
      else if (k == "record") c.record = v.get<bool>();
      else if (k == "restarts") c.restarts = v.get<std::size_t>();
      else if (k == "n_min") c.n_min = v.get<std::size_t>();
      else throw std::invalid_argument("config: unknown key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!(c.delta_v > 0.0 && c.delta_v < 1.0)) throw std::invalid_argument("config: delta_v must be in (0, 1)");
  if (!(c.confidence > 0.0 && c.confidence < 1.0)) throw std::invalid_argument("config: confidence must be in (0, 1)");
  if (!(c.sample_rate > 0.0 && c.sample_rate <= 1.0)) throw std::invalid_argument("config: sample_rate must be in (0, 1]");
  if (c.batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
  if (!(c.jitter > 0.0)) throw std::invalid_argument("config: jitter must be positive");
  if (c.c_g == 0) throw std::invalid_argument("config: c_g must be positive");
  return c;
}

std::string EngineConfig::to_json() const {
  json doc{{"n_max", n_max},       {"c_g", c_g},
           {"delta_v", delta_v},   {"confidence", confidence},
           {"sample_rate", sample_rate}, {"batch_size", batch_size},
           {"jitter", jitter},     {"seed", seed},
           {"validation", validation == ValidationMethod::Clt ? "clt" : "chebyshev"},
           {"use_model", use_model}, {"use_validation", use_validation},
           {"record", record},     {"restarts", restarts},
           {"n_min", n_min}};
  return doc.dump();
}

Engine::Engine(const Relation& relation, Synopsis& synopsis, EngineConfig config)
    : relation_(&relation), synopsis_(&synopsis), config_(config) {
  if (!synopsis_->catalog() && !relation.empty()) synopsis_->set_catalog(relation.catalog());
}

void Engine::set_relation(const Relation& relation) { relation_ = &relation; }

namespace {

double interval_multiplier(double confidence) { return confidence_multiplier(confidence); }

}  // namespace

SnippetResult Engine::improve(const QuerySnippet& snippet, const RawAnswer& raw) {
  SnippetResult sr;
  sr.snippet = snippet;
  sr.raw = raw;
  const auto key = snippet.key();
  const double delta = config_.confidence;
  if (!config_.use_model) {
    sr.improved = finalize_raw(snippet.agg, raw, Rejection::Untrained, delta);
    return sr;
  }
  // An exhaustive answer is already exact.
  if (raw.beta == 0.0) {
    sr.improved = finalize_raw(snippet.agg, raw, Rejection::None, delta);
    return sr;
  }
  const auto* m = synopsis_->model(key);
  if (m && !m->system && synopsis_->catalog() && synopsis_->size(key) > 0) {
    Synopsis::Model rebuilt{m->params, nullptr};
    try {
      const auto entries = synopsis_->entries_for(key);
      rebuilt.system = TrainedSystem::build({entries.begin(), entries.end()}, m->params, *synopsis_->catalog(),
                                            config_.jitter_policy());
    } catch (const DegenerateSystem&) {
      sr.improved = finalize_raw(snippet.agg, raw, Rejection::Degenerate, delta);
      return sr;
    }
    synopsis_->set_model(key, std::move(rebuilt));
    m = synopsis_->model(key);
  }
  if (!m || !m->system) {
    sr.improved = finalize_raw(snippet.agg, raw, Rejection::Untrained, delta);
    return sr;
  }

  const auto start = std::chrono::steady_clock::now();
  const CovarianceSystem sys = system_for(m->system, snippet);
  const ModelAnswer model = infer(raw, sys);
  sr.infer_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
  sr.model = model;

  const bool accept = !config_.use_validation || validate(model, raw, config_.delta_v, config_.validation);
  sr.improved = finalize(snippet.agg, model, raw, accept, delta);

  std::vector<std::uint64_t> ids;
  ids.reserve(m->system->size());
  for (const auto& e : m->system->entries()) ids.push_back(e.id);
  synopsis_->touch(key, ids);
  return sr;
}

QueryAnswer Engine::answer(std::string_view sql) {
  return answer(sql, build_sample(*relation_, config_.sample_rate, config_.seed));
}

namespace {

AggregateResult unavailable(const AggregateSpec& spec, std::string why) {
  AggregateResult r;
  r.spec = spec;
  r.reason = std::move(why);
  return r;
}

}  // namespace

QueryAnswer Engine::answer(std::string_view sql, const Sample& sample) {
  QueryAnswer out;
  const Relation& rel = *relation_;
  const double alpha = interval_multiplier(config_.confidence);
  auto parsed = parse(sql, rel.schema());

  if (auto* u = std::get_if<Unsupported>(&parsed)) {
    out.supported = false;
    out.unsupported_reason = u->reason;
    if (!u->fallback) return out;
    out.groupby = u->fallback->groupby;
    for (auto& row : estimate_general(rel, sample, *u->fallback)) {
      ResultRow rr{row.group, {}};
      for (std::size_t i = 0; i < row.aggregates.size(); ++i) {
        const auto& spec = u->fallback->aggregates[i];
        if (!row.aggregates[i]) {
          rr.aggregates.push_back(unavailable(spec, "empty selection"));
          continue;
        }
        AggregateResult a;
        a.spec = spec;
        a.value = a.raw_value = row.aggregates[i]->theta;
        a.error = a.raw_error = row.aggregates[i]->beta;
        a.ci = {*a.value - alpha * *a.error, *a.value + alpha * *a.error};
        a.reason = "unsupported";
        rr.aggregates.push_back(std::move(a));
      }
      out.rows.push_back(std::move(rr));
    }
    return out;
  }

  const auto& q = std::get<SupportedQuery>(parsed);
  out.groupby = q.groupby;
  std::vector<GroupKey> groups;
  if (!q.groupby.empty()) groups = sample_groups(rel, sample, q.predicate, q.groupby);
  const Decomposition plan = decompose(q, groups, config_.n_max);
  const std::size_t cardinality = rel.row_count();

  auto compose = [&](const std::vector<SnippetResult>& results, const AggregateSpec& spec, bool improve_path) {
    AggregateResult a;
    a.spec = spec;
    std::vector<SnippetValue> raw_vals, hat_vals, model_vals;
    bool all_models = true, any_model = false;
    for (const auto& r : results) {
      if (!r.raw) continue;
      const auto k = r.snippet.key();
      raw_vals.push_back({k, r.raw->theta, r.raw->beta});
      hat_vals.push_back({k, r.improved.theta_hat, r.improved.beta_hat});
      if (r.model) model_vals.push_back({k, r.model->theta_model, r.model->beta_model});
      else all_models = false;
      any_model = any_model || r.improved.model_used;
    }
    try {
      const auto hat = compose_answer(hat_vals, spec, cardinality);
      const auto raw = compose_answer(raw_vals, spec, cardinality);
      a.value = hat.value;
      a.error = hat.error;
      a.raw_value = raw.value;
      a.raw_error = raw.error;
      a.ci = {hat.value - alpha * hat.error, hat.value + alpha * hat.error};
      if (spec.fn == AggregateSpec::Fn::Count) a.ci.first = std::max(0.0, a.ci.first);
      a.model_used = any_model;
      if (all_models && !model_vals.empty()) {
        const auto mv = compose_answer(model_vals, spec, cardinality);
        a.model_value = mv.value;
        a.model_error = mv.error;
      }
      if (!improve_path) a.reason = "group limit";
      else if (!any_model) {
        for (const auto& r : results)
          if (r.improved.rejection != Rejection::None) {
            a.reason = std::string(to_string(r.improved.rejection));
            break;
          }
      }
    } catch (const DataError&) {
      std::string why = "empty selection";
      for (const auto& r : results)
        if (!r.raw && !r.error.empty()) why = r.error;
      a = unavailable(spec, why);
    }
    return a;
  };

  std::vector<SynopsisEntry> to_record;
  for (const auto& g : plan.improved) {
    std::vector<SnippetResult> results;
    for (const auto& s : g.snippets) {
      SnippetResult sr;
      try {
        const RawAnswer raw = estimate_snippet(rel, sample, s);
        sr = improve(s, raw);
        to_record.push_back({0, s, raw.theta, raw.beta, 0, rel.version()});
      } catch (const DataError& e) {
        sr.snippet = s;
        sr.error = e.what();
      }
      results.push_back(sr);
    }
    ResultRow row{g.key, {}};
    for (const auto& spec : q.aggregates) row.aggregates.push_back(compose(results, spec, true));
    out.rows.push_back(std::move(row));
    for (auto& r : results) out.snippets.push_back(std::move(r));
  }
  for (const auto& g : plan.passthrough) {
    std::vector<SnippetResult> results;
    for (const auto& s : group_snippets(q, g)) {
      SnippetResult sr;
      sr.snippet = s;
      try {
        const RawAnswer raw = estimate_snippet(rel, sample, s);
        sr.raw = raw;
        sr.improved = finalize_raw(s.agg, raw, Rejection::None, config_.confidence);
      } catch (const DataError& e) {
        sr.error = e.what();
      }
      results.push_back(sr);
    }
    ResultRow row{g, {}};
    for (const auto& spec : q.aggregates) row.aggregates.push_back(compose(results, spec, false));
    out.rows.push_back(std::move(row));
  }

  if (config_.record)
    for (auto& e : to_record) synopsis_->insert(std::move(e));
  return out;
}

std::size_t train_synopsis(Synopsis& synopsis, const EngineConfig& config, std::uint64_t seed) {
  if (!synopsis.catalog()) throw DataError("synopsis has no attribute catalog");
  FitConfig fc;
  fc.n_min = config.n_min;
  fc.restarts = config.restarts;
  fc.seed = seed;
  fc.jitter = config.jitter_policy();
  std::size_t trained = 0;
  for (const auto& key : synopsis.keys()) {
    const auto entries = synopsis.entries_for(key);
    if (entries.size() < config.n_min) continue;
    const FitResult r = fit(entries, *synopsis.catalog(), fc);
    if (!r.trained) continue;
    Synopsis::Model m{r.params, nullptr};
    try {
      m.system = TrainedSystem::build({entries.begin(), entries.end()}, r.params, *synopsis.catalog(),
                                      config.jitter_policy());
    } catch (const DegenerateSystem&) {
      continue;
    }
    synopsis.set_model(key, std::move(m));
    ++trained;
  }
  return trained;
}

std::size_t Engine::train(std::uint64_t seed) {
  synopsis_->set_catalog(relation_->catalog());
  return train_synopsis(*synopsis_, config_, seed);
}

void Engine::rebuild_systems() {
  if (!synopsis_->catalog()) return;
  for (const auto& [key, m] : std::map<std::string, Synopsis::Model>(synopsis_->models())) {
    if (m.system || synopsis_->size(key) == 0) continue;
    const auto entries = synopsis_->entries_for(key);
    try {
      synopsis_->set_model(key, {m.params, TrainedSystem::build({entries.begin(), entries.end()}, m.params,
                                                                *synopsis_->catalog(), config_.jitter_policy())});
    } catch (const DegenerateSystem&) {
    }
  }
}

}  // namespace aqpl
