// Command-line front end. A relation bundle is a directory holding
// schema.json, data.csv, meta.json and (once queried) synopsis.jsonl.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "aqpl/append.hpp"
#include "aqpl/engine.hpp"
#include "aqpl/error.hpp"
#include "aqpl/harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitUnsupported = 3;
constexpr int kOutputVersion = 1;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw aqpl::DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw aqpl::DataError("cannot write " + path.string());
}

struct Bundle {
  fs::path dir;
  aqpl::Schema schema;
  aqpl::Relation relation;

  fs::path synopsis_path() const { return dir / "synopsis.jsonl"; }
};

void write_meta(const fs::path& dir, const aqpl::Relation& rel) {
  const json meta{{"format", 1}, {"version", rel.version()}, {"rows", rel.row_count()}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

Bundle open_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw aqpl::DataError("not a relation bundle: " + dir.string());
  Bundle b{dir, aqpl::Schema::load(dir / "schema.json"), {}};
  b.relation = aqpl::load_csv(dir / "data.csv", b.schema);
  json meta;
  try {
    meta = json::parse(read_text(dir / "meta.json"));
    b.relation.set_version(meta.at("version").get<std::uint64_t>());
  } catch (const json::exception& e) {
    throw aqpl::FormatError(dir.string() + "/meta.json: " + e.what());
  }
  return b;
}

aqpl::Synopsis open_synopsis(const fs::path& path, std::size_t cap) {
  if (fs::exists(path)) return aqpl::Synopsis::load(path);
  return aqpl::Synopsis(cap);
}

aqpl::EngineConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return aqpl::EngineConfig::from_json(read_text(path));
}

json group_json(const std::vector<std::string>& names, const aqpl::GroupKey& key) {
  json g = json::object();
  for (std::size_t i = 0; i < names.size() && i < key.size(); ++i) {
    if (const auto* d = std::get_if<double>(&key[i])) g[names[i]] = *d;
    else g[names[i]] = std::get<std::string>(key[i]);
  }
  return g;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// One line per (result row, aggregate).
void print_answer(const aqpl::QueryAnswer& ans, std::optional<std::size_t> step, std::optional<std::size_t> rows_seen) {
  for (const auto& row : ans.rows) {
    for (const auto& a : row.aggregates) {
      json line{{"v", kOutputVersion}};
      if (step) {
        line["step"] = *step;
        line["rows_seen"] = *rows_seen;
      }
      line["group"] = group_json(ans.groupby, row.group);
      line["aggregate"] = aqpl::print(a.spec);
      line["value"] = opt_json(a.value);
      line["error"] = opt_json(a.error);
      line["ci"] = a.value ? json::array({a.ci.first, a.ci.second}) : json(nullptr);
      line["model_used"] = a.model_used;
      line["raw_value"] = opt_json(a.raw_value);
      line["raw_error"] = opt_json(a.raw_error);
      line["model_value"] = opt_json(a.model_value);
      line["model_error"] = opt_json(a.model_error);
      line["reason"] = a.reason;
      std::cout << line.dump() << '\n';
    }
  }
}

// -- subcommands ------------------------------------------------------------

struct LoadArgs {
  std::string csv, schema, out;
};

int run_load(const LoadArgs& a) {
  const auto schema = aqpl::Schema::load(a.schema);
  const auto rel = aqpl::load_csv(a.csv, schema);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "schema.json", schema.to_json() + "\n");
  aqpl::write_csv(rel, fs::path(a.out) / "data.csv");
  write_meta(a.out, rel);
  std::cout << json{{"rows", rel.row_count()}, {"version", rel.version()}, {"bundle", a.out}}.dump() << '\n';
  return kExitOk;
}

struct SampleArgs {
  std::string rel;
  double rate = 0.01;
  std::uint64_t seed = 0;
};

int run_sample(const SampleArgs& a) {
  const Bundle b = open_bundle(a.rel);
  const auto s = aqpl::build_sample(b.relation, a.rate, a.seed);
  std::cout << json{{"rows", b.relation.row_count()}, {"sampled", s.rows.size()}, {"rate", s.rate},
                    {"seed", s.seed}, {"version", s.parent_version}}
                   .dump()
            << '\n';
  return kExitOk;
}

struct QueryArgs {
  std::string rel, sql, synopsis, config;
  bool online = false;
  std::size_t batch = 0;
  std::optional<double> confidence;
  std::optional<std::uint64_t> seed;
  std::optional<double> rate;
  bool no_model = false;
  bool no_record = false;
};

int run_query(const QueryArgs& a) {
  const Bundle b = open_bundle(a.rel);
  aqpl::EngineConfig cfg = load_config(a.config);
  if (a.confidence) cfg.confidence = *a.confidence;
  if (a.seed) cfg.seed = *a.seed;
  if (a.rate) cfg.sample_rate = *a.rate;
  if (!(cfg.confidence > 0.0 && cfg.confidence < 1.0)) throw std::invalid_argument("--confidence must be in (0, 1)");
  cfg.use_model = !a.no_model;
  const fs::path syn_path = a.synopsis.empty() ? b.synopsis_path() : fs::path(a.synopsis);
  aqpl::Synopsis syn = open_synopsis(syn_path, cfg.c_g);

  bool unsupported = false;
  if (a.online) {
    cfg.record = false;
    aqpl::Engine engine(b.relation, syn, cfg);
    aqpl::OnlineStream stream(b.relation, a.batch ? a.batch : cfg.batch_size, cfg.seed);
    std::size_t step = 0;
    while (!stream.done()) {
      const aqpl::Sample s = stream.next();
      const auto ans = engine.answer(a.sql, s);
      unsupported = !ans.supported;
      print_answer(ans, ++step, s.rows.size());
      if (!ans.supported && ans.rows.empty()) break;
    }
  } else {
    cfg.record = !a.no_record;
    aqpl::Engine engine(b.relation, syn, cfg);
    const auto ans = engine.answer(a.sql);
    unsupported = !ans.supported;
    if (!ans.supported && ans.rows.empty())
      std::cout << json{{"v", kOutputVersion}, {"model_used", false}, {"reason", "unsupported"},
                        {"detail", ans.unsupported_reason}, {"value", nullptr}}
                       .dump()
                << '\n';
    print_answer(ans, std::nullopt, std::nullopt);
  }
  if (cfg.record) syn.save(syn_path);
  return unsupported ? kExitUnsupported : kExitOk;
}

struct TrainArgs {
  std::string rel, synopsis, config;
  std::optional<std::size_t> restarts;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  if (a.synopsis.empty() && a.rel.empty()) throw std::invalid_argument("train needs --synopsis or --rel");
  aqpl::EngineConfig cfg = load_config(a.config);
  if (a.restarts) cfg.restarts = *a.restarts;
  const fs::path syn_path = a.synopsis.empty() ? fs::path(a.rel) / "synopsis.jsonl" : fs::path(a.synopsis);
  if (!fs::exists(syn_path)) throw aqpl::DataError("no synopsis at " + syn_path.string());
  aqpl::Synopsis syn = aqpl::Synopsis::load(syn_path);
  if (!a.rel.empty()) syn.set_catalog(open_bundle(a.rel).relation.catalog());
  const std::size_t trained = aqpl::train_synopsis(syn, cfg, a.seed);
  syn.save(syn_path);
  json models = json::object();
  for (const auto& [key, m] : syn.models())
    models[key] = {{"lengths", m.params.lengths}, {"sigma2", m.params.sigma2}, {"mu", m.params.mu},
                   {"entries", syn.size(key)}};
  std::cout << json{{"trained", trained}, {"models", models}}.dump() << '\n';
  return kExitOk;
}

struct AppendArgs {
  std::string rel, csv, synopsis, config;
};

int run_append(const AppendArgs& a) {
  Bundle b = open_bundle(a.rel);
  const aqpl::EngineConfig cfg = load_config(a.config);
  const auto batch = aqpl::read_csv(a.csv, b.schema);
  const fs::path syn_path = a.synopsis.empty() ? b.synopsis_path() : fs::path(a.synopsis);
  auto grown = aqpl::append_rows(b.relation, batch);
  json out{{"old_rows", grown.counts.old_rows}, {"new_rows", grown.counts.new_rows},
           {"version", grown.relation.version()}};
  if (fs::exists(syn_path) && !batch.empty()) {
    aqpl::Synopsis syn = aqpl::Synopsis::load(syn_path);
    const auto ev = aqpl::apply_append(syn, b.relation, batch, grown.relation.version(), cfg.sample_rate, cfg.seed);
    json shifts = json::object();
    for (const auto& [key, s] : ev.shifts) shifts[key] = {{"mu", s.first}, {"eta2", s.second}};
    out["shifts"] = shifts;
    out["evicted_freq"] = ev.evicted_freq;
    syn.save(syn_path);
  }
  aqpl::write_csv(grown.relation, b.dir / "data.csv");
  write_meta(b.dir, grown.relation);
  std::cout << out.dump() << '\n';
  return kExitOk;
}

struct BenchArgs {
  std::string config, out;
};

int run_bench_cmd(const BenchArgs& a) {
  const auto spec = aqpl::BenchSpec::from_json(read_text(a.config));
  const auto report = aqpl::run_bench(spec);
  if (const auto dir = fs::path(a.out).parent_path(); !dir.empty()) fs::create_directories(dir);
  aqpl::emit_report(report, aqpl::ReportFormat::Csv, fs::path(a.out));
  fs::path summary = a.out;
  summary.replace_extension(".json");
  aqpl::emit_report(report, aqpl::ReportFormat::Json, summary);
  aqpl::emit_report(report, aqpl::ReportFormat::Json, std::cout);
  return kExitOk;
}

struct SynopsisArgs {
  std::string path;
};

int run_synopsis_show(const SynopsisArgs& a) {
  const auto syn = aqpl::Synopsis::load(a.path);
  for (const auto& key : syn.keys()) {
    for (const auto& e : syn.entries_for(key)) {
      std::cout << json{{"g", key},        {"id", e.id},          {"sql", aqpl::print(e.snippet)},
                        {"theta", e.theta}, {"beta", e.beta},      {"last_used", e.last_used},
                        {"version", e.data_version}}
                       .dump()
                << '\n';
    }
  }
  return kExitOk;
}

int run_synopsis_stats(const SynopsisArgs& a) {
  const auto syn = aqpl::Synopsis::load(a.path);
  json keys = json::object();
  for (const auto& key : syn.keys()) {
    json k{{"entries", syn.size(key)}, {"trained", false}};
    if (const auto* m = syn.model(key)) {
      k["trained"] = true;
      k["lengths"] = m->params.lengths;
      k["sigma2"] = m->params.sigma2;
      k["mu"] = m->params.mu;
    }
    keys[key] = k;
  }
  std::cout << json{{"cap", syn.cap()}, {"entries", syn.size()}, {"appends", syn.append_log().size()},
                    {"keys", keys}}
                   .dump(2)
            << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aqpl: approximate queries that learn from past answers"};
  app.require_subcommand(1);

  LoadArgs load;
  auto* load_cmd = app.add_subcommand("load", "Load a CSV into a relation bundle");
  load_cmd->add_option("--csv", load.csv, "Input CSV with a header row")->required()->check(CLI::ExistingFile);
  load_cmd->add_option("--schema", load.schema, "Schema JSON")->required()->check(CLI::ExistingFile);
  load_cmd->add_option("--out", load.out, "Bundle directory to write")->required();

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "Draw a uniform sample and report its size");
  sample_cmd->add_option("--rel", sample.rel, "Relation bundle")->required();
  sample_cmd->add_option("--rate", sample.rate, "Sampling rate in (0, 1]");
  sample_cmd->add_option("--seed", sample.seed, "Sample seed");

  QueryArgs query;
  auto* query_cmd = app.add_subcommand("query", "Answer a SQL aggregate query");
  query_cmd->add_option("--rel", query.rel, "Relation bundle")->required();
  query_cmd->add_option("--sql", query.sql, "Query text")->required();
  query_cmd->add_option("--synopsis", query.synopsis, "Synopsis file (default: <rel>/synopsis.jsonl)");
  query_cmd->add_option("--config", query.config, "Engine config JSON");
  query_cmd->add_flag("--online", query.online, "Stream one line per online-aggregation batch");
  query_cmd->add_option("--batch", query.batch, "Rows per online batch (default: config batch_size)");
  query_cmd->add_option("--confidence", query.confidence, "Interval confidence (default 0.95)");
  query_cmd->add_option("--seed", query.seed, "Sample seed (overrides config)");
  query_cmd->add_option("--rate", query.rate, "Sampling rate (overrides config)");
  query_cmd->add_flag("--no-model", query.no_model, "Raw answers only");
  query_cmd->add_flag("--no-record", query.no_record, "Do not add the answer to the synopsis");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Fit correlation parameters for every aggregate key");
  train_cmd->add_option("--synopsis", train.synopsis, "Synopsis file");
  train_cmd->add_option("--rel", train.rel, "Relation bundle (refreshes the catalog)");
  train_cmd->add_option("--config", train.config, "Engine config JSON");
  train_cmd->add_option("--restarts", train.restarts, "Random restarts of the optimizer");
  train_cmd->add_option("--seed", train.seed, "Restart seed");

  AppendArgs append;
  auto* append_cmd = app.add_subcommand("append", "Append rows and adjust the synopsis");
  append_cmd->add_option("--rel", append.rel, "Relation bundle")->required();
  append_cmd->add_option("--csv", append.csv, "CSV of new rows")->required()->check(CLI::ExistingFile);
  append_cmd->add_option("--synopsis", append.synopsis, "Synopsis file (default: <rel>/synopsis.jsonl)");
  append_cmd->add_option("--config", append.config, "Engine config JSON (sample_rate, seed)");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run a synthetic two-phase benchmark");
  bench_cmd->add_option("--config", bench.config, "Bench config JSON")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", bench.out, "Per-query CSV report; the summary goes next to it as .json")
      ->required();

  SynopsisArgs syn_args;
  auto* syn_cmd = app.add_subcommand("synopsis", "Inspect a synopsis file");
  syn_cmd->require_subcommand(1);
  auto* show_cmd = syn_cmd->add_subcommand("show", "Print one JSON line per entry");
  show_cmd->add_option("--synopsis", syn_args.path, "Synopsis file")->required();
  auto* stats_cmd = syn_cmd->add_subcommand("stats", "Print per-key counts and parameters");
  stats_cmd->add_option("--synopsis", syn_args.path, "Synopsis file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*load_cmd) return run_load(load);
    if (*sample_cmd) return run_sample(sample);
    if (*query_cmd) return run_query(query);
    if (*train_cmd) return run_train(train);
    if (*append_cmd) return run_append(append);
    if (*bench_cmd) return run_bench_cmd(bench);
    if (*show_cmd) return run_synopsis_show(syn_args);
    if (*stats_cmd) return run_synopsis_stats(syn_args);
  } catch (const aqpl::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const aqpl::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const aqpl::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const aqpl::DegenerateSystem& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
