#include "aqpl/synopsis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "aqpl/error.hpp"

namespace aqpl {

using json = nlohmann::json;

namespace {

// Inverses above this size are recomputed on load instead of stored.
constexpr std::size_t kStoredInverseLimit = 400;

json bound_to_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double bound_from_json(const json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

json expr_to_json(const Expr& e) {
  switch (e.op) {
    case Expr::Op::Attr: return {{"attr", e.name}};
    case Expr::Op::Const: return {{"const", e.value}};
    case Expr::Op::Add: return {{"op", "+"}, {"args", {expr_to_json(e.args[0]), expr_to_json(e.args[1])}}};
    case Expr::Op::Sub: return {{"op", "-"}, {"args", {expr_to_json(e.args[0]), expr_to_json(e.args[1])}}};
    case Expr::Op::Mul: return {{"op", "*"}, {"args", {expr_to_json(e.args[0]), expr_to_json(e.args[1])}}};
  }
  return nullptr;
}

Expr expr_from_json(const json& j) {
  if (j.contains("attr")) return Expr::attr(j.at("attr").get<std::string>());
  if (j.contains("const")) return Expr::constant(j.at("const").get<double>());
  const auto op = j.at("op").get<std::string>();
  const auto& args = j.at("args");
  if (args.size() != 2) throw FormatError("expression needs two operands");
  const Expr::Op o = op == "+" ? Expr::Op::Add : op == "-" ? Expr::Op::Sub : op == "*" ? Expr::Op::Mul
                                                                                      : throw FormatError("bad operator " + op);
  return Expr::binary(o, expr_from_json(args[0]), expr_from_json(args[1]));
}

json snippet_to_json(const QuerySnippet& s) {
  json j;
  j["agg"] = s.agg == SnippetAgg::Freq ? "FREQ" : "AVG";
  if (s.measure) j["measure"] = expr_to_json(*s.measure);
  json ranges = json::object();
  for (const auto& [a, r] : s.predicate.ranges)
    ranges[a] = {bound_to_json(r.lo), bound_to_json(r.hi), r.lo_open, r.hi_open};
  j["ranges"] = std::move(ranges);
  j["in"] = s.predicate.in_lists;
  return j;
}

QuerySnippet snippet_from_json(const json& j) {
  QuerySnippet s;
  const auto agg = j.at("agg").get<std::string>();
  if (agg == "FREQ") s.agg = SnippetAgg::Freq;
  else if (agg == "AVG") s.agg = SnippetAgg::Avg;
  else throw FormatError("unknown aggregate " + agg);
  if (j.contains("measure")) s.measure = expr_from_json(j.at("measure"));
  if ((s.agg == SnippetAgg::Avg) != s.measure.has_value()) throw FormatError("measure does not match aggregate");
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (const auto& [a, r] : j.at("ranges").items())
    s.predicate.ranges[a] = Range{bound_from_json(r.at(0), -inf), bound_from_json(r.at(1), inf),
                                  r.at(2).get<bool>(), r.at(3).get<bool>()};
  for (const auto& [a, v] : j.at("in").items())
    s.predicate.add_in_list(a, v.get<std::vector<std::string>>());
  return s;
}

json params_to_json(const CorrelationParams& p) {
  return {{"key", p.key}, {"agg", p.agg == SnippetAgg::Freq ? "FREQ" : "AVG"}, {"lengths", p.lengths},
          {"sigma2", p.sigma2}, {"mu", p.mu}};
}

CorrelationParams params_from_json(const json& j) {
  CorrelationParams p;
  p.key = j.at("key").get<std::string>();
  p.agg = j.at("agg").get<std::string>() == "FREQ" ? SnippetAgg::Freq : SnippetAgg::Avg;
  p.lengths = j.at("lengths").get<std::map<std::string, double>>();
  p.sigma2 = j.at("sigma2").get<double>();
  p.mu = j.at("mu").get<double>();
  return p;
}

}  // namespace

std::size_t Synopsis::size() const {
  std::size_t n = 0;
  for (const auto& [k, v] : entries_) n += v.size();
  return n;
}

std::size_t Synopsis::size(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.size();
}

std::vector<std::string> Synopsis::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (!v.empty()) out.push_back(k);
  return out;
}

std::uint64_t Synopsis::insert(SynopsisEntry entry) {
  entry.id = next_id_++;
  entry.last_used = ++clock_;
  auto& list = entries_[entry.snippet.key()];
  list.push_back(std::move(entry));
  if (list.size() > cap_) {
    auto victim = std::min_element(list.begin(), list.end(), [](const SynopsisEntry& a, const SynopsisEntry& b) {
      return a.last_used < b.last_used;
    });
    list.erase(victim);
  }
  return next_id_ - 1;
}

std::span<const SynopsisEntry> Synopsis::entries_for(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return {};
  return it->second;
}

std::vector<SynopsisEntry>& Synopsis::mutable_entries(const std::string& key) { return entries_[key]; }

void Synopsis::touch(const std::string& key, std::span<const std::uint64_t> ids) {
  auto it = entries_.find(key);
  if (it == entries_.end() || ids.empty()) return;
  const std::set<std::uint64_t> wanted(ids.begin(), ids.end());
  const std::uint64_t now = ++clock_;
  for (auto& e : it->second)
    if (wanted.count(e.id)) e.last_used = now;
}

std::size_t Synopsis::remove_if(const std::string& key, const std::function<bool(const SynopsisEntry&)>& pred) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return 0;
  return std::erase_if(it->second, pred);
}

const Synopsis::Model* Synopsis::model(const std::string& key) const {
  auto it = models_.find(key);
  return it == models_.end() ? nullptr : &it->second;
}

void Synopsis::set_model(const std::string& key, Model m) { models_[key] = std::move(m); }

void Synopsis::clear_model_systems() {
  for (auto& [k, m] : models_) m.system.reset();
}

void Synopsis::save(const std::filesystem::path& path) const {
  json header;
  header["format"] = kFormatVersion;
  header["cap"] = cap_;
  header["clock"] = clock_;
  header["next_id"] = next_id_;
  header["catalog"] = catalog_ ? json::parse(catalog_->to_json()) : json(nullptr);
  json models = json::array();
  for (const auto& [key, m] : models_) {
    json jm{{"params", params_to_json(m.params)}};
    if (m.system) {
      std::vector<std::uint64_t> ids;
      for (const auto& e : m.system->entries()) ids.push_back(e.id);
      jm["entry_ids"] = ids;
      jm["jitter"] = m.system->jitter();
      if (m.system->size() <= kStoredInverseLimit) {
        const auto& inv = m.system->sigma_n_inv();
        jm["sigma_inv"] = std::vector<double>(inv.data(), inv.data() + inv.size());
      }
    }
    models.push_back(std::move(jm));
  }
  header["models"] = std::move(models);
  json appends = json::array();
  for (const auto& a : appends_) {
    json shifts = json::object();
    for (const auto& [k, s] : a.shifts) shifts[k] = {s.first, s.second};
    appends.push_back({{"from", a.from_version}, {"to", a.to_version}, {"old_rows", a.old_rows},
                       {"new_rows", a.new_rows}, {"shifts", shifts}, {"evicted_freq", a.evicted_freq}});
  }
  header["appends"] = std::move(appends);

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << header.dump() << '\n';
  for (const auto& [key, list] : entries_) {
    for (const auto& e : list) {
      json j{{"g", key}, {"id", e.id}, {"snippet", snippet_to_json(e.snippet)}, {"theta", e.theta},
             {"beta", e.beta}, {"ts", e.last_used}, {"ver", e.data_version}};
      out << j.dump() << '\n';
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Synopsis Synopsis::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> FormatError {
    return FormatError(path.string() + ": line " + std::to_string(line_no) + ": " + what);
  };

  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty synopsis file");
  ++line_no;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
  if (!header.is_object() || !header.contains("format")) throw fail("missing format version");
  if (header["format"] != kFormatVersion)
    throw fail("unsupported format version " + header["format"].dump() + " (expected " +
               std::to_string(kFormatVersion) + ")");

  Synopsis s;
  json models;
  try {
    s.cap_ = header.at("cap").get<std::size_t>();
    s.clock_ = header.at("clock").get<std::uint64_t>();
    s.next_id_ = header.at("next_id").get<std::uint64_t>();
    if (!header.at("catalog").is_null()) s.catalog_ = AttributeCatalog::from_json(header["catalog"].dump());
    for (const auto& a : header.at("appends")) {
      AppendEvent ev;
      ev.from_version = a.at("from").get<std::uint64_t>();
      ev.to_version = a.at("to").get<std::uint64_t>();
      ev.old_rows = a.at("old_rows").get<std::size_t>();
      ev.new_rows = a.at("new_rows").get<std::size_t>();
      for (const auto& [k, v] : a.at("shifts").items()) ev.shifts[k] = {v.at(0).get<double>(), v.at(1).get<double>()};
      ev.evicted_freq = a.at("evicted_freq").get<std::size_t>();
      s.appends_.push_back(std::move(ev));
    }
    models = header.at("models");
  } catch (const json::exception& e) {
    throw fail(e.what());
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      SynopsisEntry e;
      e.id = j.at("id").get<std::uint64_t>();
      e.snippet = snippet_from_json(j.at("snippet"));
      e.theta = j.at("theta").get<double>();
      e.beta = j.at("beta").get<double>();
      e.last_used = j.at("ts").get<std::uint64_t>();
      e.data_version = j.at("ver").get<std::uint64_t>();
      const auto key = j.at("g").get<std::string>();
      if (key != e.snippet.key()) throw FormatError("key '" + key + "' does not match snippet");
      if (!std::isfinite(e.theta) || !(e.beta >= 0.0)) throw FormatError("bad answer values");
      s.entries_[key].push_back(std::move(e));
    } catch (const json::exception& e) {
      throw fail(e.what());
    } catch (const FormatError& e) {
      throw fail(e.what());
    }
  }

  try {
    for (const auto& jm : models) {
      Model m;
      m.params = params_from_json(jm.at("params"));
      if (jm.contains("entry_ids") && s.catalog_) {
        const auto ids = jm["entry_ids"].get<std::vector<std::uint64_t>>();
        std::vector<SynopsisEntry> picked;
        const auto list = s.entries_for(m.params.key);
        for (auto id : ids) {
          auto it = std::find_if(list.begin(), list.end(), [&](const SynopsisEntry& e) { return e.id == id; });
          if (it == list.end()) break;
          picked.push_back(*it);
        }
        if (picked.size() == ids.size() && !picked.empty()) {
          if (jm.contains("sigma_inv")) {
            const auto flat = jm["sigma_inv"].get<std::vector<double>>();
            const auto n = static_cast<Eigen::Index>(picked.size());
            if (flat.size() != static_cast<std::size_t>(n * n)) throw FormatError("inverse has the wrong size");
            m.system = TrainedSystem::restore(std::move(picked), m.params, *s.catalog_,
                                              Eigen::Map<const Eigen::MatrixXd>(flat.data(), n, n),
                                              jm.at("jitter").get<double>());
          } else {
            m.system = TrainedSystem::restore(std::move(picked), m.params, *s.catalog_, Eigen::MatrixXd(),
                                              jm.at("jitter").get<double>());
          }
        }
      }
      s.models_[m.params.key] = std::move(m);
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": models: " + e.what());
  }
  return s;
}

}  // namespace aqpl
