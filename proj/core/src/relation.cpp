#include "aqpl/relation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "aqpl/error.hpp"

namespace aqpl {

using nlohmann::json;

namespace {

std::string_view role_name(Role r) { return r == Role::Dimension ? "dimension" : "measure"; }
std::string_view kind_name(Kind k) { return k == Kind::Numeric ? "numeric" : "categorical"; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_finite(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

Schema::Schema(std::vector<Attribute> attributes) : attributes_(std::move(attributes)) {
  std::set<std::string> seen;
  bool has_dim = false, has_measure = false;
  for (const auto& a : attributes_) {
    if (a.name.empty()) throw DataError("schema: empty attribute name");
    if (!seen.insert(a.name).second) throw DataError("schema: duplicate attribute '" + a.name + "'");
    if (a.role == Role::Dimension) has_dim = true;
    if (a.role == Role::Measure) {
      has_measure = true;
      if (a.kind != Kind::Numeric)
        throw DataError("schema: measure attribute '" + a.name + "' must be numeric");
    }
  }
  if (!has_dim) throw DataError("schema: at least one dimension attribute required");
  if (!has_measure) throw DataError("schema: at least one measure attribute required");
}

Schema Schema::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("schema: invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw DataError("schema: expected a JSON array");
  std::vector<Attribute> attrs;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("name") || !item.contains("role") || !item.contains("kind"))
      throw DataError("schema: each attribute needs name, role and kind");
    Attribute a;
    a.name = item.at("name").get<std::string>();
    const auto role = item.at("role").get<std::string>();
    const auto kind = item.at("kind").get<std::string>();
    if (role == "dimension") a.role = Role::Dimension;
    else if (role == "measure") a.role = Role::Measure;
    else throw DataError("schema: unknown role '" + role + "'");
    if (kind == "numeric") a.kind = Kind::Numeric;
    else if (kind == "categorical") a.kind = Kind::Categorical;
    else throw DataError("schema: unknown kind '" + kind + "'");
    attrs.push_back(std::move(a));
  }
  return Schema(std::move(attrs));
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string Schema::to_json() const {
  json doc = json::array();
  for (const auto& a : attributes_)
    doc.push_back({{"name", a.name}, {"role", role_name(a.role)}, {"kind", kind_name(a.kind)}});
  return doc.dump();
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i)
    if (attributes_[i].name == name) return i;
  return std::nullopt;
}

std::size_t Schema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw DataError("unknown attribute '" + std::string(name) + "'");
}

bool CategoricalDomain::contains(std::string_view v) const {
  return std::binary_search(values.begin(), values.end(), v);
}

const NumericDomain* AttributeCatalog::find_numeric(std::string_view name) const {
  for (const auto& d : numeric)
    if (d.name == name) return &d;
  return nullptr;
}

const CategoricalDomain* AttributeCatalog::find_categorical(std::string_view name) const {
  for (const auto& d : categorical)
    if (d.name == name) return &d;
  return nullptr;
}

std::string AttributeCatalog::to_json() const {
  json doc;
  doc["cardinality"] = cardinality;
  doc["numeric"] = json::array();
  for (const auto& d : numeric) doc["numeric"].push_back({{"name", d.name}, {"min", d.min}, {"max", d.max}});
  doc["categorical"] = json::array();
  for (const auto& d : categorical) doc["categorical"].push_back({{"name", d.name}, {"values", d.values}});
  return doc.dump();
}

AttributeCatalog AttributeCatalog::from_json(std::string_view text) {
  AttributeCatalog c;
  try {
    const json doc = json::parse(text);
    c.cardinality = doc.at("cardinality").get<std::size_t>();
    for (const auto& d : doc.at("numeric"))
      c.numeric.push_back({d.at("name").get<std::string>(), d.at("min").get<double>(), d.at("max").get<double>()});
    for (const auto& d : doc.at("categorical"))
      c.categorical.push_back({d.at("name").get<std::string>(), d.at("values").get<std::vector<std::string>>()});
  } catch (const json::exception& e) {
    throw FormatError(std::string("catalog: ") + e.what());
  }
  return c;
}

std::optional<std::uint32_t> CategoricalColumn::code_of(std::string_view v) const {
  for (std::size_t i = 0; i < dictionary.size(); ++i)
    if (dictionary[i] == v) return static_cast<std::uint32_t>(i);
  return std::nullopt;
}

std::string value_to_string(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, std::get<double>(v));
  return std::string(buf, ptr);
}

Relation::Relation(Schema schema) : schema_(std::move(schema)) {
  columns_.reserve(schema_.size());
  for (const auto& a : schema_.attributes()) {
    if (a.kind == Kind::Numeric) columns_.emplace_back(NumericColumn{});
    else columns_.emplace_back(CategoricalColumn{});
  }
  init_catalog();
}

void Relation::init_catalog() {
  catalog_ = {};
  for (const auto& a : schema_.attributes()) {
    if (a.role != Role::Dimension) continue;
    if (a.kind == Kind::Numeric) catalog_.numeric.push_back({a.name, 0.0, 0.0});
    else catalog_.categorical.push_back({a.name, {}});
  }
}

void Relation::reserve(std::size_t rows) {
  for (auto& c : columns_) {
    if (auto* n = std::get_if<NumericColumn>(&c)) n->values.reserve(rows);
    else std::get<CategoricalColumn>(c).codes.reserve(rows);
  }
}

std::span<const double> Relation::numeric(std::string_view name) const {
  const auto* col = std::get_if<NumericColumn>(&column(name));
  if (!col) throw DataError("attribute '" + std::string(name) + "' is not numeric");
  return col->values;
}

const CategoricalColumn& Relation::categorical(std::string_view name) const {
  const auto* col = std::get_if<CategoricalColumn>(&column(name));
  if (!col) throw DataError("attribute '" + std::string(name) + "' is not categorical");
  return *col;
}

const AttributeCatalog& Relation::catalog() const {
  if (rows_ == 0) throw DataError("empty relation");
  return catalog_;
}

Value Relation::value(std::size_t row, std::size_t column) const {
  if (const auto* n = std::get_if<NumericColumn>(&columns_[column])) return n->values[row];
  return std::string(std::get<CategoricalColumn>(columns_[column]).value(row));
}

void Relation::update_catalog(std::size_t row) {
  std::size_t ni = 0, ci = 0;
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    const auto& a = schema_[i];
    if (a.role != Role::Dimension) continue;
    if (a.kind == Kind::Numeric) {
      const double v = std::get<NumericColumn>(columns_[i]).values[row];
      auto& d = catalog_.numeric[ni++];
      if (rows_ == 1) {
        d.min = d.max = v;
      } else {
        d.min = std::min(d.min, v);
        d.max = std::max(d.max, v);
      }
    } else {
      const auto& col = std::get<CategoricalColumn>(columns_[i]);
      auto& d = catalog_.categorical[ci++];
      const auto v = col.value(row);
      auto it = std::lower_bound(d.values.begin(), d.values.end(), v);
      if (it == d.values.end() || *it != v) d.values.insert(it, std::string(v));
    }
  }
  catalog_.cardinality = rows_;
}

void Relation::add_row(std::span<const Value> values) {
  if (values.size() != schema_.size())
    throw DataError("row has " + std::to_string(values.size()) + " values, schema has " +
                    std::to_string(schema_.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const bool numeric = schema_[i].kind == Kind::Numeric;
    if (numeric != std::holds_alternative<double>(values[i]))
      throw DataError("value kind mismatch for attribute '" + schema_[i].name + "'");
    if (numeric && !std::isfinite(std::get<double>(values[i])))
      throw DataError("non-finite value for attribute '" + schema_[i].name + "'");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (auto* n = std::get_if<NumericColumn>(&columns_[i])) {
      n->values.push_back(std::get<double>(values[i]));
    } else {
      auto& col = std::get<CategoricalColumn>(columns_[i]);
      const auto& s = std::get<std::string>(values[i]);
      auto code = col.code_of(s);
      if (!code) {
        code = static_cast<std::uint32_t>(col.dictionary.size());
        col.dictionary.push_back(s);
      }
      col.codes.push_back(*code);
    }
  }
  ++rows_;
  update_catalog(rows_ - 1);
}

void Relation::add_text_row(std::span<const std::string> cells, std::size_t line) {
  if (cells.size() != schema_.size())
    throw DataError("malformed row at line " + std::to_string(line) + ": expected " +
                    std::to_string(schema_.size()) + " fields, got " + std::to_string(cells.size()));
  std::vector<Value> values;
  values.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (schema_[i].kind == Kind::Numeric) {
      auto v = parse_finite(cells[i]);
      if (!v)
        throw DataError("line " + std::to_string(line) + " (row " + std::to_string(rows_ + 1) +
                        "): attribute '" + schema_[i].name + "' is not a finite number: '" +
                        cells[i] + "'");
      values.emplace_back(*v);
    } else {
      values.emplace_back(cells[i]);
    }
  }
  add_row(values);
}

AttributeCatalog catalog(const Relation& relation) { return relation.catalog(); }

AppendResult append_rows(const Relation& relation, const Relation& batch) {
  if (!(batch.schema() == relation.schema())) throw DataError("append: schema mismatch");
  AppendResult out{relation, {relation.row_count(), batch.row_count()}};
  if (batch.row_count() == 0) return out;
  out.relation.reserve(relation.row_count() + batch.row_count());
  std::vector<Value> row(batch.schema().size());
  for (std::size_t r = 0; r < batch.row_count(); ++r) {
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = batch.value(r, c);
    out.relation.add_row(row);
  }
  out.relation.set_version(relation.version() + 1);
  return out;
}

}  // namespace aqpl
