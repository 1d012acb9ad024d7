#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace aqpl {

enum class Role { Dimension, Measure };
enum class Kind { Numeric, Categorical };

struct Attribute {
  std::string name;
  Role role = Role::Dimension;
  Kind kind = Kind::Numeric;

  bool operator==(const Attribute&) const = default;
};

/// Ordered attribute list. Construction validates: unique names, at least one
/// dimension and one measure, and every measure is numeric.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<Attribute> attributes);

  /// Parses `[{"name":"day","role":"dimension","kind":"numeric"}, ...]`.
  static Schema from_json(std::string_view text);
  static Schema load(const std::filesystem::path& path);
  std::string to_json() const;

  const std::vector<Attribute>& attributes() const noexcept { return attributes_; }
  std::size_t size() const noexcept { return attributes_.size(); }
  const Attribute& operator[](std::size_t i) const { return attributes_[i]; }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws DataError for an unknown name.
  std::size_t index_of(std::string_view name) const;
  const Attribute& at(std::string_view name) const { return attributes_[index_of(name)]; }

  bool operator==(const Schema&) const = default;

 private:
  std::vector<Attribute> attributes_;
};

struct NumericDomain {
  std::string name;
  double min = 0.0;
  double max = 0.0;

  double extent() const noexcept { return max - min; }
  bool operator==(const NumericDomain&) const = default;
};

struct CategoricalDomain {
  std::string name;
  std::vector<std::string> values;  // sorted, unique

  bool contains(std::string_view v) const;
  bool operator==(const CategoricalDomain&) const = default;
};

/// Extents of the dimension attributes, in schema order.
struct AttributeCatalog {
  std::vector<NumericDomain> numeric;
  std::vector<CategoricalDomain> categorical;
  std::size_t cardinality = 0;

  const NumericDomain* find_numeric(std::string_view name) const;
  const CategoricalDomain* find_categorical(std::string_view name) const;

  std::string to_json() const;
  static AttributeCatalog from_json(std::string_view text);

  bool operator==(const AttributeCatalog&) const = default;
};

struct NumericColumn {
  std::vector<double> values;
};

struct CategoricalColumn {
  std::vector<std::uint32_t> codes;
  std::vector<std::string> dictionary;  // code -> value, insertion order

  std::string_view value(std::size_t row) const { return dictionary[codes[row]]; }
  std::optional<std::uint32_t> code_of(std::string_view v) const;
};

using Column = std::variant<NumericColumn, CategoricalColumn>;
using Value = std::variant<double, std::string>;

std::string value_to_string(const Value& v);

/// Columnar, immutable-after-build table. Appending produces a new version.
class Relation {
 public:
  Relation() = default;
  explicit Relation(Schema schema);

  const Schema& schema() const noexcept { return schema_; }
  std::size_t row_count() const noexcept { return rows_; }
  std::uint64_t version() const noexcept { return version_; }
  bool empty() const noexcept { return rows_ == 0; }

  const Column& column(std::size_t i) const { return columns_[i]; }
  const Column& column(std::string_view name) const { return columns_[schema_.index_of(name)]; }
  std::span<const double> numeric(std::string_view name) const;
  const CategoricalColumn& categorical(std::string_view name) const;

  /// Throws DataError("empty relation") when row_count() == 0.
  const AttributeCatalog& catalog() const;

  Value value(std::size_t row, std::size_t column) const;

  void add_row(std::span<const Value> values);
  /// Parses text cells per the schema; `line` is used in error messages.
  void add_text_row(std::span<const std::string> cells, std::size_t line);
  void set_version(std::uint64_t v) noexcept { version_ = v; }
  void reserve(std::size_t rows);

 private:
  void update_catalog(std::size_t row);
  void init_catalog();

  Schema schema_;
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
  std::uint64_t version_ = 1;
  AttributeCatalog catalog_;
};

struct AppendCounts {
  std::size_t old_rows = 0;  // |r|
  std::size_t new_rows = 0;  // |r^a|
};

struct AppendResult {
  Relation relation;
  AppendCounts counts;
};

AttributeCatalog catalog(const Relation& relation);

/// Reads a header-first CSV. Throws DataError on malformed rows (with line
/// number), header mismatch, non-finite numbers, and on an empty relation.
Relation load_csv(const std::filesystem::path& path, const Schema& schema);
/// Same as load_csv but an empty data section is allowed.
Relation read_csv(const std::filesystem::path& path, const Schema& schema);
void write_csv(const Relation& relation, const std::filesystem::path& path);

/// New version containing `relation` followed by `batch`. Zero rows returns an
/// identical relation (same version).
AppendResult append_rows(const Relation& relation, const Relation& batch);

}  // namespace aqpl
