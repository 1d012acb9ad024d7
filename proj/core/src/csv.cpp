#include <charconv>
#include <fstream>
#include <string>
#include <vector>

#include "aqpl/error.hpp"
#include "aqpl/relation.hpp"

namespace aqpl {

namespace {

// Splits one CSV record. Double quotes delimit fields that may contain commas;
// a doubled quote inside a quoted field is a literal quote.
std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      if (!cur.empty()) throw DataError("malformed row at line " + std::to_string(line_no) + ": stray quote");
      quoted = was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else if (ch != '\r') {
      if (was_quoted) throw DataError("malformed row at line " + std::to_string(line_no) + ": text after closing quote");
      cur.push_back(ch);
    }
  }
  if (quoted) throw DataError("malformed row at line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out += '"';
  return out;
}

}  // namespace

Relation read_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header");
  const auto header = split_record(line, 1);
  if (header.size() != schema.size())
    throw DataError("header/schema mismatch: header has " + std::to_string(header.size()) +
                    " columns, schema has " + std::to_string(schema.size()));
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] != schema[i].name)
      throw DataError("header/schema mismatch at column " + std::to_string(i + 1) + ": '" +
                      header[i] + "' vs '" + schema[i].name + "'");

  Relation rel(schema);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    rel.add_text_row(split_record(line, line_no), line_no);
  }
  return rel;
}

Relation load_csv(const std::filesystem::path& path, const Schema& schema) {
  Relation rel = read_csv(path, schema);
  if (rel.empty()) throw DataError("empty relation");
  return rel;
}

void write_csv(const Relation& relation, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const auto& schema = relation.schema();
  for (std::size_t i = 0; i < schema.size(); ++i) out << (i ? "," : "") << quote_if_needed(schema[i].name);
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < relation.row_count(); ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (c) out << ',';
      if (const auto* n = std::get_if<NumericColumn>(&relation.column(c))) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, n->values[r]);
        out.write(buf, ptr - buf);
      } else {
        out << quote_if_needed(std::string(std::get<CategoricalColumn>(relation.column(c)).value(r)));
      }
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace aqpl
