#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "aqpl/relation.hpp"

namespace aqpl::testing {

inline Schema sales_schema() {
  return Schema({{"day", Role::Dimension, Kind::Numeric},
                 {"region", Role::Dimension, Kind::Categorical},
                 {"sales", Role::Measure, Kind::Numeric}});
}

// day, region, sales
inline Relation sales_table(const std::vector<std::tuple<double, std::string, double>>& rows) {
  Relation rel(sales_schema());
  for (const auto& [d, r, s] : rows) {
    const std::vector<Value> v{d, r, s};
    rel.add_row(v);
  }
  return rel;
}

inline Relation uniform_table(std::size_t rows, std::uint64_t seed) {
  Relation rel(sales_schema());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> day(0.0, 100.0), sales(0.0, 10.0);
  const char* regions[] = {"E", "W", "N"};
  for (std::size_t i = 0; i < rows; ++i) {
    const std::vector<Value> v{day(rng), std::string(regions[i % 3]), sales(rng)};
    rel.add_row(v);
  }
  return rel;
}

// Directory removed at scope exit.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("aqpl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path write(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::ofstream(p) << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace aqpl::testing
