#pragma once

#include <cstdint>

#include "aqpl/query.hpp"

namespace aqpl {

/// One past snippet with its raw answer and error.
struct SynopsisEntry {
  std::uint64_t id = 0;
  QuerySnippet snippet;
  double theta = 0.0;
  double beta = 0.0;
  std::uint64_t last_used = 0;
  std::uint64_t data_version = 0;

  bool operator==(const SynopsisEntry&) const = default;
};

}  // namespace aqpl
