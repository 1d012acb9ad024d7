#pragma once

#include <stdexcept>
#include <string>

namespace aqpl {

/// Bad input data: malformed CSV, schema mismatch, empty selections.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lexical or syntactic SQL error. Distinct from an unsupported-but-valid query.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Covariance matrix could not be made invertible within the jitter budget.
class DegenerateSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Persisted file has an unknown version tag or a corrupt line.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aqpl
