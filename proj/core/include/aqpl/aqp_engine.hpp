#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "aqpl/query.hpp"
#include "aqpl/relation.hpp"

namespace aqpl {

/// Uniform random sample of row indices, drawn without replacement.
struct Sample {
  std::uint64_t parent_version = 0;
  double rate = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> rows;  // sorted
  /// Set on the final online-aggregation step: answers are exact (beta = 0).
  bool exhaustive = false;
};

/// theta with one-standard-deviation error beta over `matched` rows.
struct RawAnswer {
  double theta = 0.0;
  double beta = 0.0;
  std::size_t matched = 0;
};

/// Throws DataError unless 0 < rate <= 1. Same (relation, rate, seed) gives
/// the same indices.
Sample build_sample(const Relation& relation, double rate, std::uint64_t seed);

/// Row-wise evaluator for a conjunctive predicate bound to one relation.
class RowMatcher {
 public:
  RowMatcher(const Relation& relation, const Predicate& predicate);
  bool operator()(std::size_t row) const;

 private:
  struct NumericTest {
    std::span<const double> column;
    Range range;
  };
  struct CategoricalTest {
    const CategoricalColumn* column = nullptr;
    std::vector<bool> allowed;  // by dictionary code
  };
  std::vector<NumericTest> numeric_;
  std::vector<CategoricalTest> categorical_;
  bool never_ = false;
};

/// Evaluates a measure expression against rows of one relation.
class BoundExpr {
 public:
  BoundExpr(const Relation& relation, const Expr& expr);
  double operator()(std::size_t row) const;

 private:
  struct Node {
    Expr::Op op;
    double value = 0.0;
    std::span<const double> column;
    int lhs = -1;
    int rhs = -1;
  };
  int build(const Relation& relation, const Expr& expr);
  double eval(int node, std::size_t row) const;

  std::vector<Node> nodes_;
  int root_ = -1;
};

/// CLT estimate over the sample. AVG: mean and stddev/sqrt(m); FREQ: matched
/// fraction and sqrt(p(1-p)/n). Throws DataError("empty selection") for AVG
/// with m <= 1.
RawAnswer estimate_snippet(const Relation& relation, const Sample& sample,
                           const QuerySnippet& snippet);

/// Full scan, beta = 0. Throws DataError for AVG over an empty selection.
RawAnswer exact_snippet(const Relation& relation, const QuerySnippet& snippet);

/// Distinct group-by tuples among sample rows matching the predicate, in
/// first-seen order.
std::vector<GroupKey> sample_groups(const Relation& relation, const Sample& sample,
                                    const Predicate& predicate,
                                    std::span<const std::string> groupby);

/// Raw answers for queries outside the supported class (OR, NOT, LIKE, ...).
struct GeneralRow {
  GroupKey group;
  std::vector<std::optional<RawAnswer>> aggregates;  // per AggregateSpec, composed
};
std::vector<GeneralRow> estimate_general(const Relation& relation, const Sample& sample,
                                         const GeneralQuery& query);

/// Growing prefixes of a seeded random permutation of all rows.
class OnlineStream {
 public:
  OnlineStream(const Relation& relation, std::size_t batch_size, std::uint64_t seed);

  bool done() const noexcept { return consumed_ >= permutation_.size(); }
  /// Next prefix sample; the last one covers every row and is exhaustive.
  Sample next();
  std::size_t emissions() const noexcept;

 private:
  std::vector<std::size_t> permutation_;
  std::size_t batch_size_;
  std::size_t consumed_ = 0;
  std::uint64_t version_;
  std::uint64_t seed_;
};

/// k-th answer uses the first k*batch_size permuted rows; the final answer
/// equals exact_snippet. Throws DataError if batch_size == 0.
std::vector<RawAnswer> online_aggregate(const Relation& relation, const QuerySnippet& snippet,
                                        std::size_t batch_size, std::uint64_t seed);

}  // namespace aqpl
