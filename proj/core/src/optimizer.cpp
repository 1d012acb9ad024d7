#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "aqpl/learner.hpp"

namespace aqpl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Vertex {
  std::vector<double> x;
  double f = kInf;  // minimized: negated objective
};

}  // namespace

OptimizerResult maximize(const Objective& objective, std::span<const double> start,
                         const OptimizerConfig& config) {
  OptimizerResult out;
  const std::size_t dim = start.size();
  auto eval = [&](const std::vector<double>& x) {
    ++out.evaluations;
    const double v = objective(x);
    return std::isfinite(v) ? -v : kInf;
  };

  std::vector<double> x0(start.begin(), start.end());
  const double v0 = objective(x0);
  ++out.evaluations;
  if (std::isnan(v0)) throw std::invalid_argument("objective is NaN at the starting point");
  if (dim == 0) {
    out.x = x0;
    out.value = v0;
    out.converged = true;
    return out;
  }

  std::vector<Vertex> simplex(dim + 1);
  simplex[0] = {x0, std::isfinite(v0) ? -v0 : kInf};
  for (std::size_t i = 0; i < dim; ++i) {
    simplex[i + 1].x = x0;
    simplex[i + 1].x[i] += config.initial_step;
    simplex[i + 1].f = eval(simplex[i + 1].x);
  }

  auto blend = [&](const std::vector<double>& a, const std::vector<double>& b, double t) {
    std::vector<double> r(dim);
    for (std::size_t k = 0; k < dim; ++k) r[k] = a[k] + t * (b[k] - a[k]);
    return r;
  };

  for (out.iterations = 0; out.iterations < config.max_iterations; ++out.iterations) {
    std::sort(simplex.begin(), simplex.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    const Vertex& best = simplex.front();
    const Vertex& worst = simplex.back();

    double step = 0.0;
    for (std::size_t i = 1; i <= dim; ++i)
      for (std::size_t k = 0; k < dim; ++k)
        step = std::max(step, std::abs(simplex[i].x[k] - best.x[k]) / std::max(1.0, std::abs(best.x[k])));
    const double spread = std::abs(worst.f - best.f) / std::max(1.0, std::abs(best.f));
    if (std::isfinite(worst.f) && step <= config.tolerance && spread <= config.tolerance) {
      out.converged = true;
      break;
    }

    std::vector<double> centroid(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t k = 0; k < dim; ++k) centroid[k] += simplex[i].x[k] / static_cast<double>(dim);

    Vertex reflected{blend(centroid, worst.x, -1.0)};
    reflected.f = eval(reflected.x);
    if (reflected.f < best.f) {
      Vertex expanded{blend(centroid, worst.x, -2.0)};
      expanded.f = eval(expanded.x);
      simplex.back() = expanded.f < reflected.f ? std::move(expanded) : std::move(reflected);
      continue;
    }
    if (reflected.f < simplex[dim - 1].f) {
      simplex.back() = std::move(reflected);
      continue;
    }
    const bool outside = reflected.f < worst.f;
    Vertex contracted{outside ? blend(centroid, reflected.x, 0.5) : blend(centroid, worst.x, 0.5)};
    contracted.f = eval(contracted.x);
    if (contracted.f < (outside ? reflected.f : worst.f)) {
      simplex.back() = std::move(contracted);
      continue;
    }
    for (std::size_t i = 1; i <= dim; ++i) {
      simplex[i].x = blend(simplex[0].x, simplex[i].x, 0.5);
      simplex[i].f = eval(simplex[i].x);
    }
  }

  const auto best = std::min_element(simplex.begin(), simplex.end(),
                                     [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
  out.x = best->x;
  out.value = std::isfinite(best->f) ? -best->f : -kInf;
  return out;
}

OptimizerResult maximize_multistart(const Objective& objective,
                                    std::span<const std::vector<double>> starts,
                                    const OptimizerConfig& config) {
  if (starts.empty()) throw std::invalid_argument("maximize_multistart needs a start");
  OptimizerResult best;
  bool have = false;
  for (const auto& s : starts) {
    auto r = maximize(objective, s, config);
    if (!have || r.value > best.value) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

}  // namespace aqpl
