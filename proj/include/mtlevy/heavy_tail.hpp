#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mtlevy/io.hpp"
#include "mtlevy/rng.hpp"

namespace mtlevy {

// Type-II Pareto (Lomax) distribution on [0, inf) with shape alpha and scale
// lambda. Smaller alpha means a heavier tail; used here both as a step-length
// law for random walks and as the exploration-duration law of the behavior
// controller (where lambda is measured in timesteps).
struct ParetoII {
  double alpha;
  double lambda;

  ParetoII(double alpha_in, double lambda_in)
      : alpha(alpha_in), lambda(lambda_in) {
    if (!(alpha > 0.0) || !(lambda > 0.0))
      throw std::invalid_argument(
          "ParetoII: alpha and lambda must be positive");
  }
};

// Density (alpha/lambda) * (1 + x/lambda)^-(alpha+1). x = 0 is admitted and
// evaluates to the boundary value alpha/lambda.
inline double pareto_pdf(double x, const ParetoII& d) {
  if (!(x >= 0.0)) throw std::domain_error("pareto_pdf: x must be >= 0");
  return d.alpha / d.lambda * std::pow(1.0 + x / d.lambda, -(d.alpha + 1.0));
}

// 1 - (1 + x/lambda)^-alpha; monotone nondecreasing, values in [0, 1).
inline double pareto_cdf(double x, const ParetoII& d) {
  if (!(x >= 0.0)) throw std::domain_error("pareto_cdf: x must be >= 0");
  return 1.0 - std::pow(1.0 + x / d.lambda, -d.alpha);
}

// Inverse-CDF transform lambda * ((1-u)^(-1/alpha) - 1) of a single uniform
// variate; deterministic given u.
inline double pareto_sample(const ParetoII& d, double u) {
  if (!(u >= 0.0) || !(u < 1.0))
    throw std::domain_error("pareto_sample: u must be in [0,1)");
  return d.lambda * (std::pow(1.0 - u, -1.0 / d.alpha) - 1.0);
}

// Step-length law for 2D random walks. Cauchy/Gaussian lengths are folded to
// absolute value so every length is >= 0; the direction carries the sign.
struct StepDistribution {
  enum class Kind { kParetoII, kUnitCauchy, kUnitGaussian, kConstant };

  Kind kind = Kind::kConstant;
  ParetoII pareto{1.0, 1.0};
  double length = 1.0;

  static StepDistribution pareto_ii(double alpha, double lambda = 1.0) {
    StepDistribution d;
    d.kind = Kind::kParetoII;
    d.pareto = ParetoII(alpha, lambda);
    return d;
  }
  static StepDistribution unit_cauchy() {
    StepDistribution d;
    d.kind = Kind::kUnitCauchy;
    return d;
  }
  static StepDistribution unit_gaussian() {
    StepDistribution d;
    d.kind = Kind::kUnitGaussian;
    return d;
  }
  static StepDistribution constant(double len) {
    if (!(len >= 0.0))
      throw std::invalid_argument("StepDistribution: length must be >= 0");
    StepDistribution d;
    d.kind = Kind::kConstant;
    d.length = len;
    return d;
  }
};

struct Point2D {
  double x = 0.0;
  double y = 0.0;
};

// Planar walk; points[0] is always the origin and length(points) = steps + 1.
struct Walk2D {
  std::vector<Point2D> points;
};

inline double sample_step_length(const StepDistribution& d,
                                 VariateSource& vars) {
  switch (d.kind) {
    case StepDistribution::Kind::kParetoII:
      return pareto_sample(d.pareto, vars.next());
    case StepDistribution::Kind::kUnitCauchy:
      return std::abs(standard_cauchy(vars));
    case StepDistribution::Kind::kUnitGaussian:
      return std::abs(standard_gaussian(vars));
    case StepDistribution::Kind::kConstant:
      return d.length;
  }
  throw std::logic_error("sample_step_length: unknown kind");
}

// Walk of n_steps increments. Per step the direction theta ~ U[0, 2pi) is
// drawn first, then the length; bit-identical for a fixed seed.
inline Walk2D random_walk(const StepDistribution& dist, int n_steps,
                          std::uint64_t seed) {
  if (n_steps < 0)
    throw std::invalid_argument("random_walk: n_steps must be >= 0");
  UniformSource vars(seed);
  Walk2D walk;
  walk.points.reserve(static_cast<std::size_t>(n_steps) + 1);
  walk.points.push_back({0.0, 0.0});
  for (int k = 0; k < n_steps; ++k) {
    const double theta = 2.0 * std::numbers::pi * vars.next();
    const double len = sample_step_length(dist, vars);
    const Point2D& p = walk.points.back();
    walk.points.push_back(
        {p.x + len * std::cos(theta), p.y + len * std::sin(theta)});
  }
  return walk;
}

// Number of distinct grid cells (floor(x/cell), floor(y/cell)) touched by the
// walk's points.
inline long long coverage_cells(const Walk2D& walk, double cell_size) {
  if (!(cell_size > 0.0))
    throw std::domain_error("coverage_cells: cell_size must be > 0");
  struct CellHash {
    std::size_t operator()(const std::pair<long long, long long>& c) const
        noexcept {
      return static_cast<std::size_t>(splitmix64(
          static_cast<std::uint64_t>(c.first) * 0x9E3779B97F4A7C15ull ^
          static_cast<std::uint64_t>(c.second)));
    }
  };
  std::unordered_set<std::pair<long long, long long>, CellHash> cells;
  cells.reserve(walk.points.size());
  for (const Point2D& p : walk.points) {
    cells.insert({static_cast<long long>(std::floor(p.x / cell_size)),
                  static_cast<long long>(std::floor(p.y / cell_size))});
  }
  return static_cast<long long>(cells.size());
}

inline void write_walk_csv(const Walk2D& walk, std::ostream& out) {
  out << "step,x,y\n";
  for (std::size_t i = 0; i < walk.points.size(); ++i) {
    out << i << ',' << format_double(walk.points[i].x) << ','
        << format_double(walk.points[i].y) << '\n';
  }
}

inline void write_walk_csv(const Walk2D& walk,
                           const std::filesystem::path& path) {
  std::ostringstream ss;
  write_walk_csv(walk, ss);
  write_text_atomic(path, ss.str());
}

}  // namespace mtlevy
