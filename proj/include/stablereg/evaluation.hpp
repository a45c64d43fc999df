#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "stablereg/distribution.hpp"
#include "stablereg/dyadic.hpp"
#include "stablereg/errors.hpp"
#include "stablereg/estimator.hpp"
#include "stablereg/generators.hpp"
#include "stablereg/regression_model.hpp"

namespace stablereg {

/// Exact integral of (f - g)^2 d(mu) over the common refinement of the pieces of f, g and
/// the density segments of mu, plus the atom terms.
inline double l2_distance_exact(const RegressionModel& f, const RegressionModel& g, const DistributionModel& mu) {
  double total = 0.0;
  for (const auto& s : mu.segments()) {
    if (s.density <= 0.0) continue;
    std::vector<double> cuts{s.a, s.b};
    for (double t : f.breakpoints())
      if (t > s.a && t < s.b) cuts.push_back(t);
    for (double t : g.breakpoints())
      if (t > s.a && t < s.b) cuts.push_back(t);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double seg = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double l = cuts[i];
      const double r = cuts[i + 1];
      // f - g is linear on (l, r): integrate the square from its one-sided end values.
      const double p = f.right_limit(l) - g.right_limit(l);
      const double q = f.left_limit(r) - g.left_limit(r);
      seg += (r - l) * (p * p + p * q + q * q) / 3.0;
    }
    total += s.density * seg;
  }
  for (const auto& at : mu.atoms()) {
    const double d = f(at.location) - g(at.location);
    total += at.mass * d * d;
  }
  return total;
}

/// Exact L2(mu) error of a piecewise-dyadic estimate.
inline double l2_error_exact(const PiecewiseDyadicFn& est, const RegressionModel& m, const DistributionModel& mu) {
  return l2_distance_exact(RegressionModel::from_dyadic(est), m, mu);
}

struct QuadratureResult {
  double value = 0.0;    // at the requested number of cells
  double refined = 0.0;  // at twice as many cells
  bool converged = true;
};

using PointFunction = std::function<double(double)>;

namespace detail {

inline double midpoint_l2(const PointFunction& f, const PointFunction& g, const DistributionModel& mu, std::size_t cells) {
  double total = 0.0;
  for (const auto& s : mu.segments()) {
    if (s.density <= 0.0) continue;
    const double h = (s.b - s.a) / static_cast<double>(cells);
    CompensatedSum acc;
    for (std::size_t c = 0; c < cells; ++c) {
      const double x = s.a + (static_cast<double>(c) + 0.5) * h;
      const double d = f(x) - g(x);
      acc.add(d * d);
    }
    total += s.density * h * acc.value();
  }
  for (const auto& at : mu.atoms()) {
    const double d = f(at.location) - g(at.location);
    total += at.mass * d * d;
  }
  return total;
}

}  // namespace detail

/// Composite midpoint rule on each density segment (exact on atoms), cross-checked at
/// double resolution; disagreement beyond relative 1e-3 is reported, not thrown.
inline QuadratureResult l2_error_quadrature(const PointFunction& est, const PointFunction& m, const DistributionModel& mu,
                                            std::size_t cells = std::size_t{1} << 16) {
  if (cells < 1024 || (cells & (cells - 1)) != 0)
    throw PreconditionError("l2_error_quadrature: cells must be a power of two >= 2^10");
  QuadratureResult r;
  r.value = detail::midpoint_l2(est, m, mu, cells);
  r.refined = detail::midpoint_l2(est, m, mu, 2 * cells);
  r.converged = std::fabs(r.value - r.refined) <= 1e-3 * std::fabs(r.refined) + 1e-15;
  return r;
}

struct ErrorCurvePoint {
  std::size_t n = 0;
  std::size_t kappa = 0;
  double error = 0.0;
};

struct ErrorCurve {
  std::vector<ErrorCurvePoint> points;
  bool stalled = false;
  std::size_t stall_at = 0;  // samples consumed when the stall was detected
};

/// Powers of two up to n, followed by n itself.
inline std::vector<std::size_t> power_of_two_checkpoints(std::size_t n) {
  std::vector<std::size_t> out;
  for (std::size_t c = 1; c <= n; c *= 2) out.push_back(c);
  if (out.empty() || out.back() != n) out.push_back(n);
  return out;
}

/// Streams `pairs` through the estimator and records the exact L2(mu) error of the
/// fixed-sample estimate at every checkpoint. A stalled search truncates the curve.
inline ErrorCurve consistency_curve(std::span<const Observation> pairs, const VariationBudget& alpha, const RegressionModel& m,
                                    const DistributionModel& mu, std::span<const std::size_t> checkpoints,
                                    EstimatorOptions options = {}) {
  ErrorCurve curve;
  StreamingEstimator est(alpha, options);
  std::size_t next = 0;
  for (std::size_t i = 0; i < pairs.size() && next < checkpoints.size(); ++i) {
    est.ingest(pairs[i]);
    if (est.stalled()) {
      curve.stalled = true;
      curve.stall_at = est.consumed();
      break;
    }
    while (next < checkpoints.size() && checkpoints[next] == est.consumed()) {
      const std::size_t n = checkpoints[next++];
      curve.points.push_back({n, est.kappa(n), l2_error_exact(est.fixed_sample_estimate(n), m, mu)});
    }
  }
  return curve;
}

inline ErrorCurve consistency_curve(const GeneratorSpec& spec, const VariationBudget& alpha, std::span<const std::size_t> checkpoints,
                                    EstimatorOptions options = {}) {
  const auto g = generate(spec);
  return consistency_curve(g.sequence.pairs(), alpha, g.m, g.mu, checkpoints, options);
}

}  // namespace stablereg
