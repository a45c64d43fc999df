#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stablereg/distribution.hpp"
#include "stablereg/dyadic.hpp"
#include "stablereg/errors.hpp"
#include "stablereg/regression_model.hpp"

namespace stablereg {

/// Known non-decreasing bound alpha(i) on V(m : -i, i).
class VariationBudget {
 public:
  enum class Kind { constant, affine, table };

  /// alpha(i) = c.
  static VariationBudget constant(double c) { return VariationBudget(Kind::constant, {c}); }
  /// alpha(i) = 2 C i + epsilon (Lipschitz class with constant C).
  static VariationBudget affine(double lipschitz, double epsilon) { return VariationBudget(Kind::affine, {lipschitz, epsilon}); }
  /// alpha(i) = values[i-1]; the last entry extends to larger i.
  static VariationBudget table(std::vector<double> values) { return VariationBudget(Kind::table, std::move(values)); }

  Kind kind() const noexcept { return kind_; }
  const std::vector<double>& parameters() const noexcept { return params_; }

  double operator()(std::int64_t i) const {
    if (i < 1) throw PreconditionError("VariationBudget: argument must be a positive integer");
    switch (kind_) {
      case Kind::constant: return params_[0];
      case Kind::affine: return 2.0 * params_[0] * static_cast<double>(i) + params_[1];
      case Kind::table: return params_[std::min<std::size_t>(static_cast<std::size_t>(i), params_.size()) - 1];
    }
    return params_[0];
  }

  friend bool operator==(const VariationBudget&, const VariationBudget&) = default;

 private:
  VariationBudget(Kind kind, std::vector<double> params) : kind_(kind), params_(std::move(params)) {
    switch (kind_) {
      case Kind::constant:
        if (!(params_[0] > 0.0)) throw ModelError("VariationBudget: constant must be positive");
        break;
      case Kind::affine:
        if (!(params_[0] >= 0.0) || !(params_[1] > 0.0) || !std::isfinite(params_[0]) || !std::isfinite(params_[1]))
          throw ModelError("VariationBudget: affine budget needs C >= 0 and epsilon > 0");
        break;
      case Kind::table:
        if (params_.empty()) throw ModelError("VariationBudget: empty table");
        for (std::size_t i = 0; i < params_.size(); ++i) {
          if (!(params_[i] > 0.0)) throw ModelError("VariationBudget: table entries must be positive");
          if (i > 0 && params_[i] < params_[i - 1]) throw ModelError("VariationBudget: table must be non-decreasing");
        }
        break;
    }
  }

  Kind kind_;
  std::vector<double> params_;
};

/// V(m : -i, i) < alpha(i) for i = 1..max_window.
inline bool within_budget(const RegressionModel& m, const VariationBudget& alpha, std::int64_t max_window) {
  for (std::int64_t i = 1; i <= max_window; ++i)
    if (!(m.variation_window(i) < alpha(i))) return false;
  return true;
}

/// Indices of the resolution-k cells that meet the support of mu.
inline std::vector<std::int64_t> support_cells(const DistributionModel& mu, int k) {
  std::vector<std::int64_t> cells;
  for (const auto& at : mu.atoms()) cells.push_back(cell_of(at.location, k).j);
  for (const auto& s : mu.segments()) {
    if (s.density <= 0.0) continue;
    // Cells meeting (a, b]: from the cell right of a up to the cell of b.
    const DyadicCell left = cell_of(s.a, k);
    const std::int64_t first = left.upper() == s.a ? left.j + 1 : left.j;
    const std::int64_t last = cell_of(s.b, k).j;
    for (std::int64_t j = first; j <= last; ++j) cells.push_back(j);
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

/// The mu-conditional average of m on each cell of pi_k; cells of zero mass get 0.
inline PiecewiseDyadicFn average_over_partition(const RegressionModel& m, const DistributionModel& mu, int k) {
  const SignedMeasureModel nu(mu, m);
  if (k == 0) return PiecewiseDyadicFn::constant(nu.measure(Interval::left_unbounded(INFINITY)));
  PiecewiseDyadicFn out(k, 0.0);
  for (std::int64_t j : support_cells(mu, k)) {
    const DyadicCell cell{k, j};
    const auto A = Interval::bounded(cell.lower(), cell.upper());
    const double mass = mu.prob(A);
    if (mass > 0.0) out.set(j, nu.measure(A) / mass);
  }
  return out;
}

}  // namespace stablereg
