#pragma once

#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <string>

#include "stablereg/errors.hpp"

namespace stablereg {

/// Largest |x * 2^k| accepted by cell arithmetic.
inline constexpr double kMaxScaledIndex = 0x1.0p62;

/// The dyadic cell ((j-1)/2^k, j/2^k]; resolution 0 is the whole line (j = 0).
struct DyadicCell {
  int k = 0;
  std::int64_t j = 0;

  bool whole_line() const noexcept { return k == 0; }
  double lower() const { return whole_line() ? -INFINITY : std::ldexp(static_cast<double>(j - 1), -k); }
  double upper() const { return whole_line() ? INFINITY : std::ldexp(static_cast<double>(j), -k); }

  /// Parent cell at resolution k - 1 (k >= 1).
  DyadicCell parent() const {
    if (k <= 1) return {0, 0};
    // A_{k,j} lies in A_{k-1,ceil(j/2)}.
    const std::int64_t q = j >= 0 ? (j + 1) / 2 : -((-j) / 2);
    return {k - 1, q};
  }

  friend bool operator==(const DyadicCell&, const DyadicCell&) = default;
};

/// Index of the resolution-k cell containing x. Exact: x * 2^k is computed by ldexp,
/// so points on a boundary land in the cell on their left (right-closed cells).
inline DyadicCell cell_of(double x, int k) {
  if (k < 0) throw PreconditionError("cell_of: negative resolution");
  if (k == 0) return {0, 0};
  if (!std::isfinite(x)) throw OverflowError("cell_of: non-finite coordinate");
  const double scaled = std::ldexp(x, k);
  if (!(std::fabs(scaled) <= kMaxScaledIndex))
    throw OverflowError("cell_of: |x| * 2^" + std::to_string(k) + " exceeds the 64-bit index range");
  return {k, static_cast<std::int64_t>(std::ceil(scaled))};
}

/// A function constant on the cells of pi_k, stored sparsely with a default value.
class PiecewiseDyadicFn {
 public:
  using CellMap = std::map<std::int64_t, double>;

  explicit PiecewiseDyadicFn(int k = 0, double default_value = 0.0) : k_(k), default_(default_value) {
    if (k < 0) throw PreconditionError("PiecewiseDyadicFn: negative resolution");
  }

  static PiecewiseDyadicFn constant(double c) {
    PiecewiseDyadicFn f(0, c);
    f.set(0, c);
    return f;
  }

  int resolution() const noexcept { return k_; }
  double default_value() const noexcept { return default_; }
  const CellMap& cells() const noexcept { return values_; }

  void set(std::int64_t j, double value) {
    if (k_ == 0 && j != 0) throw PreconditionError("PiecewiseDyadicFn: resolution 0 has the single cell j = 0");
    values_[j] = value;
  }

  double value(std::int64_t j) const {
    const auto it = values_.find(j);
    return it == values_.end() ? default_ : it->second;
  }

  double operator()(double x) const { return value(cell_of(x, k_).j); }

  friend bool operator==(const PiecewiseDyadicFn&, const PiecewiseDyadicFn&) = default;

 private:
  int k_;
  double default_;
  CellMap values_;
};

/// Sum of |f(A_j) - f(A_{j+1})| over adjacent pairs with lo <= j < hi.
inline double adjacent_variation(const PiecewiseDyadicFn& f, std::int64_t lo, std::int64_t hi) {
  if (hi <= lo) return 0.0;
  const double d = f.default_value();
  const auto& cells = f.cells();
  auto it = cells.lower_bound(lo);
  const auto end = cells.upper_bound(hi);

  double total = 0.0;
  std::int64_t prev_j = lo - 1;  // virtual position left of the window
  double prev_v = d;
  bool have_prev = false;
  for (; it != end; ++it) {
    const auto [j, v] = *it;
    if (!have_prev) {
      if (j > lo) total += std::fabs(d - v);  // run of default cells before j
    } else if (j == prev_j + 1) {
      total += std::fabs(prev_v - v);
    } else {
      total += std::fabs(prev_v - d) + std::fabs(d - v);
    }
    prev_j = j;
    prev_v = v;
    have_prev = true;
  }
  if (have_prev && prev_j < hi) total += std::fabs(prev_v - d);
  return total;
}

/// Total variation of f on the window (-i, i]. For a function constant on right-closed
/// cells this is the sum of jumps between adjacent cells inside the window; the jump at
/// -i is excluded (points must exceed -i) and no jump beyond i is seen.
inline double total_variation_window(const PiecewiseDyadicFn& f, std::int64_t i) {
  if (i < 1) throw PreconditionError("total_variation_window: window index must be >= 1");
  const int k = f.resolution();
  if (k == 0) return 0.0;
  if (k >= 62 || static_cast<double>(i) * std::ldexp(1.0, k) > kMaxScaledIndex)
    throw OverflowError("total_variation_window: window exceeds the 64-bit index range");
  const std::int64_t cells_per_unit = std::int64_t{1} << k;
  return adjacent_variation(f, 1 - i * cells_per_unit, i * cells_per_unit);
}

}  // namespace stablereg
