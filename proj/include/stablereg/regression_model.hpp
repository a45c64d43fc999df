#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stablereg/dyadic.hpp"
#include "stablereg/errors.hpp"

namespace stablereg {

enum class RegressionKind { constant, piecewise_linear, dyadic, monotone, lipschitz, rademacher };

inline std::string_view to_string(RegressionKind kind) {
  switch (kind) {
    case RegressionKind::constant: return "constant";
    case RegressionKind::piecewise_linear: return "piecewise_linear";
    case RegressionKind::dyadic: return "dyadic";
    case RegressionKind::monotone: return "monotone";
    case RegressionKind::lipschitz: return "lipschitz";
    case RegressionKind::rademacher: return "rademacher";
  }
  return "unknown";
}

/// Knot of a piecewise-linear function: the value at x is `left` (right-closed
/// convention); the function leaves x from `right`. Continuous knots have left == right.
struct Knot {
  double x;
  double left;
  double right;
};

/// A bounded function that is linear on each open interval between finitely many
/// breakpoints, with an explicit value at every breakpoint. This covers every regression
/// function used here: dyadic step functions, Rademacher functions (left-closed steps),
/// and monotone or Lipschitz piecewise-linear functions. Everything needed downstream
/// (evaluation, exact variation, exact integrals against piecewise-constant densities)
/// is closed-form.
class RegressionModel {
 public:
  /// Limits of the linear piece on (breaks[i-1], breaks[i]).
  struct Piece {
    double lo;  // -inf for the first piece
    double hi;  // +inf for the last piece
    double at_lo;
    double at_hi;

    double slope() const { return std::isfinite(lo) && std::isfinite(hi) ? (at_hi - at_lo) / (hi - lo) : 0.0; }
    double eval(double x) const {
      if (!std::isfinite(lo) || !std::isfinite(hi)) return at_lo;
      return at_lo + (x - lo) * ((at_hi - at_lo) / (hi - lo));
    }
  };

  static RegressionModel constant(double c) { return RegressionModel(RegressionKind::constant, {}, {}, {{-INFINITY, INFINITY, c, c}}); }

  /// Right-closed piecewise-linear function through the knots, constant outside them.
  static RegressionModel from_knots(std::span<const Knot> knots, RegressionKind kind = RegressionKind::piecewise_linear) {
    if (knots.empty()) throw ModelError("RegressionModel: at least one knot required");
    std::vector<double> breaks;
    std::vector<double> at;
    std::vector<Piece> pieces;
    pieces.push_back({-INFINITY, knots.front().x, knots.front().left, knots.front().left});
    for (std::size_t i = 0; i < knots.size(); ++i) {
      if (i > 0 && !(knots[i].x > knots[i - 1].x)) throw ModelError("RegressionModel: knots must be strictly increasing");
      breaks.push_back(knots[i].x);
      at.push_back(knots[i].left);
      if (i + 1 < knots.size()) pieces.push_back({knots[i].x, knots[i + 1].x, knots[i].right, knots[i + 1].left});
    }
    pieces.push_back({knots.back().x, INFINITY, knots.back().right, knots.back().right});
    return RegressionModel(kind, std::move(breaks), std::move(at), std::move(pieces));
  }

  /// Continuous piecewise-linear function through (x, v) points.
  static RegressionModel linear_interpolant(std::span<const std::pair<double, double>> points,
                                            RegressionKind kind = RegressionKind::piecewise_linear) {
    std::vector<Knot> knots;
    for (const auto& [x, v] : points) knots.push_back({x, v, v});
    return from_knots(knots, kind);
  }

  /// Non-decreasing or non-increasing function with |m| < bound everywhere.
  static RegressionModel monotone(std::span<const Knot> knots, double bound) {
    auto m = from_knots(knots, RegressionKind::monotone);
    if (!m.is_monotone()) throw ModelError("RegressionModel: monotone model is not monotone");
    if (!(m.bound() < bound)) throw ModelError("RegressionModel: monotone model must satisfy |m| < M");
    return m;
  }

  /// Continuous piecewise-linear function with slopes bounded by C in absolute value.
  static RegressionModel lipschitz(std::span<const std::pair<double, double>> points, double constant) {
    auto m = linear_interpolant(points, RegressionKind::lipschitz);
    for (const auto& p : m.pieces_)
      if (std::fabs(p.slope()) > constant) throw ModelError("RegressionModel: slope exceeds the Lipschitz constant");
    return m;
  }

  static RegressionModel from_dyadic(const PiecewiseDyadicFn& f) {
    if (f.resolution() == 0) {
      auto m = constant(f.value(0));
      m.kind_ = RegressionKind::dyadic;
      return m;
    }
    const int k = f.resolution();
    std::vector<std::int64_t> bounds;  // boundary index b stands for b / 2^k
    for (const auto& [j, v] : f.cells()) {
      (void)v;
      if (bounds.empty() || bounds.back() != j - 1) bounds.push_back(j - 1);
      bounds.push_back(j);
    }
    if (bounds.empty()) {
      auto m = constant(f.default_value());
      m.kind_ = RegressionKind::dyadic;
      return m;
    }
    std::vector<double> breaks;
    std::vector<double> at;
    std::vector<Piece> pieces;
    const double d = f.default_value();
    pieces.push_back({-INFINITY, std::ldexp(static_cast<double>(bounds.front()), -k), d, d});
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      const double x = std::ldexp(static_cast<double>(bounds[i]), -k);
      breaks.push_back(x);
      at.push_back(f.value(bounds[i]));
      // The open interval right of boundary b up to the next boundary lies in cell b + 1.
      const double v = f.value(bounds[i] + 1);
      const double next = i + 1 < bounds.size() ? std::ldexp(static_cast<double>(bounds[i + 1]), -k) : INFINITY;
      pieces.push_back({x, next, i + 1 < bounds.size() ? v : d, i + 1 < bounds.size() ? v : d});
    }
    return RegressionModel(RegressionKind::dyadic, std::move(breaks), std::move(at), std::move(pieces));
  }

  /// h_k: for k >= 1 the indicator of the union of [2j 2^-k, (2j+1) 2^-k), 0 <= j < 2^(k-1);
  /// h_0 is 1/2 on the closed unit interval. Steps are left-closed.
  static RegressionModel rademacher(int k) {
    if (k < 0) throw PreconditionError("rademacher: negative index");
    if (k > 30) throw OverflowError("rademacher: index too large to tabulate");
    std::vector<double> breaks;
    std::vector<double> at;
    std::vector<Piece> pieces;
    if (k == 0) {
      breaks = {0.0, 1.0};
      at = {0.5, 0.5};
      pieces = {{-INFINITY, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.5, 0.5}, {1.0, INFINITY, 0.0, 0.0}};
    } else {
      const std::int64_t cells = std::int64_t{1} << k;
      pieces.push_back({-INFINITY, 0.0, 0.0, 0.0});
      for (std::int64_t j = 0; j <= cells; ++j) {
        const double x = std::ldexp(static_cast<double>(j), -k);
        const double v = (j < cells && j % 2 == 0) ? 1.0 : 0.0;
        breaks.push_back(x);
        at.push_back(v);
        const double next = j < cells ? std::ldexp(static_cast<double>(j + 1), -k) : INFINITY;
        pieces.push_back({x, next, v, v});
      }
    }
    auto m = RegressionModel(RegressionKind::rademacher, std::move(breaks), std::move(at), std::move(pieces));
    m.rademacher_index_ = k;
    return m;
  }

  RegressionKind kind() const noexcept { return kind_; }
  int rademacher_index() const noexcept { return rademacher_index_; }
  const std::vector<double>& breakpoints() const noexcept { return breaks_; }
  const std::vector<double>& breakpoint_values() const noexcept { return at_; }
  const std::vector<Piece>& pieces() const noexcept { return pieces_; }

  /// sup |m(x)|.
  double bound() const noexcept { return bound_; }

  double operator()(double x) const {
    const auto idx = static_cast<std::size_t>(std::upper_bound(breaks_.begin(), breaks_.end(), x) - breaks_.begin());
    if (idx > 0 && breaks_[idx - 1] == x) return at_[idx - 1];
    return pieces_[idx].eval(x);
  }

  double left_limit(double x) const {
    const auto idx = static_cast<std::size_t>(std::lower_bound(breaks_.begin(), breaks_.end(), x) - breaks_.begin());
    return pieces_[idx].eval(x);
  }

  double right_limit(double x) const {
    const auto idx = static_cast<std::size_t>(std::upper_bound(breaks_.begin(), breaks_.end(), x) - breaks_.begin());
    return pieces_[idx].eval(x);
  }

  /// Exact total variation over (a, b]: supremum over grids a < t_0 < ... < t_n = b.
  double variation(double a, double b) const {
    if (!(a < b)) return 0.0;
    double total = 0.0;
    for (const auto& p : pieces_) {
      const double lo = std::max(p.lo, a);
      const double hi = std::min(p.hi, b);
      if (hi > lo) total += std::fabs(p.slope()) * (hi - lo);
    }
    for (std::size_t i = 0; i < breaks_.size(); ++i) {
      const double t = breaks_[i];
      if (t <= a || t > b) continue;
      total += std::fabs(pieces_[i].at_hi - at_[i]);
      if (t < b) total += std::fabs(at_[i] - pieces_[i + 1].at_lo);
    }
    return total;
  }

  /// V(m : -i, i).
  double variation_window(std::int64_t i) const { return variation(-static_cast<double>(i), static_cast<double>(i)); }

  /// Exact Lebesgue integral of m over (lo, hi).
  double integral(double lo, double hi) const {
    if (!(hi > lo)) return 0.0;
    double total = 0.0;
    for (const auto& p : pieces_) {
      const double l = std::max(p.lo, lo);
      const double h = std::min(p.hi, hi);
      if (h > l) total += 0.5 * (p.eval(l) + p.eval(h)) * (h - l);
    }
    return total;
  }

  /// Points strictly inside (lo, hi) where a linear piece crosses zero.
  std::vector<double> zero_crossings(double lo, double hi) const {
    std::vector<double> out;
    for (const auto& p : pieces_) {
      if (!std::isfinite(p.lo) || !std::isfinite(p.hi)) continue;
      if ((p.at_lo < 0.0 && p.at_hi > 0.0) || (p.at_lo > 0.0 && p.at_hi < 0.0)) {
        const double z = p.lo + (0.0 - p.at_lo) / (p.at_hi - p.at_lo) * (p.hi - p.lo);
        if (z > lo && z < hi) out.push_back(z);
      }
    }
    return out;
  }

  bool is_monotone() const {
    // Sequence of values visited left to right: piece limits and breakpoint values.
    std::vector<double> seq;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      seq.push_back(pieces_[i].at_lo);
      seq.push_back(pieces_[i].at_hi);
      if (i < at_.size()) seq.push_back(at_[i]);
    }
    const bool up = std::is_sorted(seq.begin(), seq.end());
    const bool down = std::is_sorted(seq.rbegin(), seq.rend());
    return up || down;
  }

  /// m scaled by c (kind preserved).
  RegressionModel scaled(double c) const {
    RegressionModel m = *this;
    for (auto& v : m.at_) v *= c;
    for (auto& p : m.pieces_) {
      p.at_lo *= c;
      p.at_hi *= c;
    }
    m.bound_ = bound_ * std::fabs(c);
    return m;
  }

 private:
  RegressionModel(RegressionKind kind, std::vector<double> breaks, std::vector<double> at, std::vector<Piece> pieces)
      : kind_(kind), breaks_(std::move(breaks)), at_(std::move(at)), pieces_(std::move(pieces)) {
    bound_ = 0.0;
    for (double v : at_) bound_ = std::max(bound_, std::fabs(v));
    for (const auto& p : pieces_) bound_ = std::max({bound_, std::fabs(p.at_lo), std::fabs(p.at_hi)});
    if (!std::isfinite(bound_)) throw ModelError("RegressionModel: values must be finite");
  }

  RegressionKind kind_;
  int rademacher_index_ = -1;
  std::vector<double> breaks_;
  std::vector<double> at_;
  std::vector<Piece> pieces_;
  double bound_ = 0.0;
};

}  // namespace stablereg
