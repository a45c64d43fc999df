#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "stablereg/errors.hpp"
#include "stablereg/regression_model.hpp"

namespace stablereg {

/// Member of the interval class: (a, b] or (-inf, b]. b may be +inf.
struct Interval {
  std::optional<double> a;
  double b = INFINITY;

  static Interval left_unbounded(double b) { return Interval{std::nullopt, b}; }
  static Interval bounded(double a, double b) {
    if (!(a < b)) throw PreconditionError("Interval: bounded interval needs a < b");
    return Interval{a, b};
  }

  double lower() const noexcept { return a ? *a : -INFINITY; }
  bool contains(double x) const noexcept { return x > lower() && x <= b; }
};

struct Atom {
  double location;
  double mass;
};

/// Constant density on (a, b].
struct Segment {
  double a;
  double b;
  double density;

  double mass() const noexcept { return density * (b - a); }
};

/// A probability distribution: finitely many atoms plus a piecewise-constant density.
class DistributionModel {
 public:
  static constexpr double kMassTolerance = 1e-12;

  DistributionModel(std::vector<Atom> atoms, std::vector<Segment> segments)
      : atoms_(std::move(atoms)), segments_(std::move(segments)) {
    std::sort(atoms_.begin(), atoms_.end(), [](const Atom& l, const Atom& r) { return l.location < r.location; });
    std::sort(segments_.begin(), segments_.end(), [](const Segment& l, const Segment& r) { return l.a < r.a; });
    validate();
    build_knots();
  }

  static DistributionModel uniform(double a = 0.0, double b = 1.0) {
    if (!(a < b)) throw ModelError("uniform: need a < b");
    return DistributionModel({}, {{a, b, 1.0 / (b - a)}});
  }
  static DistributionModel point_mass(double x) { return DistributionModel({{x, 1.0}}, {}); }

  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }

  /// Mass of the continuous part over (lo, hi].
  double continuous_mass(double lo, double hi) const {
    double total = 0.0;
    for (const auto& s : segments_) {
      const double l = std::max(lo, s.a);
      const double h = std::min(hi, s.b);
      if (h > l) total += s.density * (h - l);
    }
    return total;
  }

  /// mu(A): atoms at b are included, atoms at a excluded.
  double prob(const Interval& A) const {
    double total = continuous_mass(A.lower(), A.b);
    for (const auto& at : atoms_)
      if (A.contains(at.location)) total += at.mass;
    return total;
  }

  double atom_mass(double x) const {
    const auto it = std::lower_bound(atoms_.begin(), atoms_.end(), x, [](const Atom& at, double v) { return at.location < v; });
    return it != atoms_.end() && it->location == x ? it->mass : 0.0;
  }

  /// F(t) = mu(-inf, t].
  double cdf(double t) const { return prob(Interval::left_unbounded(t)); }

  /// F(t-) = mu(-inf, t).
  double cdf_left(double t) const { return cdf(t) - atom_mass(t); }

  /// Atom locations and segment endpoints, sorted and deduplicated.
  std::vector<double> breakpoints() const {
    std::vector<double> out;
    for (const auto& at : atoms_) out.push_back(at.location);
    for (const auto& s : segments_) {
      out.push_back(s.a);
      out.push_back(s.b);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Smallest t with F(t) > u, u in [0, 1).
  double quantile(double u) const {
    const auto it = std::upper_bound(knot_cdf_.begin(), knot_cdf_.end(), u);
    std::size_t i = static_cast<std::size_t>(it - knot_cdf_.begin());
    if (i >= knots_.size()) i = knots_.size() - 1;
    if (knot_cdf_left_[i] <= u) return knots_[i];  // u falls in the jump at knot i
    // F is linear on (knots[i-1], knots[i]) with a positive slope there.
    const double lo = knots_[i - 1];
    const double f_lo = knot_cdf_[i - 1];
    const double slope = (knot_cdf_left_[i] - f_lo) / (knots_[i] - lo);
    const double x = lo + (u - f_lo) / slope;
    return std::clamp(x, lo, knots_[i]);
  }

 private:
  void validate() const {
    double total = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (!std::isfinite(atoms_[i].location)) throw ModelError("DistributionModel: atom location must be finite");
      if (!(atoms_[i].mass > 0.0 && atoms_[i].mass <= 1.0)) throw ModelError("DistributionModel: atom mass must lie in (0, 1]");
      if (i > 0 && atoms_[i].location == atoms_[i - 1].location) throw ModelError("DistributionModel: duplicate atom location");
      total += atoms_[i].mass;
    }
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto& s = segments_[i];
      if (!(std::isfinite(s.a) && std::isfinite(s.b) && s.a < s.b)) throw ModelError("DistributionModel: segment needs finite a < b");
      if (!(s.density >= 0.0) || !std::isfinite(s.density)) throw ModelError("DistributionModel: density must be nonnegative");
      if (i > 0 && s.a < segments_[i - 1].b) throw ModelError("DistributionModel: segments overlap");
      total += s.mass();
    }
    if (std::fabs(total - 1.0) > kMassTolerance) throw ModelError("DistributionModel: total mass must equal 1");
  }

  void build_knots() {
    knots_ = breakpoints();
    for (double t : knots_) {
      knot_cdf_.push_back(cdf(t));
      knot_cdf_left_.push_back(cdf_left(t));
    }
    // Guard against the last knot's cumulative mass rounding below 1.
    if (!knot_cdf_.empty()) knot_cdf_.back() = std::max(knot_cdf_.back(), 1.0);
  }

  std::vector<Atom> atoms_;
  std::vector<Segment> segments_;
  std::vector<double> knots_;
  std::vector<double> knot_cdf_;
  std::vector<double> knot_cdf_left_;
};

/// nu(A) = integral over A of m d(mu).
class SignedMeasureModel {
 public:
  SignedMeasureModel(DistributionModel base, RegressionModel regression)
      : base_(std::move(base)), regression_(std::move(regression)) {}

  const DistributionModel& base() const noexcept { return base_; }
  const RegressionModel& regression() const noexcept { return regression_; }

  double measure(const Interval& A) const {
    double total = 0.0;
    for (const auto& s : base_.segments()) {
      const double l = std::max(A.lower(), s.a);
      const double h = std::min(A.b, s.b);
      if (h > l) total += s.density * regression_.integral(l, h);
    }
    for (const auto& at : base_.atoms())
      if (A.contains(at.location)) total += at.mass * regression_(at.location);
    return total;
  }

  double atom_measure(double x) const { return base_.atom_mass(x) * regression_(x); }

  double cumulative(double t) const { return measure(Interval::left_unbounded(t)); }
  double cumulative_left(double t) const { return cumulative(t) - atom_measure(t); }

  /// Points where the cumulative function can have a jump, a kink or a local extremum.
  std::vector<double> breakpoints() const {
    std::vector<double> out = base_.breakpoints();
    for (double t : regression_.breakpoints()) out.push_back(t);
    for (const auto& s : base_.segments()) {
      const auto z = regression_.zero_crossings(s.a, s.b);
      out.insert(out.end(), z.begin(), z.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  DistributionModel base_;
  RegressionModel regression_;
};

}  // namespace stablereg
