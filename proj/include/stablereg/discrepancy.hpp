#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "stablereg/distribution.hpp"
#include "stablereg/errors.hpp"
#include "stablereg/sample_sequence.hpp"

namespace stablereg {

/// Cumulative function G(t) = nu(-inf, t] of a target measure, tabulated at its knots so
/// that G and G(t-) evaluate in O(log K). Between knots G is quadratic (linear regression
/// function times constant density) and monotone (knots include zero crossings).
class CumulativeProfile {
 public:
  /// Plain probability: G = F.
  explicit CumulativeProfile(const DistributionModel& mu) : CumulativeProfile(SignedMeasureModel(mu, RegressionModel::constant(1.0))) {}

  explicit CumulativeProfile(const SignedMeasureModel& nu) {
    knots_ = nu.breakpoints();
    value_.reserve(knots_.size());
    left_.reserve(knots_.size());
    for (double t : knots_) {
      value_.push_back(nu.cumulative(t));
      left_.push_back(nu.cumulative_left(t));
    }
    // Density and regression piece on each open gap (knot_i, knot_{i+1}).
    const auto& m = nu.regression();
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
      const double lo = knots_[i];
      const double hi = knots_[i + 1];
      const double mid = 0.5 * (lo + hi);
      double density = 0.0;
      for (const auto& s : nu.base().segments())
        if (mid > s.a && mid < s.b) density = s.density;
      const double m_lo = m.right_limit(lo);
      const double m_hi = m.left_limit(hi);
      gaps_.push_back({density, m_lo, (m_hi - m_lo) / (hi - lo)});
    }
    total_ = value_.empty() ? 0.0 : value_.back();
  }

  const std::vector<double>& knots() const noexcept { return knots_; }
  double total() const noexcept { return total_; }

  double operator()(double t) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    if (it == knots_.begin()) return 0.0;
    const std::size_t i = static_cast<std::size_t>(it - knots_.begin()) - 1;
    if (knots_[i] == t || i + 1 == knots_.size()) return value_[i];
    return value_[i] + partial(i, t);
  }

  double left(double t) const {
    const auto it = std::lower_bound(knots_.begin(), knots_.end(), t);
    const std::size_t pos = static_cast<std::size_t>(it - knots_.begin());
    if (pos < knots_.size() && knots_[pos] == t) return left_[pos];
    return (*this)(t);
  }

 private:
  struct Gap {
    double density;
    double m_lo;
    double slope;
  };

  double partial(std::size_t i, double t) const {
    const auto& g = gaps_[i];
    const double d = t - knots_[i];
    return g.density * (g.m_lo * d + 0.5 * g.slope * d * d);
  }

  std::vector<double> knots_;
  std::vector<double> value_;
  std::vector<double> left_;
  std::vector<Gap> gaps_;
  double total_ = 0.0;
};

/// Extremes of D(t) = (1/n) sum_{x_i <= t} w_i - G(t) over the extended line, including
/// left limits and the value 0 at -inf.
struct DeviationRange {
  double max = 0.0;
  double min = 0.0;

  /// sup over the interval class of |D(b) - D(a)|.
  double span() const noexcept { return max - min; }
  /// sup over half-lines of |D(b)|.
  double one_sided() const noexcept { return std::max(max, -min); }
};

namespace detail {

/// Merge scan over sorted sample coordinates and the profile's knots. D is monotone
/// between consecutive candidates, so its extremes are attained (or approached) at the
/// candidates' values and left limits.
inline DeviationRange scan_deviation(std::span<const double> xs, std::span<const double> weights, double n,
                                     const CumulativeProfile& G) {
  DeviationRange r;
  const auto& knots = G.knots();
  CompensatedSum acc;
  std::size_t i = 0;
  std::size_t q = 0;
  auto consider = [&r](double d) {
    r.max = std::max(r.max, d);
    r.min = std::min(r.min, d);
  };
  while (i < xs.size() || q < knots.size()) {
    double t;
    if (q >= knots.size() || (i < xs.size() && xs[i] <= knots[q]))
      t = xs[i];
    else
      t = knots[q];
    consider(acc.value() / n - G.left(t));
    while (i < xs.size() && xs[i] == t) {
      acc.add(weights.empty() ? 1.0 : weights[i]);
      ++i;
    }
    while (q < knots.size() && knots[q] == t) ++q;
    consider(acc.value() / n - G(t));
  }
  return r;
}

inline std::vector<double> sorted_weights(const SampleSequence& seq) {
  std::vector<double> w;
  w.reserve(seq.size());
  for (std::size_t idx : seq.sorted_index()) w.push_back(seq[idx].y);
  return w;
}

}  // namespace detail

inline DeviationRange interval_deviation(const SampleSequence& seq, const CumulativeProfile& F) {
  if (seq.empty()) throw PreconditionError("discrepancy: empty sequence");
  return detail::scan_deviation(seq.sorted_x(), {}, static_cast<double>(seq.size()), F);
}

inline DeviationRange weighted_deviation(const SampleSequence& seq, const CumulativeProfile& G) {
  if (seq.empty()) throw PreconditionError("discrepancy: empty sequence");
  const auto w = detail::sorted_weights(seq);
  return detail::scan_deviation(seq.sorted_x(), w, static_cast<double>(seq.size()), G);
}

/// sup over A in the interval class of |mu_n(A) - mu(A)|.
inline double sup_interval_discrepancy(const SampleSequence& seq, const DistributionModel& model) {
  return interval_deviation(seq, CumulativeProfile(model)).span();
}

/// sup over A in the interval class of |nu_n(A) - nu(A)|.
inline double sup_weighted_discrepancy(const SampleSequence& seq, const SignedMeasureModel& target) {
  return weighted_deviation(seq, CumulativeProfile(target)).span();
}

/// Kolmogorov-Smirnov statistic sup_b |F_n(b) - F(b)|.
inline double ks_discrepancy(const SampleSequence& seq, const DistributionModel& model) {
  return interval_deviation(seq, CumulativeProfile(model)).one_sided();
}

/// Discrepancies of every prefix of a fixed sequence. The sort is done once; a prefix of
/// length m is evaluated in O(n + K) by filtering the sorted view.
class PrefixDiscrepancy {
 public:
  PrefixDiscrepancy(std::span<const Observation> pairs, CumulativeProfile plain, CumulativeProfile weighted)
      : plain_(std::move(plain)), weighted_(std::move(weighted)) {
    order_.resize(pairs.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t l, std::size_t r) { return pairs[l].x < pairs[r].x; });
    xs_.reserve(pairs.size());
    ys_.reserve(pairs.size());
    y_lo_ = 0.0;
    y_hi_ = 0.0;
    for (std::size_t idx : order_) {
      xs_.push_back(pairs[idx].x);
      ys_.push_back(pairs[idx].y);
      y_lo_ = std::min(y_lo_, pairs[idx].y);
      y_hi_ = std::max(y_hi_, pairs[idx].y);
    }
  }

  std::size_t size() const noexcept { return order_.size(); }

  /// Bound on |Delta(m+1) - Delta(m)| * (m+1) for the weighted statistic; 1 for the plain one.
  double weighted_step() const noexcept { return y_hi_ - y_lo_; }

  double plain(std::size_t m) const { return evaluate(m, false); }
  double weighted(std::size_t m) const { return evaluate(m, true); }

 private:
  double evaluate(std::size_t m, bool weighted) const {
    if (m == 0 || m > order_.size()) throw PreconditionError("PrefixDiscrepancy: prefix length out of range");
    std::vector<double> xs;
    std::vector<double> ws;
    xs.reserve(m);
    if (weighted) ws.reserve(m);
    for (std::size_t p = 0; p < order_.size(); ++p) {
      if (order_[p] >= m) continue;
      xs.push_back(xs_[p]);
      if (weighted) ws.push_back(ys_[p]);
    }
    return detail::scan_deviation(xs, ws, static_cast<double>(m), weighted ? weighted_ : plain_).span();
  }

  CumulativeProfile plain_;
  CumulativeProfile weighted_;
  std::vector<std::size_t> order_;
  std::vector<double> xs_;
  std::vector<double> ys_;
  double y_lo_ = 0.0;
  double y_hi_ = 0.0;
};

struct AtomDeviation {
  double location = 0.0;
  double mass_deviation = 0.0;      // |mu_n({u}) - mu({u})|
  double weighted_deviation = 0.0;  // |nu_n({u}) - nu({u})|
};

struct CheckpointDiagnostic {
  std::size_t n = 0;
  double interval_discrepancy = 0.0;
  double weighted_discrepancy = 0.0;
  double cdf_deviation = 0.0;  // max over probe points of |F_n(t) - F(t)|
  std::vector<AtomDeviation> atoms;
};

struct StabilityReport {
  std::vector<double> probes;
  std::vector<CheckpointDiagnostic> checkpoints;
  bool non_stable_evidence = false;
};

/// Probe points for the pointwise half-line condition: every breakpoint of the model, the
/// midpoints between them, and one point on each side of the support hull at distance
/// max(1/2, half the hull width).
inline std::vector<double> default_cdf_probes(const DistributionModel& model) {
  const auto b = model.breakpoints();
  std::vector<double> probes = b;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) probes.push_back(0.5 * (b[i] + b[i + 1]));
  if (!b.empty()) {
    const double w = std::max(0.5, 0.5 * (b.back() - b.front()));
    probes.push_back(b.front() - w);
    probes.push_back(b.back() + w);
  }
  std::sort(probes.begin(), probes.end());
  probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
  return probes;
}

/// Finite-sample evidence about the stability conditions along increasing prefixes.
/// Flags NON-STABLE-EVIDENCE when the half-line deviations settle while some atom
/// deviation does not decrease between the first and last checkpoint.
inline StabilityReport stability_diagnostic(const SampleSequence& seq, const DistributionModel& model,
                                            const SignedMeasureModel& target, std::span<const std::size_t> checkpoints) {
  constexpr double kZero = 1e-12;
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    if (checkpoints[c] == 0 || checkpoints[c] > seq.size()) throw PreconditionError("stability_diagnostic: checkpoint out of range");
    if (c > 0 && checkpoints[c] <= checkpoints[c - 1]) throw PreconditionError("stability_diagnostic: checkpoints must increase");
  }
  StabilityReport report;
  report.probes = default_cdf_probes(model);
  const CumulativeProfile F(model);
  const CumulativeProfile G(target);
  for (std::size_t m : checkpoints) {
    const SampleSequence prefix = seq.prefix(m);
    CheckpointDiagnostic d;
    d.n = m;
    d.interval_discrepancy = interval_deviation(prefix, F).span();
    d.weighted_discrepancy = weighted_deviation(prefix, G).span();
    for (double t : report.probes)
      d.cdf_deviation = std::max(d.cdf_deviation, std::fabs(empirical_mass(prefix, Interval::left_unbounded(t)) - F(t)));
    for (const auto& at : model.atoms()) {
      d.atoms.push_back({at.location, std::fabs(empirical_atom_mass(prefix, at.location) - at.mass),
                         std::fabs(empirical_atom_weighted_mass(prefix, at.location) - target.atom_measure(at.location))});
    }
    report.checkpoints.push_back(std::move(d));
  }
  if (report.checkpoints.size() >= 2) {
    const auto& first = report.checkpoints.front();
    const auto& last = report.checkpoints.back();
    const bool cdf_settles = last.cdf_deviation < first.cdf_deviation || last.cdf_deviation <= kZero;
    bool atom_stuck = false;
    for (std::size_t a = 0; a < last.atoms.size(); ++a) {
      const bool mass_stuck = last.atoms[a].mass_deviation > kZero && last.atoms[a].mass_deviation >= first.atoms[a].mass_deviation;
      const bool weight_stuck =
          last.atoms[a].weighted_deviation > kZero && last.atoms[a].weighted_deviation >= first.atoms[a].weighted_deviation;
      atom_stuck = atom_stuck || mass_stuck || weight_stuck;
    }
    report.non_stable_evidence = cdf_settles && atom_stuck;
  }
  return report;
}

}  // namespace stablereg
