#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "stablereg/distribution.hpp"
#include "stablereg/errors.hpp"

namespace stablereg {

struct Observation {
  double x;
  double y;

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::fabs(sum_) >= std::fabs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Finite prefix of an individual sequence with an x-sorted index for interval queries.
/// Insertion order is preserved in pairs(); queries go through the sorted view.
class SampleSequence {
 public:
  SampleSequence() = default;

  explicit SampleSequence(std::vector<Observation> pairs) : pairs_(std::move(pairs)) {
    for (const auto& p : pairs_)
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw PreconditionError("SampleSequence: non-finite observation");
    order_.resize(pairs_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(), [this](std::size_t l, std::size_t r) { return pairs_[l].x < pairs_[r].x; });
    sorted_x_.reserve(pairs_.size());
    y_prefix_.reserve(pairs_.size() + 1);
    y_prefix_.push_back(0.0);
    CompensatedSum acc;
    for (std::size_t idx : order_) {
      sorted_x_.push_back(pairs_[idx].x);
      acc.add(pairs_[idx].y);
      y_prefix_.push_back(acc.value());
    }
  }

  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }
  std::span<const Observation> pairs() const noexcept { return pairs_; }
  const Observation& operator[](std::size_t i) const { return pairs_[i]; }

  /// Permutation sorting the pairs by x (stable on ties).
  std::span<const std::size_t> sorted_index() const noexcept { return order_; }
  std::span<const double> sorted_x() const noexcept { return sorted_x_; }
  /// y_prefix()[j] = sum of the first j y-values in sorted order.
  std::span<const double> y_prefix() const noexcept { return y_prefix_; }

  SampleSequence prefix(std::size_t m) const {
    if (m > size()) throw PreconditionError("SampleSequence::prefix: longer than the sequence");
    return SampleSequence(std::vector<Observation>(pairs_.begin(), pairs_.begin() + static_cast<std::ptrdiff_t>(m)));
  }

  /// Number of sample points <= t.
  std::size_t count_le(double t) const {
    return static_cast<std::size_t>(std::upper_bound(sorted_x_.begin(), sorted_x_.end(), t) - sorted_x_.begin());
  }
  /// Number of sample points < t.
  std::size_t count_lt(double t) const {
    return static_cast<std::size_t>(std::lower_bound(sorted_x_.begin(), sorted_x_.end(), t) - sorted_x_.begin());
  }

  /// Positions [first, last) in sorted order of the points inside A.
  std::pair<std::size_t, std::size_t> range(const Interval& A) const {
    const std::size_t last = count_le(A.b);
    const std::size_t first = A.a ? std::min(count_le(*A.a), last) : 0;
    return {first, last};
  }

 private:
  std::vector<Observation> pairs_;
  std::vector<std::size_t> order_;
  std::vector<double> sorted_x_;
  std::vector<double> y_prefix_;
};

/// Relative frequency of A among x_1..x_n.
inline double empirical_mass(const SampleSequence& seq, const Interval& A) {
  if (seq.empty()) throw PreconditionError("empirical_mass: empty sequence");
  const auto [first, last] = seq.range(A);
  return static_cast<double>(last - first) / static_cast<double>(seq.size());
}

/// (1/n) * sum of y_i over x_i in A.
inline double empirical_weighted_mass(const SampleSequence& seq, const Interval& A) {
  if (seq.empty()) throw PreconditionError("empirical_weighted_mass: empty sequence");
  const auto [first, last] = seq.range(A);
  if (first == last) return 0.0;
  return (seq.y_prefix()[last] - seq.y_prefix()[first]) / static_cast<double>(seq.size());
}

/// Relative frequency of the singleton {t}.
inline double empirical_atom_mass(const SampleSequence& seq, double t) {
  if (seq.empty()) throw PreconditionError("empirical_atom_mass: empty sequence");
  return static_cast<double>(seq.count_le(t) - seq.count_lt(t)) / static_cast<double>(seq.size());
}

inline double empirical_atom_weighted_mass(const SampleSequence& seq, double t) {
  if (seq.empty()) throw PreconditionError("empirical_atom_weighted_mass: empty sequence");
  const std::size_t first = seq.count_lt(t);
  const std::size_t last = seq.count_le(t);
  if (first == last) return 0.0;
  return (seq.y_prefix()[last] - seq.y_prefix()[first]) / static_cast<double>(seq.size());
}

}  // namespace stablereg
