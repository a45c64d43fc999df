#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stablereg/dyadic.hpp"
#include "stablereg/errors.hpp"
#include "stablereg/partitions.hpp"
#include "stablereg/sample_sequence.hpp"

namespace stablereg {

/// Piecewise-constant histogram regression estimate with its provenance.
struct HistogramEstimate {
  PiecewiseDyadicFn fn;
  int k = 0;
  std::size_t n = 0;
};

namespace detail {

struct CellStat {
  std::size_t count = 0;
  CompensatedSum y_sum;

  double value() const { return y_sum.value() / static_cast<double>(count); }
};

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

}  // namespace detail

/// m_hat_{k,n}: on each cell of pi_k the ratio nu_n(A) / mu_n(A) over the first n pairs,
/// with 0/0 = 0 on empty cells.
inline HistogramEstimate histogram_estimate(std::span<const Observation> pairs, int k, std::size_t n) {
  if (n < 1 || n > pairs.size()) throw PreconditionError("histogram_estimate: need 1 <= n <= length of the sequence");
  std::map<std::int64_t, detail::CellStat> stats;
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = stats[cell_of(pairs[i].x, k).j];
    ++s.count;
    s.y_sum.add(pairs[i].y);
  }
  HistogramEstimate out{PiecewiseDyadicFn(k, 0.0), k, n};
  for (const auto& [j, s] : stats) out.fn.set(j, s.value());
  return out;
}

inline HistogramEstimate histogram_estimate(const SampleSequence& seq, int k, std::size_t n) {
  return histogram_estimate(seq.pairs(), k, n);
}

/// True iff V(f : -i, i) < 4 alpha(i) for every 1 <= i <= k (strict; ties fail).
inline bool variation_check(const PiecewiseDyadicFn& f, const VariationBudget& alpha) {
  const int k = f.resolution();
  if (k < 1) throw PreconditionError("variation_check: resolution must be >= 1");
  for (std::int64_t i = 1; i <= k; ++i)
    if (!(total_variation_window(f, i) < 4.0 * alpha(i))) return false;
  return true;
}

struct EstimatorOptions {
  /// Samples allowed in one stopping-time search before it counts as stalled (0: never).
  std::size_t search_horizon = 0;
  /// Deepest resolution searched; keeps cell indices inside 64 bits.
  int max_resolution = 48;
};

/// Serializable snapshot: budget, stopping times and frozen estimates.
struct EstimatorCheckpoint {
  VariationBudget budget = VariationBudget::constant(1.0);
  EstimatorOptions options;
  std::size_t consumed = 0;
  std::vector<std::size_t> tau;
  std::vector<PiecewiseDyadicFn> frozen;
  bool stalled = false;

  friend bool operator==(const EstimatorCheckpoint& l, const EstimatorCheckpoint& r) {
    return l.budget == r.budget && l.options.search_horizon == r.options.search_horizon &&
           l.options.max_resolution == r.options.max_resolution && l.consumed == r.consumed && l.tau == r.tau &&
           l.frozen == r.frozen && l.stalled == r.stalled;
  }
};

inline std::size_t kappa_of(std::span<const std::size_t> tau, std::size_t n) {
  if (n < 1) throw PreconditionError("kappa: sample count must be >= 1");
  if (tau.empty() || tau.front() > n) throw PreconditionError("kappa: no stopping time reached yet");
  const auto it = std::upper_bound(tau.begin(), tau.end(), n);
  return static_cast<std::size_t>(it - tau.begin()) - 1;
}

/// Streaming realization of the stopping-time search. tau_0 = 1; tau_k is the first
/// n > tau_{k-1} at which the resolution-k histogram of the first n pairs passes the
/// variation check. Resolutions are searched strictly in order; statistics for the search
/// resolution always cover the whole prefix.
class StreamingEstimator {
 public:
  explicit StreamingEstimator(VariationBudget budget, EstimatorOptions options = {})
      : budget_(std::move(budget)), options_(options) {
    if (options_.max_resolution < 1 || options_.max_resolution > 56)
      throw PreconditionError("StreamingEstimator: max_resolution must lie in [1, 56]");
  }

  const VariationBudget& budget() const noexcept { return budget_; }
  const EstimatorOptions& options() const noexcept { return options_; }
  std::size_t consumed() const noexcept { return prefix_.size(); }
  std::span<const Observation> prefix() const noexcept { return prefix_; }
  const std::vector<std::size_t>& stopping_times() const noexcept { return tau_; }
  const std::vector<PiecewiseDyadicFn>& frozen() const noexcept { return frozen_; }

  /// Resolution currently searched, or 0 when the search has reached max_resolution.
  int searching_resolution() const noexcept { return searching_ ? active_k_ : 0; }

  /// The current search has consumed search_horizon samples without success.
  bool stalled() const noexcept {
    return searching_ && options_.search_horizon > 0 && !tau_.empty() && consumed() - tau_.back() >= options_.search_horizon;
  }

  void ingest(const Observation& pair) {
    if (!std::isfinite(pair.x) || !std::isfinite(pair.y)) throw PreconditionError("ingest: non-finite observation");
    prefix_.push_back(pair);
    const std::size_t n = prefix_.size();
    if (n == 1) {
      tau_.push_back(1);
      frozen_.push_back(histogram_estimate(prefix_, 0, 1).fn);
      start_resolution(1);
      return;
    }
    if (!searching_) return;
    add_to_active(pair);
    if (candidate_pass() && exact_pass()) {
      tau_.push_back(n);
      frozen_.push_back(active_function());
      if (active_k_ < options_.max_resolution)
        start_resolution(active_k_ + 1);
      else
        searching_ = false;
    }
  }

  template <class Range>
  void ingest_all(const Range& pairs) {
    for (const auto& p : pairs) ingest(p);
  }

  std::size_t kappa(std::size_t n) const { return kappa_of(tau_, n); }

  /// m_tilde_n = m_hat_{kappa_n}.
  const PiecewiseDyadicFn& fixed_sample_estimate(std::size_t n) const {
    if (n < 1) throw PreconditionError("fixed_sample_estimate: n must be >= 1");
    if (n > consumed()) throw PreconditionError("fixed_sample_estimate: n exceeds the consumed prefix");
    return frozen_[kappa(n)];
  }

  EstimatorCheckpoint checkpoint() const { return {budget_, options_, consumed(), tau_, frozen_, stalled()}; }

 private:
  // Window index of the smallest (-i, i] containing the adjacent pair (j, j+1).
  std::int64_t pair_window(std::int64_t j) const {
    const std::int64_t c = std::int64_t{1} << active_k_;
    return std::max<std::int64_t>({1, detail::ceil_div(1 - j, c), detail::ceil_div(j + 1, c)});
  }

  double cell_value(std::int64_t j) const {
    const auto it = stats_.find(j);
    return it == stats_.end() ? 0.0 : it->second.value();
  }

  // Pair (j, j+1) had one member change from old_v to new_v; `other` is the fixed member.
  void adjust_pair(std::int64_t j, double other, double old_v, double new_v) {
    const std::int64_t w = pair_window(j);
    if (w > active_k_) return;
    window_increment_[static_cast<std::size_t>(w)] += std::fabs(other - new_v) - std::fabs(other - old_v);
  }

  void add_to_active(const Observation& p) {
    const std::int64_t j = cell_of(p.x, active_k_).j;
    const double old_v = cell_value(j);
    auto& s = stats_[j];
    ++s.count;
    s.y_sum.add(p.y);
    const double new_v = s.value();
    if (new_v == old_v) return;
    adjust_pair(j - 1, cell_value(j - 1), old_v, new_v);
    adjust_pair(j, cell_value(j + 1), old_v, new_v);
  }

  bool candidate_pass() const {
    double v = 0.0;
    for (int i = 1; i <= active_k_; ++i) {
      v += window_increment_[static_cast<std::size_t>(i)];
      const double limit = 4.0 * budget_(i);
      if (!(v < limit + 1e-9 * (1.0 + limit))) return false;
    }
    return true;
  }

  PiecewiseDyadicFn active_function() const {
    PiecewiseDyadicFn f(active_k_, 0.0);
    for (const auto& [j, s] : stats_) f.set(j, s.value());
    return f;
  }

  // Exact decision; also resynchronizes the incremental window sums.
  bool exact_pass() {
    const PiecewiseDyadicFn f = active_function();
    double previous = 0.0;
    for (int i = 1; i <= active_k_; ++i) {
      const double v = total_variation_window(f, i);
      window_increment_[static_cast<std::size_t>(i)] = v - previous;
      previous = v;
    }
    return variation_check(f, budget_);
  }

  void start_resolution(int k) {
    active_k_ = k;
    searching_ = true;
    stats_.clear();
    for (const auto& p : prefix_) {
      auto& s = stats_[cell_of(p.x, k).j];
      ++s.count;
      s.y_sum.add(p.y);
    }
    window_increment_.assign(static_cast<std::size_t>(k) + 1, 0.0);
    (void)exact_pass();
  }

  VariationBudget budget_;
  EstimatorOptions options_;
  std::vector<Observation> prefix_;
  std::vector<std::size_t> tau_;
  std::vector<PiecewiseDyadicFn> frozen_;

  int active_k_ = 0;
  bool searching_ = false;
  std::map<std::int64_t, detail::CellStat> stats_;
  std::vector<double> window_increment_;  // V_i - V_{i-1} for the active histogram
};

/// Stopping times by direct evaluation of the definition: for each k, every n > tau_{k-1}
/// is tested with a from-scratch variation check of m_hat_{k,n}.
inline std::vector<std::size_t> batch_stopping_times(std::span<const Observation> pairs, const VariationBudget& alpha,
                                                     int max_resolution = EstimatorOptions{}.max_resolution) {
  std::vector<std::size_t> tau;
  if (pairs.empty()) return tau;
  tau.push_back(1);
  for (int k = 1; k <= max_resolution; ++k) {
    std::map<std::int64_t, detail::CellStat> stats;
    PiecewiseDyadicFn f(k, 0.0);
    auto add = [&](const Observation& p) {
      const std::int64_t j = cell_of(p.x, k).j;
      auto& s = stats[j];
      ++s.count;
      s.y_sum.add(p.y);
      f.set(j, s.value());
    };
    for (std::size_t i = 0; i < tau.back(); ++i) add(pairs[i]);
    bool found = false;
    for (std::size_t n = tau.back() + 1; n <= pairs.size(); ++n) {
      add(pairs[n - 1]);
      if (variation_check(f, alpha)) {
        tau.push_back(n);
        found = true;
        break;
      }
    }
    if (!found) break;
  }
  return tau;
}

struct CertificateResult {
  bool ok = true;
  std::vector<std::string> failures;
};

/// Re-derives every frozen estimate from the stored prefix and re-runs the variation check.
inline CertificateResult verify_estimator_certificates(const EstimatorCheckpoint& cp, std::span<const Observation> pairs) {
  CertificateResult r;
  auto fail = [&r](std::string msg) {
    r.ok = false;
    r.failures.push_back(std::move(msg));
  };
  if (cp.tau.size() != cp.frozen.size()) fail("tau and frozen lists differ in length");
  if (!cp.tau.empty() && cp.tau.front() != 1) fail("tau_0 must equal 1");
  for (std::size_t k = 1; k < cp.tau.size(); ++k)
    if (cp.tau[k] <= cp.tau[k - 1]) fail("tau not strictly increasing at k=" + std::to_string(k));
  for (std::size_t k = 0; k < std::min(cp.tau.size(), cp.frozen.size()); ++k) {
    if (cp.tau[k] > pairs.size()) {
      fail("tau_" + std::to_string(k) + " exceeds the stored sequence");
      continue;
    }
    const auto h = histogram_estimate(pairs, static_cast<int>(k), cp.tau[k]);
    if (!(h.fn == cp.frozen[k])) fail("frozen estimate " + std::to_string(k) + " does not match its prefix histogram");
    if (k >= 1 && !variation_check(h.fn, cp.budget)) fail("variation check fails for frozen estimate " + std::to_string(k));
  }
  return r;
}

}  // namespace stablereg
