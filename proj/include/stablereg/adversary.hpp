#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "stablereg/discrepancy.hpp"
#include "stablereg/distribution.hpp"
#include "stablereg/errors.hpp"
#include "stablereg/estimator.hpp"
#include "stablereg/evaluation.hpp"
#include "stablereg/generators.hpp"
#include "stablereg/regression_model.hpp"
#include "stablereg/sample_sequence.hpp"

namespace stablereg {

// ---------------------------------------------------------------------------
// Rademacher family

/// h_k(x) evaluated from its definition: for k >= 1, 1 on [2j 2^-k, (2j+1) 2^-k) with
/// 0 <= j < 2^(k-1), else 0; h_0 = 1/2 on [0, 1].
inline double rademacher_eval(int k, double x) {
  if (k < 0) throw PreconditionError("rademacher_eval: negative index");
  if (k == 0) return (x >= 0.0 && x <= 1.0) ? 0.5 : 0.0;
  if (x < 0.0 || x >= 1.0) return 0.0;
  const auto cell = static_cast<std::int64_t>(std::floor(std::ldexp(x, k)));
  return cell % 2 == 0 ? 1.0 : 0.0;
}

/// nu_k(A) = integral of h_k over A against the uniform law on [0, 1].
inline double nu_k(int k, const Interval& A) {
  return SignedMeasureModel(DistributionModel::uniform(0.0, 1.0), RegressionModel::rademacher(k)).measure(A);
}

// ---------------------------------------------------------------------------
// Procedures under attack

/// Output of an estimation procedure on one prefix. `exact` is set when the procedure
/// exposes closed-form structure, enabling exact L2 integrals.
struct FittedFunction {
  PointFunction eval;
  std::optional<RegressionModel> exact;
};

/// Deterministic map from a finite prefix to a function on [0, 1].
struct EstimatorProcedure {
  std::string name;
  std::function<FittedFunction(std::span<const Observation>)> fit;
};

inline FittedFunction fitted_from(RegressionModel m) {
  auto shared = std::make_shared<const RegressionModel>(std::move(m));
  return {[shared](double x) { return (*shared)(x); }, *shared};
}

/// Plug-in histogram on the whole prefix with depth floor(log2(n) / 2).
inline EstimatorProcedure histogram_procedure() {
  return {"histogram", [](std::span<const Observation> prefix) {
            const std::size_t n = prefix.size();
            int depth = 0;
            while ((std::size_t{1} << (2 * (depth + 1))) <= n) ++depth;
            return fitted_from(RegressionModel::from_dyadic(histogram_estimate(prefix, depth, n).fn));
          }};
}

inline EstimatorProcedure constant_procedure(double c) {
  return {"constant", [c](std::span<const Observation>) { return fitted_from(RegressionModel::constant(c)); }};
}

/// Returns the h_j (1 <= j <= max_index) that best explains the last `window` labels.
inline EstimatorProcedure oracle_procedure(int max_index = 20, std::size_t window = 64) {
  return {"oracle", [max_index, window](std::span<const Observation> prefix) {
            const std::size_t from = prefix.size() > window ? prefix.size() - window : 0;
            int best = 1;
            std::size_t best_miss = SIZE_MAX;
            for (int j = 1; j <= max_index; ++j) {
              std::size_t miss = 0;
              for (std::size_t i = from; i < prefix.size(); ++i) miss += rademacher_eval(j, prefix[i].x) != prefix[i].y;
              if (miss < best_miss) {
                best_miss = miss;
                best = j;
              }
            }
            return fitted_from(RegressionModel::rademacher(best));
          }};
}

struct L2Value {
  double value = 0.0;
  bool exact = true;
  bool converged = true;
};

/// Integral of |f - g|^2 against the uniform law on [0, 1]; exact when both sides allow it.
inline L2Value l2_uniform(const FittedFunction& f, const FittedFunction& g, std::size_t cells) {
  const auto lambda = DistributionModel::uniform(0.0, 1.0);
  if (f.exact && g.exact) return {l2_distance_exact(*f.exact, *g.exact, lambda), true, true};
  const auto q = l2_error_quadrature(f.eval, g.eval, lambda, cells);
  return {q.refined, false, q.converged};
}

// ---------------------------------------------------------------------------
// Blocks and thresholds

struct AdversaryConfig {
  /// Truncation of the sup over m >= L in the thresholds, and the largest block length tried.
  std::size_t horizon = std::size_t{1} << 20;
  /// First block length examined; later checks double it.
  std::size_t first_check = 16;
  double closeness = 1.0 / 40.0;
  std::size_t quadrature_cells = std::size_t{1} << 16;
};

/// Rotation applied to the van der Corput points of block k.
inline double block_shift(int k) { return std::fmod(static_cast<double>(k) * std::numbers::sqrt2, 1.0); }

/// First `count` pairs of block k: x_i = frac(vdc(i) + k sqrt 2), y_i = h_k(x_i).
inline std::vector<Observation> block_pairs(int k, std::size_t count, std::size_t first = 1) {
  const double shift = block_shift(k);
  std::vector<Observation> out;
  out.reserve(count);
  for (std::size_t i = first; i < first + count; ++i) {
    double x = van_der_corput(i) + shift;
    if (x >= 1.0) x -= 1.0;
    out.push_back({x, rademacher_eval(k, x)});
  }
  return out;
}

/// Least L such that stat(m) <= threshold for every L <= m <= horizon, where stat moves by
/// at most `step` / m between consecutive prefixes. Scans down from the horizon and skips
/// stretches the step bound already certifies.
inline std::size_t least_stable_prefix(const std::function<double(std::size_t)>& stat, double step, double threshold,
                                       std::size_t horizon) {
  std::size_t m = horizon;
  while (m >= 1) {
    const double d = stat(m);
    if (d > threshold) {
      if (m == horizon) throw HorizonExhausted("no admissible threshold within the horizon " + std::to_string(horizon));
      return m + 1;
    }
    const double slack = threshold - d - 1e-12;
    std::size_t skip = 0;
    if (slack > 0.0 && step > 0.0) skip = static_cast<std::size_t>(std::floor(slack * static_cast<double>(m + 1) / (step + slack)));
    else if (step == 0.0) skip = m;
    if (skip + 1 >= m) return 1;
    m -= skip + 1;
  }
  return 1;
}

struct BlockThresholds {
  std::size_t l = 0;        // interval discrepancy settles below 1/(k+1)
  std::size_t l_tilde = 0;  // weighted discrepancy against nu_k settles below 1/(k+1)
};

/// Thresholds of a block whose first `horizon` pairs are given.
inline BlockThresholds compute_block_thresholds(int k, std::span<const Observation> block, std::size_t horizon,
                                                std::optional<double> threshold = std::nullopt) {
  if (horizon == 0 || block.size() < horizon) throw HorizonExhausted("block shorter than the horizon");
  const double thr = threshold.value_or(1.0 / static_cast<double>(k + 1));
  const auto lambda = DistributionModel::uniform(0.0, 1.0);
  const PrefixDiscrepancy pd(block.first(horizon), CumulativeProfile(lambda),
                             CumulativeProfile(SignedMeasureModel(lambda, RegressionModel::rademacher(k))));
  BlockThresholds t;
  t.l = least_stable_prefix([&](std::size_t m) { return pd.plain(m); }, 1.0, thr, horizon);
  t.l_tilde = least_stable_prefix([&](std::size_t m) { return pd.weighted(m); }, pd.weighted_step(), thr, horizon);
  return t;
}

// ---------------------------------------------------------------------------
// Splicing

struct BlockRecord {
  int k = 0;
  BlockThresholds thresholds;       // l_k, l~_k
  BlockThresholds next_thresholds;  // l_{k+1}, l~_{k+1}
  std::size_t start = 0;            // n_{k-1}
  std::size_t end = 0;              // n_k
  double closeness = 0.0;           // integral |phi_{n_k} - h_k|^2
  bool closeness_exact = true;
  double interval_discrepancy = 0.0;  // Delta(prefix n_k)
  double weighted_discrepancy = 0.0;  // Delta~_k(prefix n_k)
  std::size_t required_length = 0;    // k * max(l_{k+1}, l~_{k+1})
  std::vector<std::size_t> checks;    // prefix lengths at which phi was evaluated
};

struct SpliceState {
  std::vector<Observation> sequence;
  std::vector<std::size_t> boundaries{0};  // n_0 = 0, n_1, ...
  std::vector<BlockRecord> blocks;
  std::vector<FittedFunction> fits;  // phi_{n_k}
  std::unordered_set<double> used_x;
  std::map<int, BlockThresholds> threshold_cache;
  /// Set when a block failed closeness: its label and the best distance seen.
  std::optional<std::pair<int, double>> witness;
};

namespace detail {

inline const BlockThresholds& thresholds_for(SpliceState& state, int k, const AdversaryConfig& config) {
  auto it = state.threshold_cache.find(k);
  if (it == state.threshold_cache.end())
    it = state.threshold_cache.emplace(k, compute_block_thresholds(k, block_pairs(k, config.horizon), config.horizon)).first;
  return it->second;
}

inline void append_block_pairs(SpliceState& state, int k, std::size_t from, std::size_t count) {
  for (const auto& p : block_pairs(k, count, from)) {
    if (!state.used_x.insert(p.x).second) throw Error("adversary: repeated x value in block " + std::to_string(k));
    state.sequence.push_back(p);
  }
}

}  // namespace detail

/// Extends the spliced sequence with block k until the procedure is within `closeness`
/// of h_k, the whole prefix has interval discrepancy and nu_k-discrepancy at most
/// 1/(k+1), and its length is at least k * max(l_{k+1}, l~_{k+1}).
inline void splice_next_block(SpliceState& state, const EstimatorProcedure& phi, int k, const AdversaryConfig& config) {
  if (k != static_cast<int>(state.blocks.size()) + 1) throw PreconditionError("splice_next_block: blocks must be added in order");
  BlockRecord rec;
  rec.k = k;
  rec.thresholds = detail::thresholds_for(state, k, config);
  rec.next_thresholds = detail::thresholds_for(state, k + 1, config);
  rec.start = state.boundaries.back();
  rec.required_length = static_cast<std::size_t>(k) * std::max(rec.next_thresholds.l, rec.next_thresholds.l_tilde);

  const double bound = 1.0 / static_cast<double>(k + 1);
  const auto lambda = DistributionModel::uniform(0.0, 1.0);
  const SignedMeasureModel nu(lambda, RegressionModel::rademacher(k));
  const auto target = fitted_from(RegressionModel::rademacher(k));

  std::size_t r = std::max<std::size_t>(config.first_check, rec.required_length > rec.start ? rec.required_length - rec.start : 1);
  std::size_t appended = 0;
  double best = INFINITY;
  bool ever_close = false;
  while (r <= config.horizon) {
    detail::append_block_pairs(state, k, appended + 1, r - appended);
    appended = r;
    const std::size_t n = rec.start + r;
    rec.checks.push_back(n);
    const std::span<const Observation> prefix(state.sequence.data(), n);
    FittedFunction fit = phi.fit(prefix);
    const L2Value close = l2_uniform(fit, target, config.quadrature_cells);
    best = std::min(best, close.value);
    if (close.value <= config.closeness) {
      ever_close = true;
      const SampleSequence seq(std::vector<Observation>(prefix.begin(), prefix.end()));
      const double delta = sup_interval_discrepancy(seq, lambda);
      const double delta_k = sup_weighted_discrepancy(seq, nu);
      if (delta <= bound && delta_k <= bound && n >= rec.required_length) {
        rec.end = n;
        rec.closeness = close.value;
        rec.closeness_exact = close.exact;
        rec.interval_discrepancy = delta;
        rec.weighted_discrepancy = delta_k;
        state.boundaries.push_back(n);
        state.blocks.push_back(std::move(rec));
        state.fits.push_back(std::move(fit));
        return;
      }
    }
    if (r == config.horizon) break;
    r = std::min(2 * r, config.horizon);
  }
  if (rec.checks.empty()) throw HorizonExhausted("block " + std::to_string(k) + " needs more pairs than the horizon allows");
  if (!ever_close) {
    state.witness = std::make_pair(k, best);
    throw ConsistencyViolationWitness("procedure '" + phi.name + "' stayed farther than " + std::to_string(config.closeness) +
                                          " from h_" + std::to_string(k) + " (best " + std::to_string(best) + ")",
                                      k, best);
  }
  throw HorizonExhausted("block " + std::to_string(k) + " did not meet the discrepancy conditions within the horizon");
}

struct SpanEnvelope {
  int k = 0;
  std::size_t from = 0;  // span is (from, to]
  std::size_t to = 0;
  double bound = 0.0;          // 6 / k
  double max_evaluated = 0.0;  // largest discrepancy actually computed in the span
  std::size_t evaluations = 0;
  bool certified = true;  // every n in the span is covered by an evaluation or the step bound
};

struct TrajectoryPoint {
  std::size_t n = 0;
  double interval_discrepancy = 0.0;  // against the uniform law
  double weighted_discrepancy = 0.0;  // against nu_0
};

struct AdversaryReport {
  std::string procedure;
  int blocks = 0;
  AdversaryConfig config;
  std::vector<std::vector<double>> distances;  // integral |phi_{n_k} - phi_{n_l}|^2
  bool distances_exact = true;
  bool oscillation_ok = true;  // all off-diagonal distances >= 1/20
  std::vector<TrajectoryPoint> trajectory;
  std::vector<SpanEnvelope> envelopes;
  bool envelope_ok = true;
  std::string note = "finite-prefix witness: threshold suprema truncated at the horizon";
};

/// Certifies max over n in (from, to] of the nu_0-discrepancy against `bound` by forward
/// scanning with the same step bound used for the thresholds.
inline SpanEnvelope certify_span(const PrefixDiscrepancy& pd, int k, std::size_t from, std::size_t to, double bound) {
  SpanEnvelope env{k, from, to, bound, 0.0, 0, true};
  const double step = pd.weighted_step();
  std::size_t n = from + 1;
  while (n <= to) {
    const double d = pd.weighted(n);
    ++env.evaluations;
    env.max_evaluated = std::max(env.max_evaluated, d);
    if (d > bound) {
      env.certified = false;
      return env;
    }
    const double slack = bound - d - 1e-12;
    std::size_t skip = 0;
    if (slack > 0.0 && step > 0.0) skip = static_cast<std::size_t>(std::floor(slack * static_cast<double>(n + 1) / step));
    n += skip + 1;
  }
  return env;
}

/// Runs the splice for blocks 1..K and reports pairwise distances between phi at the
/// block boundaries together with the discrepancy envelope against (uniform, h_0).
/// Pairwise distances between the block fits, discrepancy trajectory and span envelopes.
inline AdversaryReport summarize_splice(const std::string& procedure, int blocks, const AdversaryConfig& config,
                                        const SpliceState& state) {
  if (state.fits.size() < static_cast<std::size_t>(blocks) || state.boundaries.size() < static_cast<std::size_t>(blocks) + 1)
    throw PreconditionError("summarize_splice: fewer completed blocks than requested");
  AdversaryReport rep;
  rep.procedure = procedure;
  rep.blocks = blocks;
  rep.config = config;
  const auto K = static_cast<std::size_t>(blocks);
  rep.distances.assign(K, std::vector<double>(K, 0.0));
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = a + 1; b < K; ++b) {
      const auto d = l2_uniform(state.fits[a], state.fits[b], config.quadrature_cells);
      rep.distances[a][b] = rep.distances[b][a] = d.value;
      rep.distances_exact = rep.distances_exact && d.exact;
      const double floor_value = d.exact ? 1.0 / 20.0 : (1.0 / 20.0) * (1.0 - 1e-3);
      if (!(d.value >= floor_value)) rep.oscillation_ok = false;
    }
  }

  const auto lambda = DistributionModel::uniform(0.0, 1.0);
  const PrefixDiscrepancy pd(state.sequence, CumulativeProfile(lambda),
                             CumulativeProfile(SignedMeasureModel(lambda, RegressionModel::rademacher(0))));
  for (std::size_t j = 1; j < state.boundaries.size(); ++j) {
    const std::size_t n = state.boundaries[j];
    rep.trajectory.push_back({n, pd.plain(n), pd.weighted(n)});
  }
  for (std::size_t k = 1; k + 1 < state.boundaries.size(); ++k) {
    const auto env = certify_span(pd, static_cast<int>(k), state.boundaries[k], state.boundaries[k + 1], 6.0 / static_cast<double>(k));
    rep.envelope_ok = rep.envelope_ok && env.certified;
    rep.envelopes.push_back(env);
  }
  return rep;
}

inline AdversaryReport build_adversarial_sequence(const EstimatorProcedure& phi, int blocks, const AdversaryConfig& config,
                                                  SpliceState& state) {
  if (blocks < 2) throw PreconditionError("build_adversarial_sequence: at least two blocks are needed to oscillate");
  for (int k = 1; k <= blocks; ++k) splice_next_block(state, phi, k, config);
  return summarize_splice(phi.name, blocks, config, state);
}

/// Recomputes every stored certificate from the sequence. When `phi` is given the
/// closeness integrals are recomputed too; thresholds are regenerated when asked.
inline CertificateResult verify_splice(const SpliceState& state, const std::optional<EstimatorProcedure>& phi,
                                       const AdversaryConfig& config, bool recompute_thresholds) {
  CertificateResult r;
  auto fail = [&r](std::string msg) {
    r.ok = false;
    r.failures.push_back(std::move(msg));
  };
  std::unordered_set<double> seen;
  for (const auto& p : state.sequence)
    if (!seen.insert(p.x).second) fail("repeated x value " + std::to_string(p.x));
  const auto lambda = DistributionModel::uniform(0.0, 1.0);
  for (const auto& rec : state.blocks) {
    const std::string tag = "block " + std::to_string(rec.k) + ": ";
    if (rec.end > state.sequence.size() || rec.start >= rec.end) {
      fail(tag + "boundaries outside the sequence");
      continue;
    }
    const auto expected = block_pairs(rec.k, rec.end - rec.start);
    for (std::size_t i = 0; i < expected.size(); ++i)
      if (!(state.sequence[rec.start + i] == expected[i])) {
        fail(tag + "pairs differ from the block sequence");
        break;
      }
    const std::span<const Observation> prefix(state.sequence.data(), rec.end);
    const SampleSequence seq(std::vector<Observation>(prefix.begin(), prefix.end()));
    const double bound = 1.0 / static_cast<double>(rec.k + 1);
    if (!(sup_interval_discrepancy(seq, lambda) <= bound)) fail(tag + "interval discrepancy above 1/(k+1)");
    if (!(sup_weighted_discrepancy(seq, SignedMeasureModel(lambda, RegressionModel::rademacher(rec.k))) <= bound))
      fail(tag + "weighted discrepancy above 1/(k+1)");
    BlockThresholds next = rec.next_thresholds;
    if (recompute_thresholds) {
      next = compute_block_thresholds(rec.k + 1, block_pairs(rec.k + 1, config.horizon), config.horizon);
      if (next.l != rec.next_thresholds.l || next.l_tilde != rec.next_thresholds.l_tilde) fail(tag + "stored thresholds differ");
    }
    if (rec.end < static_cast<std::size_t>(rec.k) * std::max(next.l, next.l_tilde)) fail(tag + "length below k * max(l, l~)");
    if (phi) {
      const auto close = l2_uniform(phi->fit(prefix), fitted_from(RegressionModel::rademacher(rec.k)), config.quadrature_cells);
      if (!(close.value <= config.closeness)) fail(tag + "closeness integral above the bound");
    }
  }
  return r;
}

}  // namespace stablereg
