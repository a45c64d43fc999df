#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stablereg/distribution.hpp"
#include "stablereg/errors.hpp"
#include "stablereg/random.hpp"
#include "stablereg/regression_model.hpp"
#include "stablereg/sample_sequence.hpp"

namespace stablereg {

enum class NoiseKind { none, binary, bounded_uniform };

struct Noise {
  NoiseKind kind = NoiseKind::none;
  double delta = 0.0;  // half-width for bounded_uniform

  static Noise none() { return {}; }
  static Noise binary() { return {NoiseKind::binary, 0.0}; }
  static Noise bounded_uniform(double delta) { return {NoiseKind::bounded_uniform, delta}; }
};

namespace detail {

inline std::pair<double, double> value_range(const RegressionModel& m) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (double v : m.breakpoint_values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (const auto& p : m.pieces()) {
    lo = std::min({lo, p.at_lo, p.at_hi});
    hi = std::max({hi, p.at_lo, p.at_hi});
  }
  return {lo, hi};
}

inline void check_noise(const RegressionModel& m, const Noise& noise) {
  if (noise.kind == NoiseKind::binary) {
    const auto [lo, hi] = value_range(m);
    if (lo < 0.0 || hi > 1.0) throw PreconditionError("binary noise requires 0 <= m(x) <= 1");
  }
  if (noise.kind == NoiseKind::bounded_uniform && !(noise.delta >= 0.0 && std::isfinite(noise.delta)))
    throw PreconditionError("bounded-uniform noise requires a finite delta >= 0");
}

inline double respond(double mean, const Noise& noise, RandomSource& src) {
  switch (noise.kind) {
    case NoiseKind::none: return mean;
    case NoiseKind::binary: return src.uniform() < mean ? 1.0 : 0.0;
    case NoiseKind::bounded_uniform: return mean + noise.delta * (2.0 * src.uniform() - 1.0);
  }
  return mean;
}

}  // namespace detail

/// Base-2 radical inverse: 1 -> 0.5, 2 -> 0.25, 3 -> 0.75, 4 -> 0.125, ...
inline double van_der_corput(std::uint64_t i) {
  double x = 0.0;
  double scale = 0.5;
  while (i != 0) {
    if (i & 1U) x += scale;
    scale *= 0.5;
    i >>= 1U;
  }
  return x;
}

/// i.i.d. x from mu by inversion, E[y | x] = m(x) under the chosen noise.
inline SampleSequence gen_iid(const DistributionModel& mu, const RegressionModel& m, Noise noise, std::size_t n,
                              RandomSource src) {
  detail::check_noise(m, noise);
  std::vector<Observation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = mu.quantile(src.uniform());
    out.push_back({x, detail::respond(m(x), noise, src)});
  }
  return SampleSequence(std::move(out));
}

/// Finite-state Markov chain with states embedded in [0, 1].
class MarkovChain {
 public:
  MarkovChain(std::vector<double> states, std::vector<std::vector<double>> transition)
      : states_(std::move(states)), transition_(std::move(transition)) {
    const std::size_t s = states_.size();
    if (s == 0) throw PreconditionError("MarkovChain: no states");
    if (transition_.size() != s) throw PreconditionError("MarkovChain: transition matrix must be square");
    for (std::size_t i = 0; i < s; ++i) {
      if (!(states_[i] >= 0.0 && states_[i] <= 1.0)) throw PreconditionError("MarkovChain: states must lie in [0, 1]");
      for (std::size_t j = 0; j < i; ++j)
        if (states_[i] == states_[j]) throw PreconditionError("MarkovChain: states must be distinct");
      if (transition_[i].size() != s) throw PreconditionError("MarkovChain: transition matrix must be square");
      double row = 0.0;
      for (double p : transition_[i]) {
        if (!(p >= 0.0)) throw PreconditionError("MarkovChain: negative transition probability");
        row += p;
      }
      if (std::fabs(row - 1.0) > 1e-12) throw PreconditionError("MarkovChain: rows must sum to 1");
    }
    check_irreducible_aperiodic();
    stationary_ = solve_stationary();
  }

  const std::vector<double>& states() const noexcept { return states_; }
  const std::vector<std::vector<double>>& transition() const noexcept { return transition_; }
  const std::vector<double>& stationary() const noexcept { return stationary_; }

  DistributionModel stationary_distribution() const {
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i < states_.size(); ++i) atoms.push_back({states_[i], stationary_[i]});
    return DistributionModel(std::move(atoms), {});
  }

  /// Index sampled from a probability row by inversion.
  static std::size_t draw(const std::vector<double>& row, double u) {
    double acc = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      acc += row[i];
      if (u < acc) return i;
    }
    // u landed in the rounding gap above the last positive entry
    for (std::size_t i = row.size(); i-- > 0;)
      if (row[i] > 0.0) return i;
    return row.size() - 1;
  }

 private:
  void check_irreducible_aperiodic() const {
    const std::size_t s = states_.size();
    // BFS levels from state 0 on the forward graph; reachability both ways gives irreducibility.
    auto reach = [&](bool forward) {
      std::vector<long> level(s, -1);
      std::vector<std::size_t> queue{0};
      level[0] = 0;
      for (std::size_t q = 0; q < queue.size(); ++q) {
        const std::size_t u = queue[q];
        for (std::size_t v = 0; v < s; ++v) {
          const double p = forward ? transition_[u][v] : transition_[v][u];
          if (p > 0.0 && level[v] < 0) {
            level[v] = level[u] + 1;
            queue.push_back(v);
          }
        }
      }
      return level;
    };
    const auto fwd = reach(true);
    const auto bwd = reach(false);
    for (std::size_t i = 0; i < s; ++i)
      if (fwd[i] < 0 || bwd[i] < 0) throw PreconditionError("MarkovChain: transition matrix is reducible");
    // Period = gcd over edges u -> v of level(u) + 1 - level(v).
    long period = 0;
    for (std::size_t u = 0; u < s; ++u)
      for (std::size_t v = 0; v < s; ++v)
        if (transition_[u][v] > 0.0) period = std::gcd(period, std::labs(fwd[u] + 1 - fwd[v]));
    if (period != 1) throw PreconditionError("MarkovChain: transition matrix is periodic");
  }

  std::vector<double> solve_stationary() const {
    const auto s = static_cast<Eigen::Index>(states_.size());
    Eigen::MatrixXd a(s + 1, s);
    for (Eigen::Index i = 0; i < s; ++i)
      for (Eigen::Index j = 0; j < s; ++j)
        a(i, j) = transition_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] - (i == j ? 1.0 : 0.0);
    a.row(s).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + 1);
    rhs(s) = 1.0;
    const Eigen::VectorXd pi = a.colPivHouseholderQr().solve(rhs);
    std::vector<double> out(static_cast<std::size_t>(s));
    double total = 0.0;
    for (Eigen::Index i = 0; i < s; ++i) {
      out[static_cast<std::size_t>(i)] = std::max(pi(i), 0.0);
      total += out[static_cast<std::size_t>(i)];
    }
    for (double& p : out) p /= total;
    return out;
  }

  std::vector<double> states_;
  std::vector<std::vector<double>> transition_;
  std::vector<double> stationary_;
};

/// Stationary ergodic Markov path started from its stationary law; y = m(x) under noise.
inline SampleSequence gen_markov(const MarkovChain& chain, const RegressionModel& m, Noise noise, std::size_t n,
                                 RandomSource src) {
  detail::check_noise(m, noise);
  std::vector<Observation> out;
  out.reserve(n);
  std::size_t state = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = i == 0 ? chain.stationary() : chain.transition()[state];
    state = MarkovChain::draw(row, src.uniform());
    const double x = chain.states()[state];
    out.push_back({x, detail::respond(m(x), noise, src)});
  }
  return SampleSequence(std::move(out));
}

/// x_i = van der Corput point i (i = 1..n), y_i = m(x_i). Limiting distribution: uniform.
inline SampleSequence gen_deterministic(const RegressionModel& m, std::size_t n) {
  std::vector<Observation> out;
  out.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) {
    const double x = van_der_corput(i);
    out.push_back({x, m(x)});
  }
  return SampleSequence(std::move(out));
}

/// x_i = -1/(i+1), y_i = 0: half-line frequencies converge to the point mass at 0 while
/// the frequency of {0} itself stays 0.
inline SampleSequence gen_atom_approach(std::size_t n) {
  std::vector<Observation> out;
  out.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) out.push_back({-1.0 / static_cast<double>(i + 1), 0.0});
  return SampleSequence(std::move(out));
}

struct MixtureComponent {
  DistributionModel mu;
  RegressionModel m;
  double weight;
};

/// Draws one component by weight, then an i.i.d. path from it.
inline std::pair<SampleSequence, std::size_t> gen_nonergodic_mixture(const std::vector<MixtureComponent>& components, Noise noise,
                                                                     std::size_t n, RandomSource src) {
  if (components.empty()) throw PreconditionError("mixture: no components");
  std::vector<double> weights;
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0)) throw PreconditionError("mixture: weights must be nonnegative");
    weights.push_back(c.weight);
    total += c.weight;
  }
  if (std::fabs(total - 1.0) > 1e-12) throw PreconditionError("mixture: weights must sum to 1");
  const std::size_t chosen = MarkovChain::draw(weights, src.uniform());
  const auto& c = components[chosen];
  return {gen_iid(c.mu, c.m, noise, n, src.derive(chosen)), chosen};
}

enum class GeneratorKind { iid, markov, deterministic, atom_approach, mixture };

/// Everything needed to reproduce a generated sequence.
struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::deterministic;
  std::optional<DistributionModel> distribution;  // iid
  std::optional<RegressionModel> regression;      // iid, markov, deterministic
  std::optional<MarkovChain> chain;                // markov
  std::vector<MixtureComponent> components;        // mixture
  Noise noise;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

/// A generated prefix together with the (mu, m) it is stable for.
struct GeneratedSequence {
  SampleSequence sequence;
  DistributionModel mu;
  RegressionModel m;
  std::optional<std::size_t> component;
};

inline GeneratedSequence generate(const GeneratorSpec& spec) {
  auto need = [](const auto& opt, const char* what) -> const auto& {
    if (!opt) throw PreconditionError(std::string("generator spec lacks ") + what);
    return *opt;
  };
  switch (spec.kind) {
    case GeneratorKind::iid: {
      const auto& mu = need(spec.distribution, "a distribution");
      const auto& m = need(spec.regression, "a regression");
      return {gen_iid(mu, m, spec.noise, spec.n, RandomSource(spec.seed)), mu, m, std::nullopt};
    }
    case GeneratorKind::markov: {
      const auto& chain = need(spec.chain, "a Markov chain");
      const auto& m = need(spec.regression, "a regression");
      return {gen_markov(chain, m, spec.noise, spec.n, RandomSource(spec.seed)), chain.stationary_distribution(), m, std::nullopt};
    }
    case GeneratorKind::deterministic: {
      const auto& m = need(spec.regression, "a regression");
      return {gen_deterministic(m, spec.n), DistributionModel::uniform(0.0, 1.0), m, std::nullopt};
    }
    case GeneratorKind::atom_approach:
      return {gen_atom_approach(spec.n), DistributionModel::point_mass(0.0), RegressionModel::constant(0.0), std::nullopt};
    case GeneratorKind::mixture: {
      auto [seq, chosen] = gen_nonergodic_mixture(spec.components, spec.noise, spec.n, RandomSource(spec.seed));
      const auto& c = spec.components[chosen];
      return {std::move(seq), c.mu, c.m, chosen};
    }
  }
  throw PreconditionError("unknown generator kind");
}

}  // namespace stablereg
