// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "random_models.hpp"
#include "stablereg/io.hpp"
#include "stablereg/stablereg.hpp"

using namespace stablereg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

const DistributionModel kLambda = DistributionModel::uniform(0.0, 1.0);

// Every estimator run made by the suite, for the certificate replay.
struct EstimatorRun {
  std::string name;
  std::vector<Observation> pairs;
  EstimatorCheckpoint checkpoint;
};
std::vector<EstimatorRun> g_runs;

// Serialized outputs of the pinned runs, for the reproducibility check.
std::map<std::string, std::string> g_outputs;

// ---------------------------------------------------------------------------
// Pinned runs

struct CurveRun {
  double early = 0.0;
  double late = 0.0;
  std::size_t early_kappa = 0;
  std::size_t late_kappa = 0;
  std::string bytes;
};

CurveRun curve_run(const std::string& name, const std::vector<Observation>& pairs, const VariationBudget& alpha, const RegressionModel& m,
                   std::size_t early, std::size_t late) {
  StreamingEstimator est(alpha);
  CurveRun r;
  std::ostringstream csv;
  csv << "n,kappa,error\n";
  for (std::size_t i = 0; i < late; ++i) {
    est.ingest(pairs[i]);
    const std::size_t n = i + 1;
    if (n == early || n == late) {
      const double e = l2_error_exact(est.fixed_sample_estimate(n), m, kLambda);
      csv << n << ',' << est.kappa(n) << ',' << io::format_double(e) << '\n';
      (n == early ? r.early : r.late) = e;
      (n == early ? r.early_kappa : r.late_kappa) = est.kappa(n);
    }
  }
  r.bytes = csv.str() + io::dump(io::to_json(est.checkpoint()));
  g_runs.push_back({name, std::vector<Observation>(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(late)), est.checkpoint()});
  return r;
}

std::vector<Observation> vdc_pairs(const RegressionModel& m, std::size_t n) {
  const auto s = gen_deterministic(m, n);
  return {s.pairs().begin(), s.pairs().end()};
}

struct ConsistencyCase {
  std::string name;
  RegressionModel m;
  VariationBudget alpha;
  double pinned_early;
  double pinned_late;
};

std::vector<ConsistencyCase> consistency_cases() {
  const std::vector<Knot> knots{{0.2, 0.1, 0.1}, {0.45, 0.3, 0.8}, {0.7, 0.9, 0.9}};
  const std::vector<std::pair<double, double>> identity{{0.0, 0.0}, {1.0, 1.0}};
  // Frozen from the first implementation.
  return {{"rademacher-1", RegressionModel::rademacher(1), VariationBudget::constant(2.0), 0.03125, 6.103515625e-05},
          {"monotone", RegressionModel::monotone(knots, 1.0), VariationBudget::constant(2.0), 0.032244960123697923, 6.1638997008645817e-05},
          {"lipschitz", RegressionModel::lipschitz(identity, 1.0), VariationBudget::affine(1.0, 0.1), 0.32360013326009113,
           5.7694521620018799e-05}};
}

CurveRun run_case(const ConsistencyCase& c) { return curve_run("case " + c.name, vdc_pairs(c.m, 1 << 16), c.alpha, c.m, 1 << 7, 1 << 16); }

struct JunkDesign {
  std::string name;
  std::vector<Observation> junk;
};

// Prefixes of 100 pairs with labels in the response range {0, 1} of h_1.
std::vector<JunkDesign> junk_designs() {
  const auto h1 = RegressionModel::rademacher(1);
  std::vector<JunkDesign> out;
  JunkDesign flip{"flipped labels at random x", {}};
  RandomSource src(77);
  for (int i = 0; i < 100; ++i) {
    const double x = src.uniform();
    flip.junk.push_back({x, 1.0 - h1(x)});
  }
  out.push_back(flip);
  JunkDesign flip_vdc{"flipped labels on the design points", {}};
  for (unsigned long i = 1; i <= 100; ++i) flip_vdc.junk.push_back({van_der_corput(i), 1.0 - h1(van_der_corput(i))});
  out.push_back(flip_vdc);
  JunkDesign alternating{"alternating labels on (0, 0.5)", {}};
  for (int i = 1; i <= 100; ++i) alternating.junk.push_back({0.5 * i / 101.0, static_cast<double>(i % 2)});
  out.push_back(alternating);
  JunkDesign flip_grid{"flipped labels on a regular grid", {}};
  for (int i = 1; i <= 100; ++i) {
    const double x = (2.0 * i - 1.0) / 200.0;
    flip_grid.junk.push_back({x, 1.0 - h1(x)});
  }
  out.push_back(flip_grid);
  JunkDesign cluster{"constant labels in (0, 0.01]", {}};
  for (int i = 1; i <= 100; ++i) cluster.junk.push_back({0.01 * i / 100.0, 0.0});
  out.push_back(cluster);
  return out;
}

AdversaryReport adversary_run(SpliceState& state) {
  AdversaryConfig config;
  config.horizon = std::size_t{1} << 20;
  return build_adversarial_sequence(histogram_procedure(), 4, config, state);
}

// ---------------------------------------------------------------------------
// Criteria

Outcome discrepancy_oracle() {
  RandomSource src(4242);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto m = testing::random_mixture(src);
    const std::size_t n = 1 + static_cast<std::size_t>(src.uniform() * 50.0);
    std::vector<double> xs;
    std::vector<Observation> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = src.uniform();
      double x;
      if (u < 0.2 && !m.model.atoms().empty())
        x = m.model.atoms()[static_cast<std::size_t>(src.uniform() * static_cast<double>(m.model.atoms().size()))].location;
      else if (u < 0.3 && !m.model.segments().empty())
        x = m.model.segments()[0].b;
      else
        x = m.model.quantile(src.uniform());
      xs.push_back(x);
      pairs.push_back({x, 0.0});
    }
    const double fast = sup_interval_discrepancy(SampleSequence(pairs), m.model);
    worst = std::max(worst, std::fabs(fast - oracle::interval_discrepancy(xs, m.plain)));
  }
  return {worst <= 1e-9, "200 sequences, max |fast - brute force| = " + fmt(worst)};
}

Outcome rademacher_facts() {
  double worst_l2 = 0.0;
  for (int j = 1; j <= 8; ++j)
    for (int k = j + 1; k <= 8; ++k)
      worst_l2 = std::max(worst_l2, std::fabs(l2_distance_exact(RegressionModel::rademacher(j), RegressionModel::rademacher(k), kLambda) - 0.5));
  RandomSource src(19);
  double worst_ratio = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double a = -0.25 + 1.5 * src.uniform();
    const double b = -0.25 + 1.5 * src.uniform();
    const Interval A = t % 10 == 0 ? Interval::left_unbounded(b) : Interval::bounded(std::min(a, b), std::max(a, b) + 1e-9);
    for (int k = 1; k <= 10; ++k) worst_ratio = std::max(worst_ratio, std::fabs(nu_k(k, A) - nu_k(0, A)) / std::ldexp(1.0, -k + 1));
  }
  return {worst_l2 <= 1e-12 && worst_ratio <= 1.0 + 1e-12,
          "max |L2(h_j, h_k) - 0.5| = " + fmt(worst_l2) + "; max |nu_k - nu_0| / 2^(1-k) = " + fmt(worst_ratio) + " over 1000 intervals"};
}

Outcome estimator_certificates() {
  std::size_t checked = 0, failures = 0;
  for (const auto& run : g_runs) {
    const auto& cp = run.checkpoint;
    const auto r = verify_estimator_certificates(cp, run.pairs);
    if (!r.ok) {
      ++failures;
      std::cout << "    certificate failure in " << run.name << ": " << r.failures.front() << '\n';
    }
    // Independent recomputation of the strict bound.
    for (std::size_t k = 1; k < cp.tau.size(); ++k) {
      const auto h = histogram_estimate(run.pairs, static_cast<int>(k), cp.tau[k]);
      for (std::int64_t i = 1; i <= static_cast<std::int64_t>(k); ++i)
        if (!(total_variation_window(h.fn, i) < 4.0 * cp.budget(i))) ++failures;
      ++checked;
    }
  }
  std::size_t mismatches = 0;
  const std::vector<Knot> knots{{0.2, 0.1, 0.1}, {0.45, 0.3, 0.8}, {0.7, 0.9, 0.9}};
  const std::vector<std::pair<double, double>> identity{{0.0, 0.0}, {1.0, 1.0}};
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    RegressionModel m = RegressionModel::rademacher(1 + static_cast<int>(seed % 3));
    if (seed % 5 == 3) m = RegressionModel::monotone(knots, 1.0);
    if (seed % 5 == 4) m = RegressionModel::lipschitz(identity, 1.0);
    const Noise noise = seed % 4 == 0 ? Noise::none() : Noise::bounded_uniform(0.1 * static_cast<double>(seed % 4));
    const auto alpha = seed % 2 ? VariationBudget::constant(seed % 3 == 0 ? 0.75 : 2.0) : VariationBudget::affine(1.0, 0.1);
    const std::size_t n = 2000 + 80 * seed;
    const auto s = gen_iid(kLambda, m, noise, n, RandomSource(seed));
    StreamingEstimator est(alpha);
    est.ingest_all(s.pairs());
    if (est.stopping_times() != batch_stopping_times(s.pairs(), alpha)) ++mismatches;
  }
  return {failures == 0 && mismatches == 0, std::to_string(checked) + " frozen estimates from " + std::to_string(g_runs.size()) +
                                                " runs, " + std::to_string(failures) + " certificate failures; streaming vs batch: " +
                                                std::to_string(mismatches) + " mismatches in 100 runs"};
}

Outcome consistency(const ConsistencyCase& c, double& seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_case(c);
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  g_outputs["case " + c.name] = r.bytes;
  const bool pinned = std::fabs(r.early - c.pinned_early) <= 1e-12 * c.pinned_early && std::fabs(r.late - c.pinned_late) <= 1e-12 * c.pinned_late;
  return {r.late < 0.01 && r.late < r.early && pinned && seconds < 120.0,
          "error at 2^7 = " + fmt(r.early) + " (kappa " + std::to_string(r.early_kappa) + "), at 2^16 = " + fmt(r.late) + " (kappa " +
              std::to_string(r.late_kappa) + ")" + (pinned ? "" : ", differs from the frozen pin")};
}

// Same cases on noisy i.i.d. designs; reported, not judged.
void noisy_design_report() {
  const std::vector<Knot> knots{{0.2, 0.1, 0.1}, {0.45, 0.3, 0.8}, {0.7, 0.9, 0.9}};
  const std::vector<std::pair<double, double>> identity{{0.0, 0.0}, {1.0, 1.0}};
  const std::vector<std::tuple<std::string, RegressionModel, VariationBudget, double>> cases{
      {"monotone, noise +-0.25", RegressionModel::monotone(knots, 1.0), VariationBudget::constant(2.0), 0.25},
      {"lipschitz, noise +-0.5", RegressionModel::lipschitz(identity, 1.0), VariationBudget::affine(1.0, 0.1), 0.5}};
  for (const auto& [name, m, alpha, delta] : cases) {
    int pass = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto s = gen_iid(kLambda, m, Noise::bounded_uniform(delta), 1 << 16, RandomSource(seed));
      const std::vector<Observation> pairs(s.pairs().begin(), s.pairs().end());
      const auto r = curve_run("iid " + name + " seed " + std::to_string(seed), pairs, alpha, m, 1 << 7, 1 << 16);
      pass += r.late < 0.01 && r.late < r.early;
    }
    std::cout << "INFO AC4 i.i.d. " << name << ": " << pass << "/20 seeds meet the 2^16 bound\n";
  }
}

Outcome atom_approach_pathology() {
  const std::size_t n = 100;
  const auto g = generate(GeneratorSpec{GeneratorKind::atom_approach, {}, {}, {}, {}, Noise::none(), n, 0});
  bool atom_zero = true;
  for (std::size_t m = 1; m <= n; ++m) atom_zero = atom_zero && empirical_atom_mass(gen_atom_approach(m), 0.0) == 0.0;
  const std::vector<std::size_t> cps{1, 10, 50, 100};
  const auto r = stability_diagnostic(g.sequence, g.mu, SignedMeasureModel(g.mu, g.m), cps);
  const double cdf = r.checkpoints.back().cdf_deviation;
  g_outputs["atom_approach"] = io::dump(io::to_json(r));
  return {cdf < 0.02 && atom_zero && r.non_stable_evidence,
          "CDF deviation at n = 100: " + fmt(cdf) + "; atom mass at 0 stays 0: " + (atom_zero ? "yes" : "no") +
              "; flag: " + (r.non_stable_evidence ? "raised" : "not raised")};
}

Outcome adversary(double& seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  SpliceState state;
  const auto rep = adversary_run(state);
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  g_outputs["adversary"] = io::dump(io::to_json(rep, state));
  double min_d = INFINITY;
  for (std::size_t a = 0; a < rep.distances.size(); ++a)
    for (std::size_t b = a + 1; b < rep.distances.size(); ++b) min_d = std::min(min_d, rep.distances[a][b]);
  double worst_env = 0.0;
  for (const auto& e : rep.envelopes) worst_env = std::max(worst_env, e.max_evaluated / e.bound);
  const auto replay = verify_splice(state, histogram_procedure(), rep.config, false);
  std::ostringstream bounds;
  for (std::size_t i = 1; i < state.boundaries.size(); ++i) bounds << (i > 1 ? "," : "") << state.boundaries[i];
  return {rep.oscillation_ok && rep.distances_exact && rep.envelope_ok && replay.ok && seconds < 600.0,
          "boundaries " + bounds.str() + "; min pairwise distance " + fmt(min_d) + (rep.distances_exact ? " (exact)" : " (quadrature)") +
              "; max span discrepancy / (6/k) = " + fmt(worst_env) + "; replay " + (replay.ok ? "ok" : "failed")};
}

Outcome prefix_invariance() {
  const auto h1 = RegressionModel::rademacher(1);
  const auto alpha = VariationBudget::constant(2.0);
  const std::size_t n = 100000;
  const auto clean_pairs = vdc_pairs(h1, n);
  const auto clean = curve_run("prefix: clean", clean_pairs, alpha, h1, 1 << 7, n);
  double worst = 1.0;
  std::string detail = "clean error " + fmt(clean.late);
  for (const auto& d : junk_designs()) {
    std::vector<Observation> pairs = d.junk;
    pairs.insert(pairs.end(), clean_pairs.begin(), clean_pairs.end());
    const auto r = curve_run("prefix: " + d.name, pairs, alpha, h1, 1 << 7, n);
    g_outputs["prefix " + d.name] = r.bytes;
    const double ratio = std::max(r.late / clean.late, clean.late / r.late);
    worst = std::max(worst, ratio);
    std::cout << "    " << d.name << ": error " << fmt(r.late) << " (kappa " << r.late_kappa << "), ratio " << fmt(ratio) << '\n';
  }
  return {worst <= 2.0, detail + "; worst ratio over 5 junk designs " + fmt(worst)};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(STABLEREG_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility() {
  std::size_t compared = 0;
  std::vector<std::string> differing;
  // In-process: repeat every pinned run.
  auto check = [&](const std::string& key, const std::string& again) {
    ++compared;
    if (g_outputs.at(key) != again) differing.push_back(key);
  };
  for (const auto& c : consistency_cases()) check("case " + c.name, run_case(c).bytes);
  {
    const auto g = generate(GeneratorSpec{GeneratorKind::atom_approach, {}, {}, {}, {}, Noise::none(), 100, 0});
    const std::vector<std::size_t> cps{1, 10, 50, 100};
    check("atom_approach", io::dump(io::to_json(stability_diagnostic(g.sequence, g.mu, SignedMeasureModel(g.mu, g.m), cps))));
  }
  {
    SpliceState state;
    const auto rep = adversary_run(state);
    check("adversary", io::dump(io::to_json(rep, state)));
  }
  const auto clean_pairs = vdc_pairs(RegressionModel::rademacher(1), 100000);
  for (const auto& d : junk_designs()) {
    std::vector<Observation> pairs = d.junk;
    pairs.insert(pairs.end(), clean_pairs.begin(), clean_pairs.end());
    check("prefix " + d.name, curve_run("prefix again: " + d.name, pairs, VariationBudget::constant(2.0), RegressionModel::rademacher(1), 1 << 7, 100000).bytes);
  }

  // Through the command line: two executions per subcommand.
  const fs::path dir = fs::temp_directory_path() / "stablereg-acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  };
  const auto gen = write("generate.json", R"({"generator": {"kind": "iid", "n": 20000, "seed": 11, "distribution": "uniform",
    "regression": {"kind": "rademacher", "k": 2}, "noise": {"kind": "bounded_uniform", "delta": 0.3}}})");
  const auto est = write("estimate.json", R"({"sequence": "run/generate/sequence.csv", "budget": {"kind": "constant", "value": 2},
    "truth": {"distribution": "uniform", "regression": {"kind": "rademacher", "k": 2}}})");
  const auto adv = write("adversary.json", R"({"procedure": "histogram", "blocks": 4, "horizon": 1048576})");
  const auto swp = write("sweep.json", R"({"generator": {"kind": "iid", "n": 8192, "distribution": "uniform",
    "regression": {"kind": "lipschitz", "points": [[0, 0], [1, 1]], "constant": 1}, "noise": {"kind": "bounded_uniform", "delta": 0.5}},
    "budget": {"kind": "affine", "C": 1, "epsilon": 0.1}, "seed_count": 4})");
  const std::vector<std::pair<std::string, std::vector<std::string>>> jobs{{"generate --config " + gen, {"sequence.csv", "diagnostic.json"}},
                                                                           {"estimate --config " + est, {"checkpoint.json", "curve.csv"}},
                                                                           {"adversary --config " + adv, {"report.json", "sequence.csv"}},
                                                                           {"sweep --config " + swp, {"sweep.csv", "sweep.json"}}};
  int cli_failures = 0;
  for (int pass = 0; pass < 2; ++pass) {
    // The estimate config reads the sequence written by the first generate run.
    fs::create_directories(dir / "run");
    for (const auto& [cmd, files] : jobs) {
      const std::string sub = cmd.substr(0, cmd.find(' '));
      const fs::path out = pass == 0 ? dir / "run" / sub : dir / "again" / sub;
      if (run_cli(cmd + " --out " + out.string()) != 0) ++cli_failures;
    }
  }
  for (const auto& [cmd, files] : jobs) {
    const std::string sub = cmd.substr(0, cmd.find(' '));
    for (const auto& f : files) {
      ++compared;
      const auto a = slurp(dir / "run" / sub / f);
      if (a.empty() || a != slurp(dir / "again" / sub / f)) differing.push_back("cli " + sub + "/" + f);
    }
  }
  fs::remove_all(dir);
  std::string detail = std::to_string(compared) + " outputs compared across two executions";
  if (cli_failures) detail += ", " + std::to_string(cli_failures) + " command failures";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty() && cli_failures == 0, detail};
}

}  // namespace

int main() {
  bool all = true;
  auto report = [&all](const std::string& id, const std::function<Outcome(double&)>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    double inner = -1.0;
    const Outcome o = f(inner);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.pass;
    std::printf("%s %s  %s  [%.2f s]\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(), inner >= 0.0 ? inner : secs);
    std::fflush(stdout);
  };
  report("AC1", [](double& s) {
    const auto t0 = std::chrono::steady_clock::now();
    auto o = discrepancy_oracle();
    s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.pass = o.pass && s < 30.0;
    return o;
  });
  report("AC2", [](double&) { return rademacher_facts(); });
  // Runs that AC3 replays are produced by AC4 and AC7, so it is reported after them.
  std::vector<std::pair<std::string, Outcome>> deferred;
  const char* tags[] = {"AC4(a)", "AC4(b)", "AC4(c)"};
  const auto cases = consistency_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) report(tags[i], [&](double& s) { return consistency(cases[i], s); });
  noisy_design_report();
  report("AC5", [](double&) { return atom_approach_pathology(); });
  report("AC6", [](double& s) { return adversary(s); });
  report("AC7", [](double&) { return prefix_invariance(); });
  report("AC3", [](double&) { return estimator_certificates(); });
  report("AC8", [](double&) { return reproducibility(); });
  std::printf("%s\n", all ? "ALL PASS" : "SOME CRITERIA FAILED");
  return all ? 0 : 1;
}
