#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>

#include "stablereg/stablereg.hpp"

namespace stablereg::cli {

namespace fs = std::filesystem;
using io::json;

namespace exit_code {
constexpr int ok = 0;
constexpr int verify_failed = 1;
constexpr int config = 2;
constexpr int generator = 3;
constexpr int stall = 4;
constexpr int witness = 5;
constexpr int horizon = 6;
}  // namespace exit_code

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> horizon;
};

/// A parsed config file plus the directory relative paths inside it resolve against.
struct Config {
  json doc;
  fs::path dir;

  fs::path path_of(const std::string& key, const std::string& where) const {
    const fs::path p = io::field<std::string>(doc, key, where);
    return p.is_absolute() ? p : dir / p;
  }
};

inline Config load_config(const std::string& path) {
  return {io::read_json_file(path), fs::path(path).parent_path()};
}

inline fs::path output_dir(const Options& opt) {
  fs::path dir(opt.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

inline void write_csv(const fs::path& path, std::span<const Observation> pairs) {
  std::ostringstream out;
  io::write_sequence_csv(out, pairs);
  io::write_text_file(path.string(), out.str());
}

inline std::vector<std::size_t> checkpoints_for(const json& doc, std::size_t n, const std::string& where) {
  std::vector<std::size_t> cps = doc.contains("checkpoints") ? io::field<std::vector<std::size_t>>(doc, "checkpoints", where)
                                                             : (n == 0 ? std::vector<std::size_t>{} : power_of_two_checkpoints(n));
  std::erase_if(cps, [n](std::size_t c) { return c == 0 || c > n; });
  for (std::size_t i = 1; i < cps.size(); ++i)
    if (cps[i] <= cps[i - 1]) throw ConfigError("checkpoints in " + where + " must increase");
  return cps;
}

// ---------------------------------------------------------------------------
// External procedures: the prefix CSV, a blank line, then one query x per line go to the
// command's standard input; it answers with one `x value` line per query, in order.

/// Query points of the midpoint quadrature on [0, 1] at `cells` and twice as many cells.
inline std::vector<double> quadrature_queries(std::size_t cells) {
  std::vector<double> xs;
  xs.reserve(3 * cells);
  for (std::size_t c : {cells, 2 * cells}) {
    const double h = 1.0 / static_cast<double>(c);
    for (std::size_t i = 0; i < c; ++i) xs.push_back(0.0 + (static_cast<double>(i) + 0.5) * h);
  }
  return xs;
}

inline std::vector<double> run_external(const std::string& command, std::span<const Observation> prefix, std::span<const double> queries) {
  char name[] = "/tmp/stablereg-phi-XXXXXX";
  const int fd = mkstemp(name);
  if (fd < 0) throw Error("cannot create a temporary file for the external procedure");
  close(fd);
  const std::string path = name;
  {
    std::ostringstream in;
    io::write_sequence_csv(in, prefix);
    in << '\n';
    for (double x : queries) in << io::format_double(x) << '\n';
    io::write_text_file(path, in.str());
  }
  FILE* pipe = popen((command + " < '" + path + "'").c_str(), "r");
  if (!pipe) {
    std::remove(path.c_str());
    throw Error("cannot start external procedure: " + command);
  }
  std::vector<double> values;
  values.reserve(queries.size());
  std::string line;
  char buf[256];
  std::string error;
  while (std::fgets(buf, sizeof buf, pipe)) {
    line += buf;
    if (line.back() != '\n') continue;
    line.pop_back();
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && error.empty()) {
      const auto sp = line.find(' ');
      try {
        if (sp == std::string::npos) throw ConfigError("expected 'x value'");
        const std::size_t i = values.size();
        const double x = io::parse_double(std::string_view(line).substr(0, sp), "external reply");
        if (i >= queries.size() || std::fabs(x - queries[i]) > 1e-12) throw ConfigError("reply out of order");
        values.push_back(io::parse_double(std::string_view(line).substr(sp + 1), "external reply"));
      } catch (const ConfigError& e) {
        error = std::string(e.what()) + " at line '" + line + "'";
      }
    }
    line.clear();
  }
  const int status = pclose(pipe);
  std::remove(path.c_str());
  if (!error.empty()) throw Error("external procedure: " + error);
  if (status != 0) throw Error("external procedure exited with status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : status));
  if (values.size() != queries.size())
    throw Error("external procedure answered " + std::to_string(values.size()) + " of " + std::to_string(queries.size()) + " queries");
  return values;
}

inline EstimatorProcedure external_procedure(const std::string& command, std::size_t cells) {
  auto queries = std::make_shared<const std::vector<double>>(quadrature_queries(cells));
  return {"external", [command, queries](std::span<const Observation> prefix) {
            const auto values = run_external(command, prefix, *queries);
            auto table = std::make_shared<std::unordered_map<double, double>>();
            for (std::size_t i = 0; i < values.size(); ++i) table->emplace((*queries)[i], values[i]);
            return FittedFunction{[table](double x) {
                                    const auto it = table->find(x);
                                    if (it == table->end()) throw Error("external procedure was not queried at " + io::format_double(x));
                                    return it->second;
                                  },
                                  std::nullopt};
          }};
}

/// `"histogram"`, `"oracle"`, `"constant"` (0.5) or an object with a `kind` key.
inline EstimatorProcedure procedure_from_json(const json& j, std::size_t cells) {
  const std::string where = "procedure";
  const std::string kind = j.is_string() ? j.get<std::string>() : io::field<std::string>(j, "kind", where);
  if (kind == "histogram") return histogram_procedure();
  if (kind == "oracle")
    return oracle_procedure(io::field_or<int>(j, "max_index", 20, where), io::field_or<std::size_t>(j, "window", 64, where));
  if (kind == "constant") return constant_procedure(io::field_or<double>(j, "value", 0.5, where));
  if (kind == "external") return external_procedure(io::field<std::string>(j, "command", where), cells);
  throw ConfigError("unknown procedure kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// generate

inline int cmd_generate(const Options& opt) {
  const auto cfg = load_config(opt.config);
  json gen = io::require(cfg.doc, "generator", "generate config");
  if (opt.seed) gen["seed"] = *opt.seed;
  const auto spec = io::generator_from_json(gen);
  const auto g = generate(spec);
  const auto cps = checkpoints_for(cfg.doc, g.sequence.size(), "generate config");
  const auto report = stability_diagnostic(g.sequence, g.mu, SignedMeasureModel(g.mu, g.m), cps);
  const auto dir = output_dir(opt);
  write_csv(dir / "sequence.csv", g.sequence.pairs());
  json out = io::to_json(report);
  out["generator"] = gen;
  out["limit_distribution"] = io::to_json(g.mu);
  if (g.component) out["component"] = *g.component;
  io::write_text_file((dir / "diagnostic.json").string(), io::dump(out));
  std::cout << "wrote " << g.sequence.size() << " pairs; non-stable evidence: " << (report.non_stable_evidence ? "yes" : "no") << '\n';
  return exit_code::ok;
}

// ---------------------------------------------------------------------------
// estimate

inline int cmd_estimate(const Options& opt) {
  const std::string where = "estimate config";
  const auto cfg = load_config(opt.config);
  std::vector<Observation> pairs;
  std::optional<std::pair<DistributionModel, RegressionModel>> truth;
  if (cfg.doc.contains("generator")) {
    json gen = cfg.doc.at("generator");
    if (opt.seed) gen["seed"] = *opt.seed;
    const auto spec = io::generator_from_json(gen);
    const auto g = generate(spec);
    pairs.assign(g.sequence.pairs().begin(), g.sequence.pairs().end());
    truth.emplace(g.mu, g.m);
  } else {
    pairs = io::read_sequence_file(cfg.path_of("sequence", where).string());
  }
  if (cfg.doc.contains("truth")) {
    const json& t = cfg.doc.at("truth");
    truth.emplace(io::distribution_from_json(io::require(t, "distribution", "truth")), io::regression_from_json(io::require(t, "regression", "truth")));
  }
  const auto budget = io::budget_from_json(io::require(cfg.doc, "budget", where));
  EstimatorOptions options;
  options.search_horizon = opt.horizon.value_or(io::field_or<std::size_t>(cfg.doc, "search_horizon", 0, where));
  options.max_resolution = io::field_or<int>(cfg.doc, "max_resolution", options.max_resolution, where);
  if (options.max_resolution < 1 || options.max_resolution > 56) throw ConfigError("max_resolution must lie in [1, 56]");

  StreamingEstimator est(budget, options);
  for (const auto& p : pairs) {
    est.ingest(p);
    if (est.stalled()) break;
  }
  const auto dir = output_dir(opt);
  if (cfg.doc.contains("generator")) write_csv(dir / "sequence.csv", pairs);
  io::write_text_file((dir / "checkpoint.json").string(), io::dump(io::to_json(est.checkpoint())));

  std::ostringstream curve;
  curve << (truth ? "n,kappa,error\n" : "n,kappa\n");
  for (std::size_t n : checkpoints_for(cfg.doc, est.consumed(), where)) {
    curve << n << ',' << est.kappa(n);
    if (truth) curve << ',' << io::format_double(l2_error_exact(est.fixed_sample_estimate(n), truth->second, truth->first));
    curve << '\n';
  }
  io::write_text_file((dir / "curve.csv").string(), curve.str());

  std::cout << "consumed " << est.consumed() << " pairs; deepest frozen resolution "
            << (est.stopping_times().empty() ? 0 : est.stopping_times().size() - 1) << '\n';
  if (est.stalled()) {
    std::cerr << "estimator stalled: resolution " << est.searching_resolution() << " not reached within " << options.search_horizon
              << " samples\n";
    return exit_code::stall;
  }
  return exit_code::ok;
}

// ---------------------------------------------------------------------------
// adversary

inline json block_list(const SpliceState& state) {
  json blocks = json::array();
  for (const auto& b : state.blocks) blocks.push_back(io::to_json(b));
  return blocks;
}

inline int cmd_adversary(const Options& opt) {
  const std::string where = "adversary config";
  const auto cfg = load_config(opt.config);
  auto config = io::adversary_config_from_json(cfg.doc, where);
  if (opt.horizon) config.horizon = *opt.horizon;
  if (config.quadrature_cells < 1024 || (config.quadrature_cells & (config.quadrature_cells - 1)) != 0)
    throw ConfigError("quadrature_cells must be a power of two >= 1024");
  const int blocks = io::field<int>(cfg.doc, "blocks", where);
  if (blocks < 2) throw ConfigError("blocks must be at least 2 for the procedure to oscillate");
  const json proc_spec = io::require(cfg.doc, "procedure", where);
  const auto phi = procedure_from_json(proc_spec, config.quadrature_cells);

  SpliceState state;
  const auto dir = output_dir(opt);
  auto partial = [&](const std::string& outcome) {
    json j{{"procedure", phi.name},
           {"procedure_spec", proc_spec},
           {"blocks", blocks},
           {"config", io::to_json(config)},
           {"boundaries", state.boundaries},
           {"block_records", block_list(state)},
           {"outcome", outcome}};
    write_csv(dir / "sequence.csv", state.sequence);
    return j;
  };
  try {
    const auto rep = build_adversarial_sequence(phi, blocks, config, state);
    json j = io::to_json(rep, state);
    j["procedure_spec"] = proc_spec;
    j["outcome"] = "complete";
    write_csv(dir / "sequence.csv", state.sequence);
    io::write_text_file((dir / "report.json").string(), io::dump(j));
    std::cout << "oscillation check (pairwise distance >= 1/20): " << (rep.oscillation_ok ? "pass" : "fail") << '\n';
    std::cout << "envelope check (discrepancy <= 6/k on each span): " << (rep.envelope_ok ? "pass" : "fail") << '\n';
    return rep.oscillation_ok && rep.envelope_ok ? exit_code::ok : exit_code::verify_failed;
  } catch (const ConsistencyViolationWitness& e) {
    json j = partial("witness");
    j["witness"] = {{"block", e.block()}, {"best_distance", e.best_distance()}, {"closeness", config.closeness}, {"message", e.what()}};
    io::write_text_file((dir / "report.json").string(), io::dump(j));
    io::write_text_file((dir / "witness.json").string(), io::dump(j["witness"]));
    std::cerr << "consistency-violation witness: " << e.what() << '\n';
    return exit_code::witness;
  } catch (const HorizonExhausted& e) {
    json j = partial("horizon_exhausted");
    j["message"] = e.what();
    io::write_text_file((dir / "report.json").string(), io::dump(j));
    std::cerr << "horizon exhausted: " << e.what() << '\n';
    return exit_code::horizon;
  }
}

// ---------------------------------------------------------------------------
// verify

inline CertificateResult verify_report(const json& report, std::vector<Observation> sequence, bool recompute_thresholds) {
  const std::string where = "adversary report";
  CertificateResult r;
  const auto config = io::adversary_config_from_json(io::require(report, "config", where), where);
  SpliceState state;
  state.sequence = std::move(sequence);
  state.boundaries = io::field<std::vector<std::size_t>>(report, "boundaries", where);
  for (const auto& b : io::require(report, "block_records", where)) state.blocks.push_back(io::block_record_from_json(b));
  if (state.boundaries.size() != state.blocks.size() + 1) {
    r.ok = false;
    r.failures.push_back("boundaries and block records disagree");
    return r;
  }
  for (std::size_t i = 0; i < state.blocks.size(); ++i)
    if (state.blocks[i].start != state.boundaries[i] || state.blocks[i].end != state.boundaries[i + 1]) {
      r.ok = false;
      r.failures.push_back("block " + std::to_string(i + 1) + " does not match the stored boundaries");
    }
  const auto phi = procedure_from_json(io::require(report, "procedure_spec", where), config.quadrature_cells);
  const auto spliced = verify_splice(state, phi, config, recompute_thresholds);
  r.ok = r.ok && spliced.ok;
  r.failures.insert(r.failures.end(), spliced.failures.begin(), spliced.failures.end());

  if (io::field_or<std::string>(report, "outcome", "complete", where) == "complete" && r.ok) {
    for (std::size_t i = 1; i < state.boundaries.size(); ++i)
      state.fits.push_back(phi.fit(std::span<const Observation>(state.sequence.data(), state.boundaries[i])));
    const auto rep = summarize_splice(phi.name, io::field<int>(report, "blocks", where), config, state);
    json again = io::to_json(rep, state);
    again["procedure_spec"] = report.at("procedure_spec");
    again["outcome"] = "complete";
    if (again != report) {
      r.ok = false;
      r.failures.push_back("recomputed report differs from the stored one");
    }
    if (!rep.oscillation_ok) {
      r.ok = false;
      r.failures.push_back("a pairwise distance is below 1/20");
    }
    if (!rep.envelope_ok) {
      r.ok = false;
      r.failures.push_back("a span envelope exceeds 6/k");
    }
  }
  return r;
}

inline int cmd_verify(const Options& opt) {
  const std::string where = "verify config";
  const auto cfg = load_config(opt.config);
  if (!cfg.doc.contains("checkpoint") && !cfg.doc.contains("report"))
    throw ConfigError("missing key 'checkpoint' or 'report' in " + where);
  const auto sequence = io::read_sequence_file(cfg.path_of("sequence", where).string());
  CertificateResult all;
  auto merge = [&all](const std::string& tag, const CertificateResult& r) {
    all.ok = all.ok && r.ok;
    for (const auto& f : r.failures) all.failures.push_back(tag + ": " + f);
  };
  if (cfg.doc.contains("checkpoint")) {
    const auto cp = io::checkpoint_from_json(io::read_json_file(cfg.path_of("checkpoint", where).string()));
    merge("checkpoint", verify_estimator_certificates(cp, sequence));
  }
  if (cfg.doc.contains("report"))
    merge("report", verify_report(io::read_json_file(cfg.path_of("report", where).string()), sequence,
                                  io::field_or<bool>(cfg.doc, "recompute_thresholds", true, where)));
  for (const auto& f : all.failures) std::cout << "FAIL " << f << '\n';
  std::cout << (all.ok ? "all certificates verified\n" : "verification failed\n");
  return all.ok ? exit_code::ok : exit_code::verify_failed;
}

// ---------------------------------------------------------------------------
// sweep

inline int cmd_sweep(const Options& opt) {
  const std::string where = "sweep config";
  const auto cfg = load_config(opt.config);
  const json gen = io::require(cfg.doc, "generator", where);
  const auto budget = io::budget_from_json(io::require(cfg.doc, "budget", where));
  std::vector<std::uint64_t> seeds;
  if (cfg.doc.contains("seeds")) {
    seeds = io::field<std::vector<std::uint64_t>>(cfg.doc, "seeds", where);
  } else {
    const auto count = io::field<std::size_t>(cfg.doc, "seed_count", where);
    const std::uint64_t base = opt.seed.value_or(io::field_or<std::uint64_t>(cfg.doc, "base_seed", 1, where));
    for (std::size_t i = 0; i < count; ++i) seeds.push_back(base + i);
  }
  EstimatorOptions options;
  options.search_horizon = opt.horizon.value_or(io::field_or<std::size_t>(cfg.doc, "search_horizon", 0, where));
  options.max_resolution = io::field_or<int>(cfg.doc, "max_resolution", options.max_resolution, where);

  std::ostringstream csv;
  csv << "seed,n,kappa,error\n";
  json summary = json::array();
  for (std::uint64_t seed : seeds) {
    json g = gen;
    g["seed"] = seed;
    const auto spec = io::generator_from_json(g);
    const auto cps = checkpoints_for(cfg.doc, spec.n, where);
    const auto curve = consistency_curve(spec, budget, cps, options);
    for (const auto& p : curve.points) csv << seed << ',' << p.n << ',' << p.kappa << ',' << io::format_double(p.error) << '\n';
    json row{{"seed", seed}, {"stalled", curve.stalled}, {"points", curve.points.size()}};
    if (!curve.points.empty()) row["final_error"] = curve.points.back().error;
    if (curve.stalled) row["stall_at"] = curve.stall_at;
    summary.push_back(row);
  }
  const auto dir = output_dir(opt);
  io::write_text_file((dir / "sweep.csv").string(), csv.str());
  io::write_text_file((dir / "sweep.json").string(), io::dump(json{{"budget", io::to_json(budget)}, {"runs", summary}}));
  std::cout << "swept " << seeds.size() << " seeds\n";
  return exit_code::ok;
}

// ---------------------------------------------------------------------------

inline int run(int argc, char** argv) {
  CLI::App app{"Histogram regression from individual stable sequences"};
  app.require_subcommand(1);
  Options opt;
  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Sub subs[] = {{"generate", "Generate a sequence and its stability diagnostic", cmd_generate},
                      {"estimate", "Run the stopping-time estimator and write its checkpoint and error curve", cmd_estimate},
                      {"adversary", "Splice an adversarial sequence against an estimation procedure", cmd_adversary},
                      {"verify", "Replay stored certificates against their sequence", cmd_verify},
                      {"sweep", "Error curves over many seeds", cmd_sweep}};
  int (*chosen)(const Options&) = nullptr;
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("--config", opt.config, "JSON config file")->required();
    sc->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sc->add_option("--seed", opt.seed, "Override the seed");
    sc->add_option("--horizon", opt.horizon, "Override the search or splice horizon");
    sc->callback([&chosen, fn = s.fn] { chosen = fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code::config;
  }
  try {
    return chosen(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::config;
  } catch (const ModelError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::config;
  } catch (const PreconditionError& e) {
    std::cerr << "generator precondition failed: " << e.what() << '\n';
    return exit_code::generator;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::verify_failed;
  }
}

}  // namespace stablereg::cli
