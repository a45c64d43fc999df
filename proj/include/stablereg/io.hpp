#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stablereg/adversary.hpp"
#include "stablereg/discrepancy.hpp"
#include "stablereg/distribution.hpp"
#include "stablereg/dyadic.hpp"
#include "stablereg/errors.hpp"
#include "stablereg/estimator.hpp"
#include "stablereg/evaluation.hpp"
#include "stablereg/generators.hpp"
#include "stablereg/partitions.hpp"
#include "stablereg/regression_model.hpp"
#include "stablereg/sample_sequence.hpp"

namespace stablereg::io {

using json = nlohmann::json;

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw ConfigError("cannot parse number '" + std::string(s) + "' in " + what);
  return v;
}

// ---------------------------------------------------------------------------
// Sequence CSV: header `i,x,y`, rows numbered from 1.

inline void write_sequence_csv(std::ostream& out, std::span<const Observation> pairs) {
  out << "i,x,y\n";
  for (std::size_t i = 0; i < pairs.size(); ++i)
    out << (i + 1) << ',' << format_double(pairs[i].x) << ',' << format_double(pairs[i].y) << '\n';
}

inline std::vector<Observation> read_sequence_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("sequence file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "i,x,y") throw ConfigError("sequence file must start with the header 'i,x,y'");
  std::vector<Observation> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw ConfigError("sequence row " + std::to_string(row) + " needs three fields");
    const std::string where = "sequence row " + std::to_string(row);
    const std::string_view view(line);
    out.push_back({parse_double(view.substr(c1 + 1, c2 - c1 - 1), where), parse_double(view.substr(c2 + 1), where)});
  }
  return out;
}

inline std::vector<Observation> read_sequence_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sequence file " + path);
  return read_sequence_csv(in);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Field access with errors that name the offending key.

inline const json& require(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing key '" + key + "' in " + where);
  return j.at(key);
}

template <class T>
T field(const json& j, const std::string& key, const std::string& where) {
  const json& v = require(j, key, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + key + "' in " + where + " has the wrong type");
  }
}

template <class T>
T field_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return field<T>(j, key, where);
}

/// Converts model validation failures raised while building from config into config errors.
template <class F>
auto build(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ModelError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Distributions

inline json to_json(const DistributionModel& mu) {
  json atoms = json::array();
  for (const auto& a : mu.atoms()) atoms.push_back({a.location, a.mass});
  json segments = json::array();
  for (const auto& s : mu.segments()) segments.push_back({s.a, s.b, s.density});
  return {{"atoms", atoms}, {"segments", segments}};
}

inline DistributionModel distribution_from_json(const json& j, const std::string& where = "distribution") {
  if (j.is_string()) {
    if (j.get<std::string>() == "uniform") return DistributionModel::uniform(0.0, 1.0);
    throw ConfigError("unknown distribution name in " + where);
  }
  std::vector<Atom> atoms;
  std::vector<Segment> segments;
  for (const auto& a : field_or<json>(j, "atoms", json::array(), where)) {
    if (!a.is_array() || a.size() != 2) throw ConfigError("atoms in " + where + " must be [location, mass] pairs");
    atoms.push_back({a[0].get<double>(), a[1].get<double>()});
  }
  for (const auto& s : field_or<json>(j, "segments", json::array(), where)) {
    if (!s.is_array() || s.size() != 3) throw ConfigError("segments in " + where + " must be [a, b, density] triples");
    segments.push_back({s[0].get<double>(), s[1].get<double>(), s[2].get<double>()});
  }
  return build(where, [&] { return DistributionModel(std::move(atoms), std::move(segments)); });
}

// ---------------------------------------------------------------------------
// Piecewise-dyadic functions

inline json to_json(const PiecewiseDyadicFn& f) {
  json cells = json::array();
  for (const auto& [j, v] : f.cells()) cells.push_back({j, v});
  return {{"k", f.resolution()}, {"default", f.default_value()}, {"cells", cells}};
}

inline PiecewiseDyadicFn dyadic_from_json(const json& j, const std::string& where = "dyadic function") {
  PiecewiseDyadicFn f(field<int>(j, "k", where), field<double>(j, "default", where));
  for (const auto& c : field<json>(j, "cells", where)) {
    if (!c.is_array() || c.size() != 2) throw ConfigError("cells in " + where + " must be [j, value] pairs");
    f.set(c[0].get<std::int64_t>(), c[1].get<double>());
  }
  return f;
}

// ---------------------------------------------------------------------------
// Regression functions (specification only; the model itself is not serialized)

inline std::vector<Knot> knots_from_json(const json& arr, const std::string& where) {
  std::vector<Knot> knots;
  for (const auto& k : arr) {
    if (!k.is_array() || (k.size() != 2 && k.size() != 3)) throw ConfigError("knots in " + where + " must be [x, v] or [x, v_left, v_right]");
    const double left = k[1].get<double>();
    knots.push_back({k[0].get<double>(), left, k.size() == 3 ? k[2].get<double>() : left});
  }
  return knots;
}

inline RegressionModel regression_from_json(const json& j, const std::string& where = "regression") {
  const auto kind = field<std::string>(j, "kind", where);
  return build(where, [&]() -> RegressionModel {
    if (kind == "rademacher") return RegressionModel::rademacher(field<int>(j, "k", where));
    if (kind == "constant") return RegressionModel::constant(field<double>(j, "value", where));
    if (kind == "piecewise_linear") {
      const auto knots = knots_from_json(require(j, "knots", where), where);
      return RegressionModel::from_knots(knots);
    }
    if (kind == "monotone") {
      const auto knots = knots_from_json(require(j, "knots", where), where);
      return RegressionModel::monotone(knots, field<double>(j, "bound", where));
    }
    if (kind == "lipschitz") {
      std::vector<std::pair<double, double>> pts;
      for (const auto& p : require(j, "points", where)) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      return RegressionModel::lipschitz(pts, field<double>(j, "constant", where));
    }
    if (kind == "dyadic") return RegressionModel::from_dyadic(dyadic_from_json(require(j, "function", where), where));
    throw ConfigError("unknown regression kind '" + kind + "' in " + where);
  });
}

// ---------------------------------------------------------------------------
// Variation budgets

inline json to_json(const VariationBudget& b) {
  const auto& p = b.parameters();
  switch (b.kind()) {
    case VariationBudget::Kind::constant: return {{"kind", "constant"}, {"value", p[0]}};
    case VariationBudget::Kind::affine: return {{"kind", "affine"}, {"C", p[0]}, {"epsilon", p[1]}};
    case VariationBudget::Kind::table: return {{"kind", "table"}, {"values", p}};
  }
  return {};
}

inline VariationBudget budget_from_json(const json& j, const std::string& where = "budget") {
  const auto kind = field<std::string>(j, "kind", where);
  return build(where, [&] {
    if (kind == "constant") return VariationBudget::constant(field<double>(j, "value", where));
    if (kind == "affine") return VariationBudget::affine(field<double>(j, "C", where), field<double>(j, "epsilon", where));
    if (kind == "table") return VariationBudget::table(field<std::vector<double>>(j, "values", where));
    throw ConfigError("unknown budget kind '" + kind + "' in " + where);
  });
}

// ---------------------------------------------------------------------------
// Estimator checkpoints

inline json to_json(const EstimatorCheckpoint& cp) {
  json frozen = json::array();
  for (const auto& f : cp.frozen) frozen.push_back(to_json(f));
  return {{"budget", to_json(cp.budget)},
          {"search_horizon", cp.options.search_horizon},
          {"max_resolution", cp.options.max_resolution},
          {"consumed", cp.consumed},
          {"tau", cp.tau},
          {"frozen", frozen},
          {"stalled", cp.stalled}};
}

inline EstimatorCheckpoint checkpoint_from_json(const json& j) {
  const std::string where = "estimator checkpoint";
  EstimatorCheckpoint cp;
  cp.budget = budget_from_json(require(j, "budget", where));
  cp.options.search_horizon = field<std::size_t>(j, "search_horizon", where);
  cp.options.max_resolution = field<int>(j, "max_resolution", where);
  cp.consumed = field<std::size_t>(j, "consumed", where);
  cp.tau = field<std::vector<std::size_t>>(j, "tau", where);
  for (const auto& f : require(j, "frozen", where)) cp.frozen.push_back(dyadic_from_json(f, where));
  cp.stalled = field<bool>(j, "stalled", where);
  return cp;
}

// ---------------------------------------------------------------------------
// Generator specs

inline Noise noise_from_json(const json& j, const std::string& where = "noise") {
  const auto kind = field<std::string>(j, "kind", where);
  if (kind == "none") return Noise::none();
  if (kind == "binary") return Noise::binary();
  if (kind == "bounded_uniform") return Noise::bounded_uniform(field<double>(j, "delta", where));
  throw ConfigError("unknown noise kind '" + kind + "' in " + where);
}

inline GeneratorSpec generator_from_json(const json& j, const std::string& where = "generator spec") {
  GeneratorSpec spec;
  const auto kind = field<std::string>(j, "kind", where);
  spec.n = field<std::size_t>(j, "n", where);
  spec.seed = field_or<std::uint64_t>(j, "seed", 0, where);
  if (j.contains("noise")) spec.noise = noise_from_json(j.at("noise"));
  if (kind == "iid") {
    spec.kind = GeneratorKind::iid;
    spec.distribution = distribution_from_json(require(j, "distribution", where));
    spec.regression = regression_from_json(require(j, "regression", where));
  } else if (kind == "markov") {
    spec.kind = GeneratorKind::markov;
    const json& c = require(j, "chain", where);
    spec.chain.emplace(field<std::vector<double>>(c, "states", "chain"), field<std::vector<std::vector<double>>>(c, "transition", "chain"));
    spec.regression = regression_from_json(require(j, "regression", where));
  } else if (kind == "deterministic") {
    spec.kind = GeneratorKind::deterministic;
    spec.regression = regression_from_json(require(j, "regression", where));
  } else if (kind == "atom_approach") {
    spec.kind = GeneratorKind::atom_approach;
  } else if (kind == "mixture") {
    spec.kind = GeneratorKind::mixture;
    for (const auto& c : require(j, "components", where))
      spec.components.push_back({distribution_from_json(require(c, "distribution", "mixture component")),
                                 regression_from_json(require(c, "regression", "mixture component")),
                                 field<double>(c, "weight", "mixture component")});
  } else {
    throw ConfigError("unknown generator kind '" + kind + "' in " + where);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const StabilityReport& r) {
  json cps = json::array();
  for (const auto& c : r.checkpoints) {
    json atoms = json::array();
    for (const auto& a : c.atoms)
      atoms.push_back({{"location", a.location}, {"mass_deviation", a.mass_deviation}, {"weighted_deviation", a.weighted_deviation}});
    cps.push_back({{"n", c.n},
                   {"interval_discrepancy", c.interval_discrepancy},
                   {"weighted_discrepancy", c.weighted_discrepancy},
                   {"cdf_deviation", c.cdf_deviation},
                   {"atoms", atoms}});
  }
  return {{"probes", r.probes}, {"checkpoints", cps}, {"non_stable_evidence", r.non_stable_evidence}};
}

inline void write_error_curve_csv(std::ostream& out, const ErrorCurve& curve) {
  out << "n,kappa,error\n";
  for (const auto& p : curve.points) out << p.n << ',' << p.kappa << ',' << format_double(p.error) << '\n';
}

inline json to_json(const BlockRecord& b) {
  return {{"k", b.k},
          {"l", b.thresholds.l},
          {"l_tilde", b.thresholds.l_tilde},
          {"next_l", b.next_thresholds.l},
          {"next_l_tilde", b.next_thresholds.l_tilde},
          {"start", b.start},
          {"end", b.end},
          {"closeness", b.closeness},
          {"closeness_exact", b.closeness_exact},
          {"interval_discrepancy", b.interval_discrepancy},
          {"weighted_discrepancy", b.weighted_discrepancy},
          {"required_length", b.required_length},
          {"checks", b.checks}};
}

inline BlockRecord block_record_from_json(const json& j) {
  const std::string where = "block record";
  BlockRecord b;
  b.k = field<int>(j, "k", where);
  b.thresholds = {field<std::size_t>(j, "l", where), field<std::size_t>(j, "l_tilde", where)};
  b.next_thresholds = {field<std::size_t>(j, "next_l", where), field<std::size_t>(j, "next_l_tilde", where)};
  b.start = field<std::size_t>(j, "start", where);
  b.end = field<std::size_t>(j, "end", where);
  b.closeness = field<double>(j, "closeness", where);
  b.closeness_exact = field<bool>(j, "closeness_exact", where);
  b.interval_discrepancy = field<double>(j, "interval_discrepancy", where);
  b.weighted_discrepancy = field<double>(j, "weighted_discrepancy", where);
  b.required_length = field<std::size_t>(j, "required_length", where);
  b.checks = field<std::vector<std::size_t>>(j, "checks", where);
  return b;
}

inline json to_json(const AdversaryConfig& c) {
  return {{"horizon", c.horizon}, {"first_check", c.first_check}, {"closeness", c.closeness}, {"quadrature_cells", c.quadrature_cells}};
}

inline AdversaryConfig adversary_config_from_json(const json& j, const std::string& where = "adversary config") {
  AdversaryConfig c;
  c.horizon = field_or<std::size_t>(j, "horizon", c.horizon, where);
  c.first_check = field_or<std::size_t>(j, "first_check", c.first_check, where);
  c.closeness = field_or<double>(j, "closeness", c.closeness, where);
  c.quadrature_cells = field_or<std::size_t>(j, "quadrature_cells", c.quadrature_cells, where);
  if (c.horizon == 0 || c.first_check == 0) throw ConfigError("horizon and first_check must be positive in " + where);
  return c;
}

inline json to_json(const AdversaryReport& r, const SpliceState& state) {
  json blocks = json::array();
  for (const auto& b : state.blocks) blocks.push_back(to_json(b));
  json trajectory = json::array();
  for (const auto& t : r.trajectory)
    trajectory.push_back({{"n", t.n}, {"interval_discrepancy", t.interval_discrepancy}, {"weighted_discrepancy", t.weighted_discrepancy}});
  json envelopes = json::array();
  for (const auto& e : r.envelopes)
    envelopes.push_back({{"k", e.k},
                         {"from", e.from},
                         {"to", e.to},
                         {"bound", e.bound},
                         {"max_evaluated", e.max_evaluated},
                         {"evaluations", e.evaluations},
                         {"certified", e.certified}});
  return {{"procedure", r.procedure},
          {"blocks", r.blocks},
          {"config", to_json(r.config)},
          {"boundaries", state.boundaries},
          {"block_records", blocks},
          {"distances", r.distances},
          {"distances_exact", r.distances_exact},
          {"oscillation_check", r.oscillation_ok ? "pass" : "fail"},
          {"trajectory", trajectory},
          {"envelopes", envelopes},
          {"envelope_check", r.envelope_ok ? "pass" : "fail"},
          {"note", r.note}};
}

/// Serialized JSON with a trailing newline; object keys come out sorted, so output is stable.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace stablereg::io
