#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stablereg/io.hpp"

namespace fs = std::filesystem;
using stablereg::io::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("stablereg-cli-") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path config(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  // Runs a subcommand; stdout and stderr land in <out>.log.
  int run(const std::string& sub, const fs::path& cfg, const std::string& out, const std::string& extra = "") {
    const auto log = dir_ / (out + ".log");
    const std::string cmd = std::string(STABLEREG_CLI) + " " + sub + " --config '" + cfg.string() + "' --out '" + (dir_ / out).string() +
                            "' " + extra + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string log(const std::string& out) { return slurp(dir_ / (out + ".log")); }
  json read_json(const std::string& rel) { return json::parse(slurp(dir_ / rel)); }
  fs::path path(const std::string& rel) { return dir_ / rel; }

  fs::path dir_;
};

const char* kIid = R"({"generator": {"kind": "iid", "n": 3000, "seed": 7, "distribution": "uniform",
  "regression": {"kind": "rademacher", "k": 2}, "noise": {"kind": "bounded_uniform", "delta": 0.25}}})";

}  // namespace

TEST_F(Cli, GenerateAtomApproachRaisesTheFlag) {
  ASSERT_EQ(run("generate", config("g.json", R"({"generator": {"kind": "atom_approach", "n": 100}})"), "out"), 0) << log("out");
  const auto pairs = stablereg::io::read_sequence_file(path("out/sequence.csv").string());
  ASSERT_EQ(pairs.size(), 100u);
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    EXPECT_LT(pairs[i].x, 0.0);
    EXPECT_GT(pairs[i].x, pairs[i - 1].x);
  }
  const auto d = read_json("out/diagnostic.json");
  EXPECT_TRUE(d.at("non_stable_evidence").get<bool>());
  EXPECT_LE(d.at("checkpoints").back().at("cdf_deviation").get<double>(), 0.02);
}

TEST_F(Cli, GenerateIsByteIdenticalAcrossRuns) {
  const auto cfg = config("g.json", kIid);
  ASSERT_EQ(run("generate", cfg, "a"), 0) << log("a");
  ASSERT_EQ(run("generate", cfg, "b"), 0) << log("b");
  EXPECT_EQ(slurp(path("a/sequence.csv")), slurp(path("b/sequence.csv")));
  EXPECT_EQ(slurp(path("a/diagnostic.json")), slurp(path("b/diagnostic.json")));
  ASSERT_EQ(run("generate", cfg, "c", "--seed 8"), 0) << log("c");
  EXPECT_NE(slurp(path("a/sequence.csv")), slurp(path("c/sequence.csv")));
}

TEST_F(Cli, GenerateErrors) {
  EXPECT_EQ(run("generate", config("a.json", R"({"generator": {"kind": "atom_approach"}})"), "a"), 2);
  EXPECT_NE(log("a").find("'n'"), std::string::npos) << log("a");
  EXPECT_EQ(run("generate", config("b.json", R"({"generator": {"kind": "iid", "n": 5, "distribution": "uniform",
    "regression": {"kind": "constant", "value": 1.5}, "noise": {"kind": "binary"}}})"),
                "b"),
            3);
  EXPECT_EQ(run("generate", config("c.json", "{not json"), "c"), 2);
  EXPECT_EQ(run("generate", dir_ / "absent.json", "d"), 2);
  EXPECT_EQ(run("frobnicate", config("e.json", "{}"), "e"), 2);
}

TEST_F(Cli, EstimateWithLooseBudgetStopsEverySample) {
  ASSERT_EQ(run("generate", config("g.json", kIid), "g"), 0);
  config("e.json", R"({"sequence": "g/sequence.csv", "budget": {"kind": "constant", "value": 1e6}, "max_resolution": 20})");
  ASSERT_EQ(run("estimate", path("e.json"), "e"), 0) << log("e");
  const auto tau = read_json("e/checkpoint.json").at("tau").get<std::vector<std::size_t>>();
  ASSERT_EQ(tau.size(), 21u);
  for (std::size_t k = 0; k < tau.size(); ++k) EXPECT_EQ(tau[k], k + 1);
  EXPECT_EQ(slurp(path("e/curve.csv")).substr(0, 8), "n,kappa\n");
}

TEST_F(Cli, EstimateOnASinglePair) {
  std::ofstream(path("one.csv")) << "i,x,y\n1,0.3,0.7\n";
  config("e.json", R"({"sequence": "one.csv", "budget": {"kind": "constant", "value": 1}})");
  ASSERT_EQ(run("estimate", path("e.json"), "e"), 0) << log("e");
  EXPECT_EQ(slurp(path("e/curve.csv")), "n,kappa\n1,0\n");
  const auto cp = stablereg::io::checkpoint_from_json(read_json("e/checkpoint.json"));
  ASSERT_EQ(cp.frozen.size(), 1u);
  EXPECT_EQ(cp.frozen[0](-5.0), 0.7);
  EXPECT_EQ(cp.frozen[0](5.0), 0.7);
}

TEST_F(Cli, EstimateRademacherCurveAndReplay) {
  config("e.json", R"({"generator": {"kind": "deterministic", "n": 65536, "regression": {"kind": "rademacher", "k": 1}},
    "budget": {"kind": "constant", "value": 2}})");
  ASSERT_EQ(run("estimate", path("e.json"), "e"), 0) << log("e");
  std::istringstream curve(slurp(path("e/curve.csv")));
  std::string line, last;
  std::getline(curve, line);
  EXPECT_EQ(line, "n,kappa,error");
  while (std::getline(curve, line)) last = line;
  EXPECT_EQ(last.substr(0, 6), "65536,");
  EXPECT_LT(std::stod(last.substr(last.rfind(',') + 1)), 0.01);

  config("v.json", R"({"checkpoint": "e/checkpoint.json", "sequence": "e/sequence.csv"})");
  EXPECT_EQ(run("verify", path("v.json"), "v"), 0) << log("v");
  auto cp = read_json("e/checkpoint.json");
  cp["frozen"][3]["default"] = 0.25;
  std::ofstream(path("e/checkpoint.json")) << cp.dump();
  EXPECT_EQ(run("verify", path("v.json"), "v2"), 1) << log("v2");
}

TEST_F(Cli, EstimateStallExitsFourWithPartialOutputs) {
  config("e.json", R"({"generator": {"kind": "deterministic", "n": 60000, "regression": {"kind": "rademacher", "k": 4}},
    "budget": {"kind": "constant", "value": 2}})");
  EXPECT_EQ(run("estimate", path("e.json"), "e", "--horizon 20000"), 4) << log("e");
  const auto cp = read_json("e/checkpoint.json");
  EXPECT_TRUE(cp.at("stalled").get<bool>());
  EXPECT_EQ(cp.at("tau").size(), 5u);
  EXPECT_TRUE(fs::exists(path("e/curve.csv")));
  config("v.json", R"({"checkpoint": "e/checkpoint.json", "sequence": "e/sequence.csv"})");
  EXPECT_EQ(run("verify", path("v.json"), "v"), 0) << log("v");
}

TEST_F(Cli, AdversaryAgainstHistogramPassesAndReplays) {
  config("a.json", R"({"procedure": "histogram", "blocks": 3, "horizon": 65536})");
  ASSERT_EQ(run("adversary", path("a.json"), "a"), 0) << log("a");
  ASSERT_EQ(run("adversary", path("a.json"), "b"), 0) << log("b");
  EXPECT_EQ(slurp(path("a/report.json")), slurp(path("b/report.json")));
  EXPECT_EQ(slurp(path("a/sequence.csv")), slurp(path("b/sequence.csv")));
  const auto rep = read_json("a/report.json");
  EXPECT_EQ(rep.at("oscillation_check"), "pass");
  EXPECT_EQ(rep.at("envelope_check"), "pass");
  EXPECT_EQ(rep.at("boundaries"), json::parse("[0, 16, 80, 336]"));
  const auto d = rep.at("distances");
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) EXPECT_GE(d[a][b].get<double>(), 1.0 / 20.0);

  config("v.json", R"({"report": "a/report.json", "sequence": "a/sequence.csv"})");
  EXPECT_EQ(run("verify", path("v.json"), "v"), 0) << log("v");
  auto pairs = stablereg::io::read_sequence_file(path("a/sequence.csv").string());
  pairs[40].y = 1.0 - pairs[40].y;
  std::ofstream out(path("a/sequence.csv"));
  stablereg::io::write_sequence_csv(out, pairs);
  out.close();
  EXPECT_EQ(run("verify", path("v.json"), "v2"), 1) << log("v2");
}

TEST_F(Cli, AdversaryOutcomes) {
  config("c.json", R"({"procedure": {"kind": "constant", "value": 0.5}, "blocks": 3, "horizon": 4096})");
  EXPECT_EQ(run("adversary", path("c.json"), "c"), 5) << log("c");
  const auto w = read_json("c/witness.json");
  EXPECT_EQ(w.at("block"), 1);
  EXPECT_EQ(w.at("best_distance"), 0.25);
  EXPECT_EQ(read_json("c/report.json").at("outcome"), "witness");
  EXPECT_EQ(stablereg::io::read_sequence_file(path("c/sequence.csv").string()).size(), 4096u);

  EXPECT_EQ(run("adversary", config("k1.json", R"({"procedure": "histogram", "blocks": 1})"), "k1"), 2);
  EXPECT_EQ(run("adversary", config("p.json", R"({"procedure": "mystery", "blocks": 2})"), "p"), 2);
  EXPECT_EQ(run("adversary", config("m.json", R"({"procedure": "histogram"})"), "m"), 2);
  EXPECT_NE(log("m").find("'blocks'"), std::string::npos);

  for (const char* h : {"4", "8"}) {
    EXPECT_EQ(run("adversary", config("h.json", R"({"procedure": "histogram", "blocks": 3})"), "h", std::string("--horizon ") + h), 6)
        << log("h");
    EXPECT_EQ(read_json("h/report.json").at("outcome"), "horizon_exhausted");
  }
}

TEST_F(Cli, ExternalProcedureProtocol) {
  const std::string helper = PHI_HELPER;
  config("c.json", R"({"procedure": {"kind": "external", "command": ")" + helper + R"( constant 0.5"}, "blocks": 2, "horizon": 256})");
  EXPECT_EQ(run("adversary", path("c.json"), "c"), 5) << log("c");
  EXPECT_NEAR(read_json("c/witness.json").at("best_distance").get<double>(), 0.25, 1e-12);

  config("h.json", R"({"procedure": {"kind": "external", "command": ")" + helper + R"( histogram"}, "blocks": 2, "horizon": 1024})");
  ASSERT_EQ(run("adversary", path("h.json"), "h"), 0) << log("h");
  config("b.json", R"({"procedure": "histogram", "blocks": 2, "horizon": 1024})");
  ASSERT_EQ(run("adversary", path("b.json"), "b"), 0) << log("b");
  const auto ext = read_json("h/report.json");
  const auto built = read_json("b/report.json");
  EXPECT_EQ(ext.at("boundaries"), built.at("boundaries"));
  EXPECT_FALSE(ext.at("distances_exact").get<bool>());
  EXPECT_NEAR(ext.at("distances")[0][1].get<double>(), built.at("distances")[0][1].get<double>(), 1e-3);
  config("v.json", R"({"report": "h/report.json", "sequence": "h/sequence.csv"})");
  EXPECT_EQ(run("verify", path("v.json"), "v"), 0) << log("v");

  config("f.json", R"({"procedure": {"kind": "external", "command": ")" + helper + R"( fail"}, "blocks": 2, "horizon": 256})");
  EXPECT_EQ(run("adversary", path("f.json"), "f"), 1) << log("f");
  EXPECT_NE(log("f").find("status 7"), std::string::npos) << log("f");
}

TEST_F(Cli, SweepIsReproducible) {
  config("s.json", R"({"generator": {"kind": "iid", "n": 4096, "distribution": "uniform",
    "regression": {"kind": "lipschitz", "points": [[0, 0], [1, 1]], "constant": 1}, "noise": {"kind": "bounded_uniform", "delta": 0.5}},
    "budget": {"kind": "affine", "C": 1, "epsilon": 0.1}, "seed_count": 3, "checkpoints": [128, 1024, 4096]})");
  ASSERT_EQ(run("sweep", path("s.json"), "a"), 0) << log("a");
  ASSERT_EQ(run("sweep", path("s.json"), "b"), 0) << log("b");
  EXPECT_EQ(slurp(path("a/sweep.csv")), slurp(path("b/sweep.csv")));
  EXPECT_EQ(slurp(path("a/sweep.json")), slurp(path("b/sweep.json")));
  std::istringstream csv(slurp(path("a/sweep.csv")));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 9);
  EXPECT_EQ(read_json("a/sweep.json").at("runs").size(), 3u);
}

TEST_F(Cli, VerifyNeedsSomethingToCheck) {
  std::ofstream(path("s.csv")) << "i,x,y\n";
  EXPECT_EQ(run("verify", config("v.json", R"({"sequence": "s.csv"})"), "v"), 2);
  EXPECT_EQ(run("verify", config("w.json", R"({"checkpoint": "cp.json"})"), "w"), 2);
}
