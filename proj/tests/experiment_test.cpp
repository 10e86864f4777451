// Copyright 2026 The msgd-lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "msgd/config.hpp"
#include "msgd/experiment.hpp"

namespace fs = std::filesystem;
using namespace msgd;

namespace {

ConfigError config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "no ConfigError for " << text;
  return ConfigError("", "");
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("msgd_experiment_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    files[e.path().filename().string()] = io::read_file(e.path().string());
  }
  return files;
}

}  // namespace

TEST(ParseConfig, StepSizeOutOfRange) {
  const auto e = config_error(R"({"command": "gd-ode", "gamma": [1.5, 0.1]})");
  EXPECT_EQ(e.key(), "gamma");
  EXPECT_NE(std::string(e.what()).find("0 < gamma < 1"), std::string::npos) << e.what();
}

TEST(ParseConfig, DirichletNeedsTwoOrMore) {
  const auto e = config_error(
      R"({"command": "weights-moments", "scheme": {"kind": "dirichlet"}, "n": 100, "m": 1})");
  EXPECT_NE(std::string(e.what()).find("concentration"), std::string::npos) << e.what();
}

TEST(ParseConfig, UnknownKeyIsNamed) {
  const auto e = config_error(R"({"command": "gd-ode", "gama": 0.1})");
  EXPECT_EQ(e.key(), "gama");
}

TEST(ParseConfig, WrongType) {
  const auto e = config_error(R"({"command": "clt", "reps": "many"})");
  EXPECT_EQ(e.key(), "reps");
}

TEST(ParseConfig, UnknownCommand) {
  const auto e = config_error(R"({"command": "train"})");
  EXPECT_EQ(e.key(), "command");
  EXPECT_NE(std::string(e.what()).find("wass-scaling"), std::string::npos);
}

TEST(ParseConfig, SyntaxErrorReportsLine) {
  const auto e = config_error("{\n  \"command\": \"gd-ode\",\n  \"seed\": ,\n}");
  EXPECT_TRUE(e.key().empty());
  EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
}

TEST(ParseConfig, MinimalConfigGetsDefaults) {
  const auto c = parse_config(R"({"command": "clt"})");
  EXPECT_EQ(c.command, Command::Clt);
  EXPECT_EQ(c.seed, 1u);
  ASSERT_TRUE(c.model.has_value());
  EXPECT_EQ(c.model->kind, "uniform");
  EXPECT_EQ(c.n, 10000u);
  EXPECT_EQ(c.m, 2000u);
  EXPECT_EQ(c.reps, 10000u);
  ASSERT_EQ(c.schemes.size(), 1u);
  EXPECT_EQ(c.schemes[0].kind, WeightKind::Dirichlet);
  EXPECT_DOUBLE_EQ(c.threshold("ks_max"), 0.03);
  EXPECT_EQ(c.echo["n"], 10000);
  EXPECT_TRUE(c.echo.contains("thresholds"));
}

TEST(ParseConfig, QuadraticConvergeDefaults) {
  const auto c = parse_config(R"({"command": "converge"})");
  EXPECT_EQ(c.K, 200u);
  ASSERT_EQ(c.gammas.size(), 1u);
  EXPECT_DOUBLE_EQ(c.gammas[0], 0.1);
  EXPECT_EQ(c.processes.size(), 2u);
  EXPECT_DOUBLE_EQ(c.threshold("rho_tol"), 0.02);
}

TEST(ParseConfig, SeedOverrideUpdatesEcho) {
  auto c = parse_config(R"({"command": "gd-ode", "seed": 5})");
  EXPECT_EQ(c.echo["seed"], 5);
  c.override_seed(77);
  EXPECT_EQ(c.seed, 77u);
  EXPECT_EQ(c.echo["seed"], 77);
}

TEST(ParseConfig, ThresholdOverride) {
  const auto c = parse_config(R"({"command": "clt", "thresholds": {"ks_max": 0.05}})");
  EXPECT_DOUBLE_EQ(c.threshold("ks_max"), 0.05);
  EXPECT_DOUBLE_EQ(c.threshold("covariance_se"), 4.0);
  EXPECT_THROW(parse_config(R"({"command": "clt", "thresholds": {"nope": 1}})"), ConfigError);
}

TEST(ParseConfig, ShippedConfigsParse) {
  for (const auto& e : fs::directory_iterator(MSGD_CONFIG_DIR)) {
    EXPECT_NO_THROW(parse_config(io::read_file(e.path().string()))) << e.path();
  }
}

TEST(Histogram, TwoPoints) {
  const std::vector<double> xs{0.0, 1.0};
  const auto bins = emit_histogram(xs, 2);
  ASSERT_EQ(bins.size(), 2u);
  EXPECT_EQ(bins[0].count, 1u);
  EXPECT_EQ(bins[1].count, 1u);
  EXPECT_DOUBLE_EQ(bins[0].left, 0.0);
  EXPECT_DOUBLE_EQ(bins[0].right, 0.5);
  EXPECT_DOUBLE_EQ(bins[1].right, 1.0);
}

TEST(Histogram, ConstantSamples) {
  const std::vector<double> xs(7, 3.0);
  const auto bins = emit_histogram(xs, 4);
  EXPECT_EQ(bins[0].count, 7u);
  for (std::size_t b = 1; b < bins.size(); ++b) EXPECT_EQ(bins[b].count, 0u);
}

TEST(Histogram, CountsSumToSampleSize) {
  std::vector<double> xs(10000);
  auto s = derive_stream(3, {"hist"});
  for (auto& x : xs) x = s.normal();
  const auto bins = emit_histogram(xs, 50);
  std::size_t total = 0;
  for (const auto& b : bins) total += b.count;
  EXPECT_EQ(total, 10000u);
  for (std::size_t b = 1; b < bins.size(); ++b) EXPECT_DOUBLE_EQ(bins[b].left, bins[b - 1].right);
}

TEST(Histogram, EmptyThrows) {
  EXPECT_ANY_THROW(emit_histogram(std::vector<double>{}, 3));
}

TEST(Report, Comparisons) {
  EXPECT_TRUE(evaluate(Comparison::Within, 1.1, 1.0, 0.1 + 1e-12));
  EXPECT_FALSE(evaluate(Comparison::Within, 0.8, 1.0, 0.1));
  EXPECT_TRUE(evaluate(Comparison::AtMost, 1.05, 1.0, 0.1));
  EXPECT_FALSE(evaluate(Comparison::AtMost, 1.2, 1.0, 0.1));
  EXPECT_TRUE(evaluate(Comparison::AtLeast, 0.95, 1.0, 0.1));
  EXPECT_FALSE(evaluate(Comparison::AtLeast, 0.8, 1.0, 0.1));
}

TEST(Report, PassNeedsEveryCheck) {
  ExperimentReport r;
  EXPECT_FALSE(r.pass());
  r.add("a", 1.0, 1.0, 0.0, Comparison::Within);
  EXPECT_TRUE(r.pass());
  r.add("b", 2.0, 1.0, 0.5, Comparison::AtMost);
  EXPECT_FALSE(r.pass());
  ASSERT_NE(r.find("b"), nullptr);
  EXPECT_FALSE(r.find("b")->pass);
  EXPECT_EQ(r.find("c"), nullptr);
  const auto j = Json::parse(r.to_json());
  EXPECT_EQ(j["checks"].size(), 2u);
  EXPECT_FALSE(j["pass"].get<bool>());
}

TEST(Report, McToleranceFloor) {
  EXPECT_DOUBLE_EQ(mc_tolerance(4.0, 0.5, 0.0), 2.0);
  EXPECT_GT(mc_tolerance(4.0, 0.0, 2.0), 0.0);
  EXPECT_LT(mc_tolerance(4.0, 0.0, 2.0), 1e-8);
}

TEST(RunExperiment, GdOdeWritesCommentedCsv) {
  const auto dir = scratch("gd_ode");
  const auto report = run_experiment(parse_config(R"({"command": "gd-ode", "seed": 9})"), dir.string());
  EXPECT_TRUE(report.pass());
  const auto text = io::read_file((dir / "gd_ode.csv").string());
  EXPECT_EQ(text.rfind("# config: ", 0), 0u);
  EXPECT_NE(text.find("# seed: 9"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
}

TEST(RunExperiment, ThreadCountDoesNotChangeOutputs) {
  const std::vector<std::string> configs{
      R"({"command": "weights-moments", "n": 200, "m": 40, "reps": 300})",
      R"({"command": "clt", "n": 500, "m": 100, "reps": 300, "bins": 10})",
      R"({"command": "thm1-gap", "pairs": [[400, 100]], "reps": 1000})",
      R"({"command": "wass-scaling", "n": 64, "m": 8, "gamma": [0.2, 0.1], "reps": 40, "directions": 10, "substeps": 5})",
      R"({"command": "converge", "n": 100, "m": 10, "K": 30, "reps": 40, "fit_window": 10})",
  };
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto cfg = parse_config(configs[i]);
    const auto one = scratch("t1_" + std::to_string(i));
    const auto four = scratch("t4_" + std::to_string(i));
    run_experiment(cfg, one.string(), 1);
    run_experiment(cfg, four.string(), 4);
    const auto a = read_dir(one), b = read_dir(four);
    ASSERT_EQ(a.size(), b.size()) << configs[i];
    for (const auto& [name, text] : a) {
      ASSERT_TRUE(b.count(name)) << name;
      EXPECT_EQ(text, b.at(name)) << configs[i] << " " << name;
    }
  }
}

TEST(RunExperiment, SeedChangesOutputs) {
  auto cfg = parse_config(R"({"command": "clt", "n": 500, "m": 100, "reps": 200})");
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  run_experiment(cfg, a.string());
  cfg.override_seed(2);
  run_experiment(cfg, b.string());
  EXPECT_NE(io::read_file((a / "clt.csv").string()), io::read_file((b / "clt.csv").string()));
}
