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


// msgd_lab: runs one configured experiment and reports pass/fail.
//
//   msgd_lab --config configs/clt_dirichlet.json --out results/clt --threads 8
//
// Exit status: 0 all checks passed, 1 some check failed, 2 invalid
// configuration or arguments, 3 runtime failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "msgd/config.hpp"
#include "msgd/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multiplicative SGD laboratory"};
  std::string config_path;
  std::string out_dir = "msgd_out";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool list = false;
  app.add_option("--config", config_path, "experiment configuration (JSON)");
  app.add_option("--seed", seed, "master seed, overrides the config");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u))->capture_default_str();
  app.add_flag("--list-commands", list, "print the available commands and exit");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (list) {
    for (const auto& info : msgd::kCommands) {
      std::printf("%-16s %s\n", std::string(info.name).c_str(), std::string(info.summary).c_str());
    }
    return 0;
  }
  if (config_path.empty()) {
    std::cerr << "error: --config is required (or use --list-commands)\n";
    return 2;
  }

  msgd::ExperimentConfig config;
  try {
    config = msgd::parse_config(msgd::io::read_file(config_path));
    if (seed) config.override_seed(*seed);
  } catch (const msgd::ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    const auto report = msgd::run_experiment(config, out_dir, threads);
    for (const auto& c : report.checks) {
      std::printf("%s  %-48s observed %-12.6g target %-12.6g tol %-10.4g (%s)\n",
                  c.pass ? "PASS" : "FAIL", c.name.c_str(), c.observed, c.target, c.tolerance,
                  std::string(msgd::to_string(c.comparison)).c_str());
    }
    std::printf("%s: %s (%zu checks, outputs in %s)\n", std::string(msgd::to_string(config.command)).c_str(),
                report.pass() ? "PASS" : "FAIL", report.checks.size(), out_dir.c_str());
    return report.pass() ? 0 : 1;
  } catch (const msgd::ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
