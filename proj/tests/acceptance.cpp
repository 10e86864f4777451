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


// Acceptance harness: runs every shipped configuration, prints one PASS/FAIL
// line per criterion and exits nonzero if any criterion fails.
//
//   acceptance --work-dir build/acceptance_out

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "msgd/config.hpp"
#include "msgd/experiment.hpp"

namespace fs = std::filesystem;
using namespace msgd;

namespace {

struct Criterion {
  int id;
  std::string title;
  std::vector<std::string> configs;
  double max_seconds;  // 0: no limit
  // Returns an empty string when the parsed configuration has the required shape.
  std::function<std::string(const ExperimentConfig&)> shape;
};

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;
  void fail(std::string note) {
    pass = false;
    notes.push_back(std::move(note));
  }
};

std::string need(bool ok, const std::string& what) { return ok ? "" : "config: " + what; }

bool has_scheme(const ExperimentConfig& c, WeightKind kind, BaseDistribution base) {
  for (const auto& s : c.schemes) {
    if (s.kind == kind && (kind != WeightKind::GaussianStructured || s.base == base)) return true;
  }
  return false;
}

bool all_three_schemes(const ExperimentConfig& c) {
  return has_scheme(c, WeightKind::Minibatch, {}) &&
         has_scheme(c, WeightKind::GaussianStructured, BaseDistribution::StandardNormal) &&
         has_scheme(c, WeightKind::Dirichlet, {});
}

bool same_gammas(const ExperimentConfig& c, std::vector<double> want) {
  return c.gammas == want;
}

std::vector<Criterion> criteria() {
  return {
      {1, "weight moments", {"weights_moments.json"}, 30.0,
       [](const ExperimentConfig& c) {
         return need(all_three_schemes(c) && c.n == 2000 && c.m == 400 && c.reps == 20000,
                     "three schemes, n=2000, m=400, 20000 draws");
       }},
      {2, "CLT, dirichlet weights, p=1", {"clt_dirichlet.json"}, 60.0,
       [](const ExperimentConfig& c) {
         return need(c.model->kind == "uniform" && c.model->p == 1 && c.n == 10000 && c.m == 2000 &&
                         c.reps == 10000 && has_scheme(c, WeightKind::Dirichlet, {}) &&
                         c.threshold("ks_max") == 0.03,
                     "uniform p=1, dirichlet, n=1e4, m=2000, 1e4 samples, ks_max 0.03");
       }},
      {3, "CLT, gaussian weights, p=6", {"clt_gaussian_p6.json"}, 0.0,
       [](const ExperimentConfig& c) {
         return need(c.model->kind == "uniform" && c.model->p == 6 && c.n == 10000 && c.m == 2000 &&
                         c.reps == 10000 &&
                         has_scheme(c, WeightKind::GaussianStructured, BaseDistribution::StandardNormal) &&
                         c.threshold("ks_max") == 0.03 && c.threshold("covariance_se") == 4.0,
                     "uniform p=6, gaussian, n=1e4, m=2000, 1e4 samples");
       }},
      {4, "CLT universality", {"clt_universality.json"}, 0.0,
       [](const ExperimentConfig& c) {
         return need(c.model->kind == "uniform" && c.model->p == 1 && c.n == 10000 && c.m == 2000 &&
                         c.reps == 10000 && has_scheme(c, WeightKind::Minibatch, {}) &&
                         has_scheme(c, WeightKind::GaussianStructured, BaseDistribution::Rademacher) &&
                         c.threshold("ks_max") == 0.03,
                     "minibatch and rademacher weights at n=1e4, m=2000");
       }},
      {5, "second-moment gap identity", {"thm1_gap.json"}, 120.0,
       [](const ExperimentConfig& c) {
         const std::vector<std::pair<std::size_t, std::size_t>> pairs{{10000, 2500}, {10000, 9000}};
         return need(all_three_schemes(c) && c.pairs == pairs && c.model->kind == "quadratic" &&
                         c.model->p == 2 && c.model->s == 1.0 && c.threshold("gap_se") == 3.0,
                     "three schemes, (1e4,2500) and (1e4,9000), quadratic p=2 s=1");
       }},
      {6, "Wasserstein step-size scaling", {"wass_scaling.json"}, 300.0,
       [](const ExperimentConfig& c) {
         return need(c.model->kind == "quadratic" && c.model->p == 2 && c.model->s == 1.0 &&
                         c.T == 1.0 && c.n == 512 && c.m == 64 && c.reps == 500 &&
                         same_gammas(c, {0.2, 0.1, 0.05, 0.025}) &&
                         c.threshold("monotone_slack") == 0.1 && c.threshold("slope_min") == 0.8 &&
                         c.threshold("slope_max") == 2.2,
                     "quadratic p=2, T=1, n=512, m=64, 500 reps, four step sizes");
       }},
      {7, "strongly convex rate", {"converge_quadratic.json"}, 120.0,
       [](const ExperimentConfig& c) {
         const std::vector<ProcessKind> procs{ProcessKind::GaussianSGD, ProcessKind::MSGD};
         return need(c.model->kind == "quadratic" && c.model->p == 1 && c.model->s == 1.0 &&
                         same_gammas(c, {0.1}) && c.m == 50 && c.K == 200 && c.reps == 500 &&
                         c.processes == procs && c.threshold("recursion_se") == 4.0 &&
                         c.threshold("rho_tol") == 0.02,
                     "quadratic p=1, gamma 0.1, m=50, K=200, 500 reps, both processes");
       }},
      {8, "logistic regression curves", {"converge_logistic.json"}, 600.0,
       [](const ExperimentConfig& c) {
         const std::vector<double> kappas{0.2, 0.1, 0.05, 0.01, 0.001};
         return need(c.model->kind == "logistic" && c.model->p == 6 && c.model->t == 10000 &&
                         c.model->kappa == kappas && c.n == 1000 && c.m == 10 &&
                         same_gammas(c, {0.5, 0.1}) &&
                         has_scheme(c, WeightKind::GaussianStructured, BaseDistribution::StandardNormal) &&
                         c.threshold("order_se") == 2.0,
                     "logistic p=6, t=1e4, n=1000, m=10, five kappas, gamma 0.5 and 0.1");
       }},
      {9, "gradient descent vs gradient flow", {"gd_ode.json"}, 10.0,
       [](const ExperimentConfig& c) {
         return need(c.model->kind == "quadratic" && c.model->p == 1 && c.T == 1.0 &&
                         c.x0 == Vector{1.0} && same_gammas(c, {0.1, 0.05, 0.025, 0.0125}) &&
                         c.threshold("slope_min") == 0.8 && c.threshold("slope_max") == 1.2,
                     "quadratic p=1, x0=1, T=1, four step sizes");
       }},
  };
}

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    files[e.path().filename().string()] = io::read_file(e.path().string());
  }
  return files;
}

void print(int id, const std::string& title, const Outcome& o, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  for (const auto& n : o.notes) std::printf("     %s\n", n.c_str());
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_out";
  unsigned rerun_threads = 8;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (arg == "--rerun-threads" && i + 1 < argc) {
      rerun_threads = static_cast<unsigned>(std::stoul(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: acceptance [--work-dir DIR] [--rerun-threads N]\n");
      return 2;
    }
  }
  const fs::path config_dir = MSGD_CONFIG_DIR;
  fs::remove_all(work);

  bool all = true;
  std::vector<std::string> ran;
  std::vector<ExperimentConfig> parsed;
  for (const auto& crit : criteria()) {
    Outcome o;
    double seconds = 0.0;
    std::size_t n_checks = 0;
    for (const auto& name : crit.configs) {
      try {
        const auto cfg = parse_config(io::read_file((config_dir / name).string()));
        if (auto bad = crit.shape(cfg); !bad.empty()) o.fail(name + ": " + bad);
        const auto t0 = std::chrono::steady_clock::now();
        const auto report = run_experiment(cfg, (work / "threads1" / fs::path(name).stem()).string(), 1);
        seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        n_checks += report.checks.size();
        if (report.checks.empty()) o.fail(name + ": no checks were evaluated");
        for (const auto& c : report.checks) {
          if (!c.pass) {
            char buf[256];
            std::snprintf(buf, sizeof buf, "%s: %s observed %.6g target %.6g tol %.4g (%s)",
                          name.c_str(), c.name.c_str(), c.observed, c.target, c.tolerance,
                          std::string(to_string(c.comparison)).c_str());
            o.fail(buf);
          }
        }
        ran.push_back(name);
        parsed.push_back(cfg);
      } catch (const std::exception& e) {
        o.fail(name + ": " + e.what());
      }
    }
    if (crit.max_seconds > 0.0 && seconds >= crit.max_seconds) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "runtime %.1f s exceeds %.0f s", seconds, crit.max_seconds);
      o.fail(buf);
    }
    char detail[96];
    std::snprintf(detail, sizeof detail, "%zu checks, %.1f s", n_checks, seconds);
    print(crit.id, crit.title, o, detail);
    all = all && o.pass;
  }

  Outcome det;
  std::size_t compared = 0;
  for (std::size_t i = 0; i < ran.size(); ++i) {
    const auto stem = fs::path(ran[i]).stem();
    try {
      run_experiment(parsed[i], (work / "rerun" / stem).string(), rerun_threads);
      const auto a = read_dir(work / "threads1" / stem);
      const auto b = read_dir(work / "rerun" / stem);
      if (a.size() != b.size()) det.fail(ran[i] + ": different set of output files");
      for (const auto& [file, text] : a) {
        const auto it = b.find(file);
        if (it == b.end() || it->second != text) det.fail(ran[i] + ": " + file + " differs");
        ++compared;
      }
    } catch (const std::exception& e) {
      det.fail(ran[i] + ": " + e.what());
    }
  }
  if (ran.size() != criteria().size()) det.fail("some configurations did not run");
  print(10, "determinism across thread counts", det,
        std::to_string(compared) + " files compared, 1 vs " + std::to_string(rerun_threads) + " threads");
  all = all && det.pass;

  std::printf("%s\n", all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
  return all ? 0 : 1;
}
