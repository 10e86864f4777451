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


#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "msgd/config.hpp"
#include "msgd/dynamics.hpp"
#include "msgd/io.hpp"
#include "msgd/models.hpp"
#include "msgd/parallel.hpp"
#include "msgd/stats.hpp"
#include "msgd/weights.hpp"

namespace msgd {

//---------------------------------------------------------------------------//
// Histograms
//---------------------------------------------------------------------------//

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  std::size_t count = 0;
};

/// bin_count equal-width bins spanning [min, max]; the last bin is closed.
/// Constant samples land in the first bin.
inline std::vector<HistogramBin> emit_histogram(std::span<const double> samples,
                                                std::size_t bin_count) {
  require(!samples.empty(), "emit_histogram: no samples");
  require(bin_count >= 1, "emit_histogram: need at least one bin");
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it, hi = *hi_it;
  require(std::isfinite(lo) && std::isfinite(hi), "emit_histogram: samples must be finite");
  const double width = (hi - lo) / static_cast<double>(bin_count);
  std::vector<HistogramBin> bins(bin_count);
  for (std::size_t b = 0; b < bin_count; ++b) {
    bins[b].left = lo + static_cast<double>(b) * width;
    bins[b].right = b + 1 == bin_count ? hi : lo + static_cast<double>(b + 1) * width;
  }
  for (double x : samples) {
    std::size_t b = 0;
    if (width > 0.0) {
      b = std::min(bin_count - 1, static_cast<std::size_t>((x - lo) / width));
    }
    ++bins[b].count;
  }
  return bins;
}

//---------------------------------------------------------------------------//
// Reports
//---------------------------------------------------------------------------//

enum class Comparison { Within, AtMost, AtLeast };

inline std::string_view to_string(Comparison c) {
  switch (c) {
    case Comparison::Within: return "within";
    case Comparison::AtMost: return "at_most";
    case Comparison::AtLeast: return "at_least";
  }
  return "?";
}

/// within:   |observed - target| <= tolerance
/// at_most:  observed <= target + tolerance
/// at_least: observed >= target - tolerance
struct Check {
  std::string name;
  double observed = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  Comparison comparison = Comparison::Within;
  bool pass = false;
};

inline bool evaluate(Comparison c, double observed, double target, double tolerance) {
  switch (c) {
    case Comparison::Within: return std::abs(observed - target) <= tolerance;
    case Comparison::AtMost: return observed <= target + tolerance;
    case Comparison::AtLeast: return observed >= target - tolerance;
  }
  return false;
}

struct ExperimentReport {
  Command command = Command::GdOde;
  std::uint64_t seed = 0;
  Json config;
  std::vector<Check> checks;
  Json values = Json::object();
  std::vector<std::string> files;

  bool pass() const {
    return !checks.empty() &&
           std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }

  const Check* find(std::string_view name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }

  void add(std::string name, double observed, double target, double tolerance, Comparison cmp) {
    checks.push_back({std::move(name), observed, target, tolerance, cmp,
                      evaluate(cmp, observed, target, tolerance)});
  }

  std::string to_json() const {
    Json j;
    j["command"] = std::string(to_string(command));
    j["seed"] = seed;
    j["config"] = config;
    Json list = Json::array();
    for (const auto& c : checks) {
      list.push_back({{"name", c.name},
                      {"observed", c.observed},
                      {"target", c.target},
                      {"tolerance", c.tolerance},
                      {"comparison", std::string(to_string(c.comparison))},
                      {"pass", c.pass}});
    }
    j["checks"] = std::move(list);
    j["values"] = values;
    j["files"] = files;
    j["pass"] = pass();
    return j.dump(2) + "\n";
  }
};

/// k standard errors plus a relative roundoff floor, which only matters when
/// a statistic is deterministic and its standard error is exactly zero.
inline double mc_tolerance(double k, double se, double target) {
  return k * se + 1e-9 * std::abs(target);
}

namespace detail {

inline std::string tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Shared state of one run: configuration, output directory and report.
class RunContext {
 public:
  RunContext(const ExperimentConfig& config, std::filesystem::path dir, unsigned threads)
      : config_(config), dir_(std::move(dir)), threads_(std::max(1u, threads)) {
    std::filesystem::create_directories(dir_);
    report_.command = config.command;
    report_.seed = config.seed;
    report_.config = config.echo;
    root_ = derive_stream(config.seed, {std::string(to_string(config.command))});
  }

  const ExperimentConfig& config() const { return config_; }
  unsigned threads() const { return threads_; }
  const RngStream& root() const { return root_; }
  ExperimentReport& report() { return report_; }
  double threshold(const std::string& name) const { return config_.threshold(name); }

  io::CsvWriter csv() const {
    io::CsvWriter w;
    w.comment("config: " + config_.echo.dump());
    w.comment("seed: " + std::to_string(config_.seed));
    return w;
  }

  void write(const std::string& name, const io::CsvWriter& w) {
    io::write_file((dir_ / name).string(), w.str());
    report_.files.push_back(name);
  }

  void finish() {
    report_.files.push_back("report.json");
    io::write_file((dir_ / "report.json").string(), report_.to_json());
  }

 private:
  const ExperimentConfig& config_;
  std::filesystem::path dir_;
  unsigned threads_;
  RngStream root_{0};
  ExperimentReport report_;
};

using AnyModel = std::variant<QuadraticModel, UniformCltModel, LogisticModel>;

inline LogisticDataset logistic_dataset(const ModelSpec& spec, const RngStream& root) {
  if (!spec.dataset.empty()) {
    auto ds = logistic_dataset_from_csv(io::read_file(spec.dataset), spec.kappa.front());
    if (ds.p != spec.p) throw ConfigError("model.p", "does not match the dataset's column count");
    return ds;
  }
  return generate_logistic_dataset(root.derive("dataset"), spec.p, spec.t, spec.kappa.front());
}

inline AnyModel build_model(const ModelSpec& spec, const RngStream& root) {
  if (spec.kind == "quadratic") return QuadraticModel(spec.theta_star, spec.s);
  if (spec.kind == "uniform") return UniformCltModel(spec.p);
  return LogisticModel(logistic_dataset(spec, root));
}

inline void write_histogram(RunContext& ctx, const std::string& name, std::span<const double> xs) {
  auto w = ctx.csv();
  w.header({"bin_left", "bin_right", "count"});
  for (const auto& b : emit_histogram(xs, ctx.config().bins)) w.row(b.left, b.right, b.count);
  ctx.write(name, w);
}

//---------------------------------------------------------------------------//
// Commands
//---------------------------------------------------------------------------//

inline void run_weights_moments(RunContext& ctx) {
  const auto& cfg = ctx.config();
  auto& rep = ctx.report();
  const auto sigma = sigma_entries(cfg.n, cfg.m);
  const double inv_n = 1.0 / static_cast<double>(cfg.n);
  auto w = ctx.csv();
  w.header({"scheme", "statistic", "i", "j", "value", "se", "target"});
  for (const auto& spec : cfg.schemes) {
    const WeightScheme scheme = spec.with(cfg.n, cfg.m);
    const auto label = scheme.label();
    const auto mr = empirical_weight_moments(scheme, ctx.root().derive({"scheme", label}), cfg.reps,
                                             ctx.threads());
    const auto k_mean = ctx.threshold("mean_se"), k_var = ctx.threshold("variance_se"),
               k_cov = ctx.threshold("covariance_se"), k_sq = ctx.threshold("m_sum_sq_se");
    for (std::size_t c = 0; c < mr.coordinates.size(); ++c) {
      const auto i = mr.coordinates[c];
      const auto si = std::to_string(i);
      rep.add(label + "/mean[" + si + "]", mr.mean[c].value, inv_n, mc_tolerance(k_mean, mr.mean[c].se, inv_n),
              Comparison::Within);
      rep.add(label + "/variance[" + si + "]", mr.variance[c].value, sigma.diag,
              mc_tolerance(k_var, mr.variance[c].se, sigma.diag), Comparison::Within);
      w.row(label, "mean", i, i, mr.mean[c].value, mr.mean[c].se, inv_n);
      w.row(label, "variance", i, i, mr.variance[c].value, mr.variance[c].se, sigma.diag);
    }
    for (std::size_t k = 0; k < mr.pairs.size(); ++k) {
      const auto [i, j] = mr.pairs[k];
      rep.add(label + "/covariance[" + std::to_string(i) + "," + std::to_string(j) + "]",
              mr.covariance[k].value, sigma.offdiag,
              mc_tolerance(k_cov, mr.covariance[k].se, sigma.offdiag), Comparison::Within);
      w.row(label, "covariance", i, j, mr.covariance[k].value, mr.covariance[k].se, sigma.offdiag);
    }
    rep.add(label + "/pooled_variance", mr.pooled_variance.value, sigma.diag,
            mc_tolerance(k_var, mr.pooled_variance.se, sigma.diag), Comparison::Within);
    rep.add(label + "/pooled_covariance", mr.pooled_offdiag_covariance.value, sigma.offdiag,
            mc_tolerance(k_cov, mr.pooled_offdiag_covariance.se, sigma.offdiag), Comparison::Within);
    rep.add(label + "/m_sum_sq", mr.m_sum_sq.value, 1.0, mc_tolerance(k_sq, mr.m_sum_sq.se, 1.0),
            Comparison::Within);
    w.row(label, "pooled_variance", "all", "all", mr.pooled_variance.value, mr.pooled_variance.se, sigma.diag);
    w.row(label, "pooled_covariance", "all", "all", mr.pooled_offdiag_covariance.value,
          mr.pooled_offdiag_covariance.se, sigma.offdiag);
    w.row(label, "m_sum_sq", "all", "all", mr.m_sum_sq.value, mr.m_sum_sq.se, 1.0);
    w.row(label, "m32_sum_cube", "all", "all", mr.m32_sum_cube.value, mr.m32_sum_cube.se, 0.0);
    w.row(label, "sqrt_m_max_dev", "all", "all", mr.sqrt_m_max_dev.value, mr.sqrt_m_max_dev.se, 0.0);
    rep.values[label] = {{"m32_sum_cube", mr.m32_sum_cube.value},
                         {"sqrt_m_max_dev", mr.sqrt_m_max_dev.value}};
  }
  ctx.write("moments.csv", w);
}

template <LossModel M>
void run_clt(RunContext& ctx, const M& model) {
  const auto& cfg = ctx.config();
  auto& rep = ctx.report();
  const std::size_t p = model.dim();
  const DenseMatrix target = model.noise_factor(cfg.theta).gram();
  auto summary = ctx.csv();
  summary.header({"scheme", "coordinate", "ks", "variance", "variance_se", "target_variance"});
  for (const auto& spec : cfg.schemes) {
    const WeightScheme scheme = spec.with(cfg.n, cfg.m);
    const auto label = scheme.label();
    const auto set = clt_error_samples(model, scheme, cfg.theta, cfg.reps,
                                       ctx.root().derive({"scheme", label}), ctx.threads());
    for (std::size_t j = 0; j < p; ++j) {
      const Vector col = set.coordinate(j);
      const auto ks = ks_normality(col, target(j, j));
      const auto var = sample_covariance_entry(set.samples, j, j);
      const auto sj = std::to_string(j + 1);
      rep.add(label + "/ks[x" + sj + "]", ks.statistic, ctx.threshold("ks_max"), 0.0, Comparison::AtMost);
      summary.row(label, j + 1, ks.statistic, var.value, var.se, target(j, j));
      write_histogram(ctx, "hist_" + label + "_x" + sj + ".csv", col);
    }
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = a; b < p; ++b) {
        const auto c = sample_covariance_entry(set.samples, a, b);
        rep.add(label + "/covariance[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "]",
                c.value, target(a, b), mc_tolerance(ctx.threshold("covariance_se"), c.se, target(a, b)),
                Comparison::Within);
      }
    }
  }
  ctx.write("clt.csv", summary);
}

template <LossModel M>
void run_thm1_gap(RunContext& ctx, const M& model) {
  const auto& cfg = ctx.config();
  auto& rep = ctx.report();
  auto w = ctx.csv();
  w.header({"scheme", "n", "m", "estimate", "se", "analytic"});
  for (const auto& [n, m] : cfg.pairs) {
    for (const auto& spec : cfg.schemes) {
      const WeightScheme scheme = spec.with(n, m);
      const auto label = scheme.label();
      const auto g = thm1_gap(model, cfg.theta, scheme, cfg.reps,
                              ctx.root().derive({"scheme", label, "n", n, "m", m}), ctx.threads());
      rep.add(label + "/n=" + std::to_string(n) + ",m=" + std::to_string(m), g.estimate, g.analytic,
              mc_tolerance(ctx.threshold("gap_se"), g.se, g.analytic), Comparison::Within);
      w.row(label, n, m, g.estimate, g.se, g.analytic);
    }
  }
  ctx.write("gap.csv", w);
}

template <LossModel M, class Runner>
DenseMatrix final_states(const M& model, std::size_t reps, unsigned threads, Runner&& runner) {
  DenseMatrix out(reps, model.dim());
  parallel_for(reps, threads, [&](std::size_t r) {
    const Trajectory tr = runner(r);
    const Vector& x = tr.final_state();
    std::copy(x.begin(), x.end(), out.row(r).begin());
  });
  return out;
}

template <LossModel M>
void run_wass_scaling(RunContext& ctx, const M& model) {
  const auto& cfg = ctx.config();
  auto& rep = ctx.report();
  const WeightScheme scheme = cfg.schemes.front().with(cfg.n, cfg.m);
  auto w = ctx.csv();
  w.header({"gamma", "w2sq", "method", "substeps", "n_directions", "samples"});
  // The diffusion is also simulated with twice the substeps; a discretization
  // error that mattered would show up as a different scaling law.
  std::vector<double> w2(cfg.gammas.size()), w2_fine(cfg.gammas.size());
  for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi) {
    const double gamma = cfg.gammas[gi];
    const auto run = RunConfig::with_horizon(gamma, cfg.T, cfg.m, cfg.n, cfg.x0);
    const RngStream base = ctx.root().derive({"gamma", gi});
    const DenseMatrix msgd = final_states(model, cfg.reps, ctx.threads(), [&](std::size_t r) {
      return run_msgd(model, scheme, run, base.derive({"msgd", r}));
    });
    const DenseMatrix diffusion = final_states(model, cfg.reps, ctx.threads(), [&](std::size_t r) {
      return run_diffusion_em(model, run, cfg.substeps, base.derive({"diffusion", r}));
    });
    const DenseMatrix fine = final_states(model, cfg.reps, ctx.threads(), [&](std::size_t r) {
      return run_diffusion_em(model, run, 2 * cfg.substeps, base.derive({"diffusion-fine", r}));
    });
    const auto directions = random_directions(cfg.directions, model.dim(), base.derive("directions"));
    const auto sliced = sliced_w2(msgd, diffusion, directions);
    const auto sliced_fine = sliced_w2(msgd, fine, directions);
    const auto coord = coordinate_w2(msgd, diffusion);
    w2[gi] = sliced.value;
    w2_fine[gi] = sliced_fine.value;
    const std::string sliced_name(to_string(sliced.method));
    w.row(gamma, sliced.value, sliced_name, cfg.substeps, sliced.n_directions, sliced.n_samples);
    w.row(gamma, sliced_fine.value, sliced_name, 2 * cfg.substeps, sliced.n_directions, sliced.n_samples);
    w.row(gamma, coord.value, std::string(to_string(coord.method)), cfg.substeps, 0, coord.n_samples);
  }
  ctx.write("distances.csv", w);

  std::vector<std::size_t> order(cfg.gammas.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return cfg.gammas[a] > cfg.gammas[b]; });
  const double slack = ctx.threshold("monotone_slack");
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto big = order[i - 1], small = order[i];
    rep.add("monotone/gamma=" + tag(cfg.gammas[small]) + "_vs_" + tag(cfg.gammas[big]), w2[small],
            w2[big], slack * w2[big], Comparison::AtMost);
  }
  std::vector<double> lg, lw, lw_fine;
  for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi) {
    lg.push_back(std::log(cfg.gammas[gi]));
    lw.push_back(std::log(w2[gi]));
    lw_fine.push_back(std::log(w2_fine[gi]));
  }
  const double lo = ctx.threshold("slope_min"), hi = ctx.threshold("slope_max");
  rep.add("slope", fit_line(lg, lw).slope, 0.5 * (lo + hi), 0.5 * (hi - lo), Comparison::Within);
  rep.add("slope_double_substeps", fit_line(lg, lw_fine).slope, 0.5 * (lo + hi), 0.5 * (hi - lo),
          Comparison::Within);
}

// Quadratic model: curves against the exact second-moment recursion, the
// fitted contraction factor against rho, and the plateau against its bound.
inline void run_converge_quadratic(RunContext& ctx, const QuadraticModel& model) {
  const auto& cfg = ctx.config();
  auto& rep = ctx.report();
  const double gamma = cfg.gammas.front();
  const RunConfig run{gamma, cfg.K, cfg.m, cfg.n, cfg.x0};
  const WeightScheme scheme = cfg.schemes.front().with(cfg.n, cfg.m);
  const auto consts = model.constants();
  const double lambda = *consts.lambda, L = consts.L;
  const std::size_t p = model.dim();
  const double trace = noise_trace(model, model.minimizer());
  const CurveReference ref{model.minimizer(), model.minimum_value()};
  const auto bound = rho_bound(lambda, gamma, L, consts.L1, p, cfg.m);
  const double plateau_limit = plateau_bound(lambda, gamma, L, consts.L1, p, cfg.m, trace);
  rep.values["rho_bound"] = bound.rho;
  rep.values["gamma_ok"] = bound.gamma_ok;
  rep.values["m_ok"] = bound.m_ok;
  rep.values["rho_below_one"] = bound.rho_below_one;
  rep.values["plateau_bound"] = plateau_limit;

  for (ProcessKind kind : cfg.processes) {
    const std::string name(to_string(kind));
    auto runner = [&](const RngStream& s) {
      switch (kind) {
        case ProcessKind::GaussianSGD: return run_gaussian_sgd(model, run, s);
        case ProcessKind::MSGD: return run_msgd(model, scheme, run, s);
        default: return run_gd(model, run);
      }
    };
    const auto curve = convergence_curve(model, runner, cfg.K, cfg.reps, ctx.root().derive(name), ref,
                                         ctx.threads());
    // a_{k+1} = (1 - gamma lambda)^2 a_k + gamma^2 Tr sigma^2 / (2 m)
    const double noise = kind == ProcessKind::GD ? 0.0 : gamma * gamma * trace / (2.0 * cfg.m);
    double a = model.objective(cfg.x0) - model.minimum_value();
    double worst = 0.0;
    auto w = ctx.csv();
    w.header({"k", "gap", "gap_se", "recursion", "sqdist", "sqdist_se"});
    for (std::size_t k = 0; k <= cfg.K; ++k) {
      const auto& g = curve.gap[k];
      worst = std::max(worst, std::abs(g.value - a) / (g.se + 1e-9 * a));
      w.row(k, g.value, g.se, a, curve.sqdist[k].value, curve.sqdist[k].se);
      a = (1.0 - gamma * lambda) * (1.0 - gamma * lambda) * a + noise;
    }
    ctx.write("curve_" + name + ".csv", w);
    const auto gaps = values_of(curve.gap);
    const double rho_hat = contraction_fit(gaps, 0, cfg.fit_window);
    const std::size_t tail = (cfg.K + 1) / 3;
    const double plateau =
        std::accumulate(gaps.end() - static_cast<std::ptrdiff_t>(tail), gaps.end(), 0.0) / tail;
    rep.add(name + "/recursion_max_z", worst, ctx.threshold("recursion_se"), 0.0, Comparison::AtMost);
    rep.add(name + "/rho_hat", rho_hat, bound.rho, ctx.threshold("rho_tol"), Comparison::Within);
    rep.add(name + "/plateau", plateau, plateau_limit, 0.0, Comparison::AtMost);
    rep.values[name] = {{"rho_hat", rho_hat},
                        {"plateau", plateau},
                        {"stationary_gap", noise / (1.0 - (1.0 - gamma * lambda) * (1.0 - gamma * lambda))},
                        {"failures", curve.failures.size()}};
  }
}

struct RateFit {
  double rho = 0.0;
  double se = 0.0;
  double plateau = 0.0;
  std::size_t window = 0;
};

inline double tail_mean(std::span<const double> curve) {
  const std::size_t tail = std::max<std::size_t>(1, curve.size() / 3);
  return std::accumulate(curve.end() - static_cast<std::ptrdiff_t>(tail), curve.end(), 0.0) /
         static_cast<double>(tail);
}

// Fits the geometric phase of curve - plateau, where the plateau is the mean
// of the last third. The window runs from k = 0 while the excess over the
// plateau stays above `excess` times the plateau (at least 3 points, at most
// a third of the curve) unless fixed_window > 0. The SE comes from 10 batch
// means over replications fitted on the same window.
inline RateFit fit_rate(const DenseMatrix& by_rep, double excess, std::size_t fixed_window) {
  const std::size_t reps = by_rep.rows(), len = by_rep.cols();
  auto mean_curve = [&](std::size_t from, std::size_t to) {
    Vector c(len, 0.0);
    for (std::size_t r = from; r < to; ++r) axpy(1.0 / static_cast<double>(to - from), by_rep.row(r), c);
    return c;
  };
  auto fit = [&](const Vector& c, std::size_t window) {
    const double plateau = tail_mean(c);
    Vector ex(window);
    for (std::size_t k = 0; k < window; ++k) ex[k] = std::max(c[k] - plateau, 1e-300);
    return contraction_fit(ex, 0, window);
  };
  const Vector all = mean_curve(0, reps);
  RateFit out;
  out.plateau = tail_mean(all);
  std::size_t window = fixed_window;
  if (window == 0) {
    window = 0;
    while (window < len / 3 && all[window] - out.plateau > excess * out.plateau) ++window;
    window = std::max<std::size_t>(window, 3);
  }
  out.window = window;
  out.rho = fit(all, window);
  const std::size_t batches = 10;
  std::vector<double> rhos;
  for (std::size_t b = 0; b < batches; ++b) {
    rhos.push_back(fit(mean_curve(b * reps / batches, (b + 1) * reps / batches), window));
  }
  out.se = mean_and_se(rhos).se;
  return out;
}

inline void run_converge_logistic(RunContext& ctx) {
  const auto& cfg = ctx.config();
  auto& rep = ctx.report();
  const ModelSpec& spec = *cfg.model;
  LogisticDataset data = logistic_dataset(spec, ctx.root());
  const WeightScheme scheme = cfg.schemes.front().with(cfg.n, cfg.m);
  const std::size_t len = cfg.K + 1;
  const std::size_t sixth = len / 6;

  auto rates = ctx.csv();
  rates.header({"kappa", "gamma", "rho_hat", "rho_se", "fit_window", "plateau", "rho_bound",
                "gamma_ok", "m_ok"});
  // fits[gamma index] = (kappa, fit) for the ordering checks
  std::vector<std::vector<std::pair<double, RateFit>>> fits(cfg.gammas.size());
  for (std::size_t ki = 0; ki < spec.kappa.size(); ++ki) {
    const double kappa = spec.kappa[ki];
    data.kappa = kappa;
    const LogisticModel model(data);
    const Vector beta_star = find_minimizer(model, Vector(model.dim(), 0.0), 1e-10);
    const auto consts = model.constants();
    for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi) {
      const double gamma = cfg.gammas[gi];
      const RunConfig run{gamma, cfg.K, cfg.m, cfg.n, cfg.x0};
      const auto curve = convergence_curve(
          model, [&](const RngStream& s) { return run_msgd(model, scheme, run, s); }, cfg.K, cfg.reps,
          ctx.root().derive({"kappa", ki, "gamma", gi}), {beta_star, std::nullopt}, ctx.threads());
      const std::string name = "kappa=" + tag(kappa) + ",gamma=" + tag(gamma);

      auto w = ctx.csv();
      w.header({"k", "mse", "mse_se", "sqnorm", "sqnorm_se"});
      for (std::size_t k = 0; k < len; ++k) {
        w.row(k, curve.sqdist[k].value, curve.sqdist[k].se, curve.sqnorm[k].value, curve.sqnorm[k].se);
      }
      ctx.write("mse_kappa" + tag(kappa) + "_gamma" + tag(gamma) + ".csv", w);

      const auto mse = values_of(curve.sqdist);
      rep.add(name + "/decrease_ratio", mse.back() / mse.front(), ctx.threshold("decrease_ratio"), 0.0,
              Comparison::AtMost);
      // Plateau: per replication, mean over the last sixth minus mean over
      // the sixth before it; zero on average once the curve is flat.
      std::vector<double> diffs(curve.reps);
      for (std::size_t r = 0; r < curve.reps; ++r) {
        const auto row = curve.sqdist_by_rep.row(r);
        double last = 0.0, prev = 0.0;
        for (std::size_t k = len - sixth; k < len; ++k) last += row[k];
        for (std::size_t k = len - 2 * sixth; k < len - sixth; ++k) prev += row[k];
        diffs[r] = (last - prev) / static_cast<double>(sixth);
      }
      const auto d = mean_and_se(diffs);
      rep.add(name + "/plateau_drift", d.mean, 0.0, ctx.threshold("plateau_se") * d.se, Comparison::Within);

      const auto fit = fit_rate(curve.sqdist_by_rep, ctx.threshold("fit_excess"), cfg.fit_window);
      const auto bound = rho_bound(*consts.lambda, gamma, consts.L, consts.L1, model.dim(), cfg.m);
      fits[gi].emplace_back(kappa, fit);
      rates.row(kappa, gamma, fit.rho, fit.se, fit.window, fit.plateau, bound.rho,
                static_cast<int>(bound.gamma_ok), static_cast<int>(bound.m_ok));
      rep.values[name] = {{"rho_hat", fit.rho},
                          {"rho_se", fit.se},
                          {"plateau", fit.plateau},
                          {"rho_bound", bound.rho},
                          {"failures", curve.failures.size()}};
    }
  }
  ctx.write("rates.csv", rates);

  // Larger kappa contracts faster: rho_hat nonincreasing in kappa, up to
  // order_se combined standard errors.
  for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi) {
    auto list = fits[gi];
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      const auto& big = list[i - 1];
      const auto& small = list[i];
      rep.add("order/gamma=" + tag(cfg.gammas[gi]) + ",kappa=" + tag(big.first) + "_vs_" + tag(small.first),
              big.second.rho, small.second.rho,
              ctx.threshold("order_se") * std::hypot(big.second.se, small.second.se), Comparison::AtMost);
    }
  }
}

template <LossModel M>
void run_gd_ode(RunContext& ctx, const M& model) {
  const auto& cfg = ctx.config();
  auto& rep = ctx.report();
  const double L = model.constants().L;
  const double C1 = norm(model.grad_objective(cfg.x0)) * std::exp(L * cfg.T);
  auto w = ctx.csv();
  w.header({"gamma", "K", "max_error", "final_error", "bound", "first_order_bound"});
  std::vector<double> lg, le;
  for (double gamma : cfg.gammas) {
    const auto run = RunConfig::with_horizon(gamma, cfg.T, 1, 1, cfg.x0);
    const auto gd = run_gd(model, run);
    const auto ode = run_ode(model, cfg.x0, gamma / static_cast<double>(cfg.ode_substeps), cfg.T);
    double worst = 0.0;
    for (std::size_t k = 0; k <= run.K; ++k) {
      worst = std::max(worst, norm(subtract(gd.states[k], ode.states[k * cfg.ode_substeps])));
    }
    const double final_err = norm(subtract(gd.final_state(), ode.final_state()));
    const double Kd = static_cast<double>(run.K);
    const double first_order = C1 * Kd * gamma * std::pow(1.0 + L * gamma, Kd);
    const double bound = first_order * gamma;
    rep.add("gamma=" + tag(gamma) + "/max_error", worst, bound, 0.0, Comparison::AtMost);
    w.row(gamma, run.K, worst, final_err, bound, first_order);
    lg.push_back(std::log(gamma));
    le.push_back(std::log(final_err));
  }
  ctx.write("gd_ode.csv", w);
  const double lo = ctx.threshold("slope_min"), hi = ctx.threshold("slope_max");
  rep.add("slope", fit_line(lg, le).slope, 0.5 * (lo + hi), 0.5 * (hi - lo), Comparison::Within);
}

}  // namespace detail

/// Runs one configured experiment, writing CSV files and report.json into
/// out_dir. Outputs depend only on the configuration (seed included), never
/// on the thread count.
inline ExperimentReport run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                                       unsigned threads = 1) {
  detail::RunContext ctx(config, out_dir, threads);
  auto with_model = [&](auto&& body) {
    auto model = detail::build_model(*config.model, ctx.root());
    std::visit(body, model);
  };
  switch (config.command) {
    case Command::WeightsMoments:
      detail::run_weights_moments(ctx);
      break;
    case Command::Clt:
      with_model([&](const auto& m) { detail::run_clt(ctx, m); });
      break;
    case Command::Thm1Gap:
      with_model([&](const auto& m) { detail::run_thm1_gap(ctx, m); });
      break;
    case Command::WassScaling:
      with_model([&](const auto& m) { detail::run_wass_scaling(ctx, m); });
      break;
    case Command::Converge:
      if (config.model->kind == "logistic") {
        detail::run_converge_logistic(ctx);
      } else {
        detail::run_converge_quadratic(
            ctx, QuadraticModel(config.model->theta_star, config.model->s));
      }
      break;
    case Command::GdOde:
      with_model([&](const auto& m) { detail::run_gd_ode(ctx, m); });
      break;
  }
  ctx.finish();
  return ctx.report();
}

}  // namespace msgd
