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

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msgd/error.hpp"
#include "msgd/io.hpp"
#include "msgd/models.hpp"
#include "msgd/numerics.hpp"
#include "msgd/rng.hpp"
#include "msgd/weights.hpp"

namespace msgd {

enum class ProcessKind { GD, GaussianSGD, MSGD, ODE, DiffusionEM };

inline std::string_view to_string(ProcessKind kind) {
  switch (kind) {
    case ProcessKind::GD: return "gd";
    case ProcessKind::GaussianSGD: return "gaussian-sgd";
    case ProcessKind::MSGD: return "msgd";
    case ProcessKind::ODE: return "ode";
    case ProcessKind::DiffusionEM: return "diffusion-em";
  }
  return "?";
}

/// Step size gamma in (0, 1), K iterations, horizon T = K gamma. n data per
/// step combined with weights of minibatch parameter m. Every process starts
/// at x0.
struct RunConfig {
  double gamma = 0.1;
  std::size_t K = 10;
  std::size_t m = 1;
  std::size_t n = 1;
  Vector x0;

  double horizon() const { return static_cast<double>(K) * gamma; }

  void validate() const {
    require(gamma > 0.0 && gamma < 1.0, "run config: step size must satisfy 0 < gamma < 1");
    require(K >= 1, "run config: K must be >= 1");
    require(m >= 1 && m <= n, "run config: need 1 <= m <= n");
    require(!x0.empty() && all_finite(x0), "run config: x0 must be a finite non-empty vector");
  }

  /// K = T / gamma, which must be an integer up to roundoff.
  static RunConfig with_horizon(double gamma, double T, std::size_t m, std::size_t n, Vector x0) {
    require(gamma > 0.0 && T > 0.0, "run config: gamma and T must be positive");
    const double steps = T / gamma;
    const auto K = static_cast<std::size_t>(std::llround(steps));
    require(K >= 1 && std::abs(static_cast<double>(K) * gamma - T) <= 1e-9 * T,
            "run config: T must be an integer multiple of gamma");
    RunConfig c{gamma, K, m, n, std::move(x0)};
    c.validate();
    return c;
  }
};

/// States x_0..x_K of one process run. `step` is the grid spacing (gamma for
/// the discrete processes and the diffusion record, h for the ODE). M-SGD
/// runs keep each step's aggregate drift sum_i w_i grad l(x_k, u_i);
/// Gaussian-SGD runs keep each step's Brownian increment B_{(k+1)g} - B_{kg}.
struct Trajectory {
  ProcessKind kind = ProcessKind::GD;
  RunConfig config;
  double step = 0.0;
  std::optional<WeightScheme> scheme;
  std::vector<Vector> states;
  std::vector<Vector> drifts;
  std::vector<Vector> increments;

  const Vector& final_state() const { return states.back(); }
  double horizon() const { return step * static_cast<double>(states.size() - 1); }
};

inline constexpr double kDivergenceThreshold = 1e150;

namespace detail {

inline void check_state(std::span<const double> x, std::size_t k, ProcessKind kind) {
  for (double v : x) {
    if (!std::isfinite(v) || std::abs(v) > kDivergenceThreshold) {
      throw DivergenceError(k, std::string(to_string(kind)));
    }
  }
}

inline Trajectory start(ProcessKind kind, const RunConfig& config, std::size_t p) {
  config.validate();
  require(config.x0.size() == p, "run: x0 must have the model's dimension");
  Trajectory tr{kind, config, config.gamma, std::nullopt, {}, {}, {}};
  tr.states.reserve(config.K + 1);
  tr.states.push_back(config.x0);
  return tr;
}

}  // namespace detail

/// x_{k+1} = x_k - gamma grad g(x_k)
template <LossModel M>
Trajectory run_gd(const M& model, const RunConfig& config) {
  Trajectory tr = detail::start(ProcessKind::GD, config, model.dim());
  Vector x = config.x0;
  for (std::size_t k = 0; k < config.K; ++k) {
    axpy(-config.gamma, model.grad_objective(x), x);
    detail::check_state(x, k + 1, tr.kind);
    tr.states.push_back(x);
  }
  return tr;
}

/// x_{k+1} = x_k - gamma grad g(x_k) + (gamma / sqrt(m)) sigma(x_k) xi_{k+1},
/// xi ~ N(0, I_q), one fresh substream per step.
template <LossModel M>
Trajectory run_gaussian_sgd(const M& model, const RunConfig& config, const RngStream& stream) {
  Trajectory tr = detail::start(ProcessKind::GaussianSGD, config, model.dim());
  tr.increments.reserve(config.K);
  const double noise_scale = config.gamma / std::sqrt(static_cast<double>(config.m));
  const double sqrt_gamma = std::sqrt(config.gamma);
  Vector x = config.x0;
  Vector xi(model.noise_dim());
  for (std::size_t k = 0; k < config.K; ++k) {
    RngStream s = stream.derive({"step", k, "noise"});
    fill_std_normal(s, xi);
    const Vector noise = model.apply_noise_factor(x, xi);
    axpy(-config.gamma, model.grad_objective(x), x);
    axpy(noise_scale, noise, x);
    detail::check_state(x, k + 1, tr.kind);
    tr.states.push_back(x);
    Vector dB = xi;
    for (double& v : dB) v *= sqrt_gamma;
    tr.increments.push_back(std::move(dB));
  }
  return tr;
}

/// Online M-SGD: every step draws n fresh data from Q and a fresh weight
/// vector W_k, then x_{k+1} = x_k - gamma sum_i w_{i,k} grad l(x_k, u_{i,k}).
template <LossModel M>
Trajectory run_msgd(const M& model, const WeightScheme& scheme, const RunConfig& config,
                    const RngStream& stream) {
  scheme.validate();
  require(scheme.n == config.n && scheme.m == config.m,
          "run_msgd: scheme (n, m) must match the run config");
  Trajectory tr = detail::start(ProcessKind::MSGD, config, model.dim());
  tr.scheme = scheme;
  tr.drifts.reserve(config.K);
  Vector x = config.x0;
  Vector w(scheme.n);
  auto datum = model.make_datum();
  for (std::size_t k = 0; k < config.K; ++k) {
    RngStream weight_stream = stream.derive({"step", k, "weights"});
    RngStream data_stream = stream.derive({"step", k, "data"});
    sample_weights_into(weight_stream, scheme, w);
    Vector drift(model.dim(), 0.0);
    for (std::size_t i = 0; i < scheme.n; ++i) {
      model.sample_datum(data_stream, datum);
      model.add_grad_loss(x, datum, w[i], drift);
    }
    axpy(-config.gamma, drift, x);
    detail::check_state(x, k + 1, tr.kind);
    tr.states.push_back(x);
    tr.drifts.push_back(std::move(drift));
  }
  return tr;
}

/// Gradient flow dX = -grad g(X) dt by classical RK4 on a grid of spacing h.
template <LossModel M>
Trajectory run_ode(const M& model, std::span<const double> x0, double h, double T) {
  require(h > 0.0 && h < 1.0 && T > 0.0, "run_ode: need 0 < h < 1 and T > 0");
  const auto steps = static_cast<std::size_t>(std::llround(T / h));
  require(steps >= 1 && std::abs(static_cast<double>(steps) * h - T) <= 1e-9 * T,
          "run_ode: T must be an integer multiple of h");
  RunConfig cfg{h, steps, 1, 1, Vector(x0.begin(), x0.end())};
  Trajectory tr = detail::start(ProcessKind::ODE, cfg, model.dim());
  Vector x = cfg.x0;
  const std::size_t p = x.size();
  Vector probe(p);
  auto stage = [&](std::span<const double> base, double a, const Vector& slope) {
    for (std::size_t i = 0; i < p; ++i) probe[i] = base[i] + a * slope[i];
    Vector g = model.grad_objective(probe);
    for (double& v : g) v = -v;
    return g;
  };
  for (std::size_t k = 0; k < steps; ++k) {
    Vector k1 = model.grad_objective(x);
    for (double& v : k1) v = -v;
    const Vector k2 = stage(x, 0.5 * h, k1);
    const Vector k3 = stage(x, 0.5 * h, k2);
    const Vector k4 = stage(x, h, k3);
    for (std::size_t i = 0; i < p; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    detail::check_state(x, k + 1, tr.kind);
    tr.states.push_back(x);
  }
  return tr;
}

/// Euler-Maruyama for dX = -grad g(X) dt + sqrt(gamma/m) sigma(X) dB with
/// inner step h = gamma / R; states are recorded every R substeps.
template <LossModel M>
Trajectory run_diffusion_em(const M& model, const RunConfig& config, std::size_t substeps,
                            const RngStream& stream) {
  require(substeps >= 1, "run_diffusion_em: need R >= 1 substeps");
  Trajectory tr = detail::start(ProcessKind::DiffusionEM, config, model.dim());
  const double h = config.gamma / static_cast<double>(substeps);
  const double diffusion =
      std::sqrt(config.gamma / static_cast<double>(config.m)) * std::sqrt(h);
  Vector x = config.x0;
  Vector z(model.noise_dim());
  for (std::size_t k = 0; k < config.K; ++k) {
    RngStream s = stream.derive({"step", k, "brownian"});
    for (std::size_t r = 0; r < substeps; ++r) {
      fill_std_normal(s, z);
      const Vector noise = model.apply_noise_factor(x, z);
      axpy(-h, model.grad_objective(x), x);
      axpy(diffusion, noise, x);
    }
    detail::check_state(x, k + 1, tr.kind);
    tr.states.push_back(x);
  }
  return tr;
}

namespace detail {

// Segment index k and offset s = t - k gamma; exact grid points (up to
// roundoff in t / gamma) are reported with s == 0.
inline std::pair<std::size_t, double> locate(const Trajectory& tr, double t) {
  const double T = tr.horizon();
  if (!(t >= 0.0 && t <= T * (1.0 + 1e-12))) {
    throw std::out_of_range("interpolate: t = " + io::format_double(t) +
                            " outside [0, " + io::format_double(T) + "]");
  }
  const double pos = t / tr.step;
  const double nearest = std::round(pos);
  const std::size_t K = tr.states.size() - 1;
  if (std::abs(pos - nearest) <= 1e-9) {
    return {std::min(static_cast<std::size_t>(nearest), K), 0.0};
  }
  const auto k = std::min(static_cast<std::size_t>(std::floor(pos)), K - 1);
  return {k, t - static_cast<double>(k) * tr.step};
}

}  // namespace detail

/// Y_t = Y_{k gamma} - (t - k gamma) sum_i w_{i,k} grad l(Y_{k gamma}, u_{i,k}).
inline Vector interpolate_msgd(const Trajectory& tr, double t) {
  require(tr.kind == ProcessKind::MSGD && tr.drifts.size() + 1 == tr.states.size(),
          "interpolate_msgd: needs an M-SGD trajectory with its drift record");
  const auto [k, s] = detail::locate(tr, t);
  if (s == 0.0) return tr.states[k];
  Vector y = tr.states[k];
  axpy(-s, tr.drifts[k], y);
  return y;
}

/// D_t = D_{k gamma} - s grad g(D_{k gamma}) + sqrt(gamma/m) sigma(D_{k gamma}) B_s,
/// s = t - k gamma, with B_s drawn from the Brownian bridge pinned to the
/// stored increment over [k gamma, (k+1) gamma].
template <LossModel M>
Vector interpolate_gaussian_piece(const M& model, const Trajectory& tr, double t,
                                  RngStream& stream) {
  require(tr.kind == ProcessKind::GaussianSGD && tr.increments.size() + 1 == tr.states.size(),
          "interpolate_gaussian_piece: needs a Gaussian-SGD trajectory with increments");
  const auto [k, s] = detail::locate(tr, t);
  if (s == 0.0) return tr.states[k];
  const double gamma = tr.step;
  const double bridge_sd = std::sqrt(s * (gamma - s) / gamma);
  Vector b(model.noise_dim());
  fill_std_normal(stream, b);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = s / gamma * tr.increments[k][i] + bridge_sd * b[i];
  const Vector& base = tr.states[k];
  Vector d = base;
  axpy(-s, model.grad_objective(base), d);
  axpy(std::sqrt(gamma / static_cast<double>(tr.config.m)), model.apply_noise_factor(base, b), d);
  return d;
}

/// Runs gradient descent with step 1/L until |grad g| <= tol. Used to locate
/// minimizers without closed forms.
template <LossModel M>
Vector find_minimizer(const M& model, Vector x, double tol = 1e-10,
                      std::size_t max_iter = 1000000) {
  const double L = model.constants().L;
  require(L > 0.0, "find_minimizer: model needs a positive Lipschitz constant");
  const double step = 1.0 / L;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Vector g = model.grad_objective(x);
    if (norm(g) <= tol) return x;
    axpy(-step, g, x);
    detail::check_state(x, it + 1, ProcessKind::GD);
  }
  throw EvaluationError("find_minimizer: gradient norm did not reach tolerance");
}

/// CSV with columns k, t, x1..xp.
inline std::string trajectory_to_csv(const Trajectory& tr) {
  io::CsvWriter w;
  std::vector<std::string> header{"k", "t"};
  for (std::size_t j = 0; j < tr.states.front().size(); ++j) header.push_back("x" + std::to_string(j + 1));
  w.header(header);
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    std::vector<std::string> cells{std::to_string(k),
                                   io::format_double(static_cast<double>(k) * tr.step)};
    for (double v : tr.states[k]) cells.push_back(io::format_double(v));
    w.write_row(cells);
  }
  return w.str();
}

}  // namespace msgd
