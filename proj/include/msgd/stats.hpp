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
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "msgd/dynamics.hpp"
#include "msgd/error.hpp"
#include "msgd/models.hpp"
#include "msgd/numerics.hpp"
#include "msgd/parallel.hpp"
#include "msgd/rng.hpp"
#include "msgd/weights.hpp"

namespace msgd {

//---------------------------------------------------------------------------//
// CLT error samples
//---------------------------------------------------------------------------//

/// Rows are independent draws of sqrt(m) sum_i w_i (grad l(theta, u_i) - grad g(theta)).
struct ErrorSampleSet {
  DenseMatrix samples;
  Vector theta;
  WeightScheme scheme;

  std::size_t reps() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
  Vector coordinate(std::size_t j) const { return samples.column(j); }
};

template <LossModel M>
ErrorSampleSet clt_error_samples(const M& model, const WeightScheme& scheme,
                                 std::span<const double> theta, std::size_t reps,
                                 const RngStream& stream, unsigned threads = 1) {
  scheme.validate();
  require(reps >= 100, "clt_error_samples: reps must be >= 100");
  require(theta.size() == model.dim(), "clt_error_samples: theta has the wrong dimension");
  const std::size_t p = model.dim();
  const Vector grad_g = model.grad_objective(theta);
  const double sqrt_m = std::sqrt(static_cast<double>(scheme.m));
  DenseMatrix out(reps, p);
  parallel_for(reps, threads, [&](std::size_t r) {
    RngStream ws = stream.derive({"rep", r, "weights"});
    RngStream ds = stream.derive({"rep", r, "data"});
    Vector w(scheme.n);
    sample_weights_into(ws, scheme, w);
    auto datum = model.make_datum();
    Vector acc(p, 0.0);
    double w_sum = 0.0;
    for (std::size_t i = 0; i < scheme.n; ++i) {
      model.sample_datum(ds, datum);
      model.add_grad_loss(theta, datum, w[i], acc);
      w_sum += w[i];
    }
    auto row = out.row(r);
    for (std::size_t j = 0; j < p; ++j) row[j] = sqrt_m * (acc[j] - w_sum * grad_g[j]);
  });
  return {std::move(out), Vector(theta.begin(), theta.end()), scheme};
}

/// Sample covariance entry (i, j) of the rows with its Monte Carlo SE.
inline Estimate sample_covariance_entry(const DenseMatrix& rows, std::size_t i, std::size_t j) {
  return detail::covariance_estimate(rows.column(i), rows.column(j));
}

//---------------------------------------------------------------------------//
// Normality
//---------------------------------------------------------------------------//

struct KsResult {
  double statistic = 0.0;
  std::size_t n_samples = 0;
};

/// sup_x |F_N(x) - Phi(x / sqrt(v))| for the empirical CDF F_N.
inline KsResult ks_normality(std::span<const double> samples, double variance) {
  require(variance > 0.0, "ks_normality: variance must be positive");
  require(samples.size() >= 100, "ks_normality: need at least 100 samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const double sd = std::sqrt(variance);
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = normal_cdf(sorted[i] / sd);
    const double idx = static_cast<double>(i);
    d = std::max({d, (idx + 1.0) / n - f, f - idx / n});
  }
  return {d, sorted.size()};
}

//---------------------------------------------------------------------------//
// Wasserstein-2
//---------------------------------------------------------------------------//

enum class DistanceMethod { Exact1D, Sliced, CoordinateAverage };

inline std::string_view to_string(DistanceMethod m) {
  switch (m) {
    case DistanceMethod::Exact1D: return "exact1d";
    case DistanceMethod::Sliced: return "sliced";
    case DistanceMethod::CoordinateAverage: return "coordinate-average";
  }
  return "?";
}

/// Squared W2 estimate between two empirical measures.
struct DistanceEstimate {
  double value = 0.0;
  DistanceMethod method = DistanceMethod::Exact1D;
  std::size_t n_directions = 0;
  std::size_t n_samples = 0;
};

/// Exact squared W2 between two equal-size empirical measures on the line:
/// the sorted (quantile) coupling is optimal.
inline DistanceEstimate w2_1d(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "w2_1d: sample sets must have equal size");
  require(a.size() >= 2, "w2_1d: need at least two samples");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) acc += (sa[i] - sb[i]) * (sa[i] - sb[i]);
  return {acc / static_cast<double>(sa.size()), DistanceMethod::Exact1D, 0, sa.size()};
}

/// Uniform random unit directions in R^p (normalized Gaussians), one row each.
inline DenseMatrix random_directions(std::size_t count, std::size_t p, RngStream stream) {
  require(count >= 1 && p >= 1, "random_directions: need count, p >= 1");
  DenseMatrix dirs(count, p);
  for (std::size_t r = 0; r < count; ++r) {
    auto row = dirs.row(r);
    double len = 0.0;
    do {
      fill_std_normal(stream, row);
      len = norm(row);
    } while (len == 0.0);
    for (double& v : row) v /= len;
  }
  return dirs;
}

inline DistanceEstimate sliced_w2(const DenseMatrix& a, const DenseMatrix& b,
                                  const DenseMatrix& directions) {
  require(a.rows() == b.rows(), "sliced_w2: sample sets must have equal size");
  require(a.cols() == b.cols() && a.cols() == directions.cols(),
          "sliced_w2: dimension mismatch");
  const std::size_t N = a.rows();
  Vector pa(N), pb(N);
  double acc = 0.0;
  for (std::size_t d = 0; d < directions.rows(); ++d) {
    const auto u = directions.row(d);
    for (std::size_t i = 0; i < N; ++i) {
      pa[i] = dot(a.row(i), u);
      pb[i] = dot(b.row(i), u);
    }
    acc += w2_1d(pa, pb).value;
  }
  return {acc / static_cast<double>(directions.rows()), DistanceMethod::Sliced,
          directions.rows(), N};
}

/// Average over random unit directions of the 1-D squared W2 of the
/// projections. Deterministic given the stream; swapping a and b gives the
/// identical value.
inline DistanceEstimate sliced_w2(const DenseMatrix& a, const DenseMatrix& b,
                                  std::size_t n_directions, const RngStream& stream) {
  require(a.cols() >= 1, "sliced_w2: dimension must be >= 1");
  require(n_directions >= 1, "sliced_w2: need at least one direction");
  return sliced_w2(a, b, random_directions(n_directions, a.cols(), stream));
}

/// Mean over coordinates of the 1-D squared W2 of the marginals.
inline DistanceEstimate coordinate_w2(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "coordinate_w2: shape mismatch");
  double acc = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) acc += w2_1d(a.column(j), b.column(j)).value;
  return {acc / static_cast<double>(a.cols()), DistanceMethod::CoordinateAverage, 0, a.rows()};
}

//---------------------------------------------------------------------------//
// Second-moment gap between the M-SGD error and the plain sample-mean error
//---------------------------------------------------------------------------//

struct GapEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double analytic = 0.0;
};

/// Monte Carlo estimate of
///   E | sqrt(m) (sum w_i grad l - grad g) - sqrt(n) (mean grad l - grad g) |^2
/// next to its exact value 2 (1 - sqrt(m/n)) Tr sigma^2(theta).
template <LossModel M>
GapEstimate thm1_gap(const M& model, std::span<const double> theta, const WeightScheme& scheme,
                     std::size_t reps, const RngStream& stream, unsigned threads = 1) {
  scheme.validate();
  require(reps >= 1000, "thm1_gap: reps must be >= 1000");
  const std::size_t p = model.dim();
  const Vector grad_g = model.grad_objective(theta);
  const double sqrt_m = std::sqrt(static_cast<double>(scheme.m));
  const double sqrt_n = std::sqrt(static_cast<double>(scheme.n));
  const double inv_n = 1.0 / static_cast<double>(scheme.n);
  std::vector<double> sq(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    RngStream ws = stream.derive({"rep", r, "weights"});
    RngStream ds = stream.derive({"rep", r, "data"});
    Vector w(scheme.n);
    sample_weights_into(ws, scheme, w);
    auto datum = model.make_datum();
    Vector weighted(p, 0.0), plain(p, 0.0);
    for (std::size_t i = 0; i < scheme.n; ++i) {
      model.sample_datum(ds, datum);
      model.add_grad_loss(theta, datum, w[i], weighted);
      model.add_grad_loss(theta, datum, 1.0, plain);
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double diff = sqrt_m * (weighted[j] - grad_g[j]) - sqrt_n * (plain[j] * inv_n - grad_g[j]);
      acc += diff * diff;
    }
    sq[r] = acc;
  });
  const auto est = mean_and_se(sq);
  const double analytic =
      2.0 * (1.0 - std::sqrt(static_cast<double>(scheme.m) * inv_n)) * noise_trace(model, theta);
  return {est.mean, est.se, analytic};
}

//---------------------------------------------------------------------------//
// Strongly convex regime
//---------------------------------------------------------------------------//

struct RateBound {
  double rho = 0.0;
  bool gamma_ok = false;   // 0 < gamma < min(1/L, 1)
  bool m_ok = false;       // m > 2 p L L1 gamma / (lambda^2 (2 - L gamma))
  bool rho_below_one = false;
};

/// rho = 1 - lambda gamma (2 - L gamma) + 2 p L L1^2 gamma^2 / (m lambda).
inline RateBound rho_bound(double lambda, double gamma, double L, double L1, std::size_t p,
                           std::size_t m) {
  require(lambda > 0.0 && gamma > 0.0 && L > 0.0 && L1 >= 0.0 && p >= 1 && m >= 1,
          "rho_bound: inputs must be positive");
  const double md = static_cast<double>(m);
  const double pd = static_cast<double>(p);
  RateBound out;
  out.rho = 1.0 - lambda * gamma * (2.0 - L * gamma) +
            2.0 * pd * L * L1 * L1 * gamma * gamma / (md * lambda);
  out.gamma_ok = gamma < std::min(1.0 / L, 1.0);
  out.m_ok = md > 2.0 * pd * L * L1 * gamma / (lambda * lambda * (2.0 - L * gamma));
  out.rho_below_one = out.rho < 1.0;
  return out;
}

/// Stationary term of the strongly convex bound on E g(x_k) - g(x*):
///   L gamma ||sigma(x*)||_F^2 / (m (lambda (2 - L gamma) - 2 p L L1^2 gamma / (m lambda))).
inline double plateau_bound(double lambda, double gamma, double L, double L1, std::size_t p,
                            std::size_t m, double sigma_star_frob_sq) {
  const double md = static_cast<double>(m);
  const double denom = lambda * (2.0 - L * gamma) -
                       2.0 * static_cast<double>(p) * L * L1 * L1 * gamma / (md * lambda);
  require(denom > 0.0, "plateau_bound: rate conditions violated (non-positive denominator)");
  return L * gamma * sigma_star_frob_sq / (md * denom);
}

/// Per-iteration Monte Carlo curves over replications.
struct ConvergenceCurve {
  std::vector<Estimate> gap;      // E g(x_k) - g(x*), empty when not requested
  std::vector<Estimate> sqdist;   // E |x_k - x*|^2
  std::vector<Estimate> sqnorm;   // E |x_k|^2
  DenseMatrix sqdist_by_rep;      // reps x (K+1), surviving replications only
  std::vector<std::pair<std::size_t, std::size_t>> failures;  // (replication, iteration)
  std::size_t reps = 0;
};

struct CurveReference {
  Vector x_star;
  std::optional<double> g_star;   // when set, objective gaps are computed
};

/// Replicates `runner(stream_r)` over reps path-derived streams and averages.
/// Diverged replications are listed in `failures` and left out of the means.
template <LossModel M, class Runner>
ConvergenceCurve convergence_curve(const M& model, Runner&& runner, std::size_t K,
                                   std::size_t reps, const RngStream& stream,
                                   const CurveReference& ref, unsigned threads = 1) {
  require(reps >= 2, "convergence_curve: need at least two replications");
  const std::size_t len = K + 1;
  std::vector<std::optional<Trajectory>> runs(reps);
  std::vector<std::optional<std::size_t>> failed_at(reps);
  std::vector<double> gaps(ref.g_star ? reps * len : 0);
  parallel_for(reps, threads, [&](std::size_t r) {
    try {
      Trajectory tr = runner(stream.derive({"rep", r}));
      require(tr.states.size() == len, "convergence_curve: runner returned the wrong length");
      if (ref.g_star) {
        for (std::size_t k = 0; k < len; ++k) gaps[r * len + k] = model.objective(tr.states[k]) - *ref.g_star;
      }
      runs[r] = std::move(tr);
    } catch (const DivergenceError& e) {
      failed_at[r] = e.iteration();
    }
  });

  ConvergenceCurve curve;
  std::vector<std::size_t> alive;
  for (std::size_t r = 0; r < reps; ++r) {
    if (failed_at[r]) curve.failures.emplace_back(r, *failed_at[r]);
    else alive.push_back(r);
  }
  curve.reps = alive.size();
  require(alive.size() >= 2, "convergence_curve: fewer than two replications survived");
  curve.sqdist_by_rep = DenseMatrix(alive.size(), len);
  std::vector<double> col_d(alive.size()), col_n(alive.size()), col_g(alive.size());
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t a = 0; a < alive.size(); ++a) {
      const Vector& x = runs[alive[a]]->states[k];
      col_d[a] = norm_sq(subtract(x, ref.x_star));
      col_n[a] = norm_sq(x);
      curve.sqdist_by_rep(a, k) = col_d[a];
      if (ref.g_star) col_g[a] = gaps[alive[a] * len + k];
    }
    const auto d = mean_and_se(col_d);
    const auto n = mean_and_se(col_n);
    curve.sqdist.push_back({d.mean, d.se});
    curve.sqnorm.push_back({n.mean, n.se});
    if (ref.g_star) {
      const auto g = mean_and_se(col_g);
      curve.gap.push_back({g.mean, g.se});
    }
  }
  return curve;
}

inline std::vector<double> values_of(std::span<const Estimate> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& e : xs) out.push_back(e.value);
  return out;
}

/// exp of the least-squares slope of log(curve[k]) over
/// k = burn_in .. burn_in + window - 1.
inline double contraction_fit(std::span<const double> curve, std::size_t burn_in,
                              std::size_t window) {
  require(window >= 2, "contraction_fit: window must cover at least two points");
  require(burn_in + window <= curve.size(), "contraction_fit: window runs past the curve");
  std::vector<double> ks, logs;
  for (std::size_t k = burn_in; k < burn_in + window; ++k) {
    require(curve[k] > 0.0, "contraction_fit: curve must be positive over the window");
    ks.push_back(static_cast<double>(k));
    logs.push_back(std::log(curve[k]));
  }
  return std::exp(fit_line(ks, logs).slope);
}

/// Default window: first third of the curve, starting at burn_in 0.
inline double contraction_fit(std::span<const double> curve) {
  return contraction_fit(curve, 0, std::max<std::size_t>(2, curve.size() / 3));
}

}  // namespace msgd
