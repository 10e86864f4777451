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
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "msgd/error.hpp"
#include "msgd/numerics.hpp"
#include "msgd/parallel.hpp"
#include "msgd/rng.hpp"

namespace msgd {

enum class WeightKind { Minibatch, GaussianStructured, Dirichlet };

/// Law of the iid X_i behind Gaussian-structured weights. All have mean 0
/// and variance 1.
enum class BaseDistribution { StandardNormal, Rademacher, UniformScaled };

inline std::string_view to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::Minibatch: return "minibatch";
    case WeightKind::GaussianStructured: return "gaussian";
    case WeightKind::Dirichlet: return "dirichlet";
  }
  return "?";
}

inline std::string_view to_string(BaseDistribution base) {
  switch (base) {
    case BaseDistribution::StandardNormal: return "normal";
    case BaseDistribution::Rademacher: return "rademacher";
    case BaseDistribution::UniformScaled: return "uniform";
  }
  return "?";
}

struct WeightScheme {
  WeightKind kind = WeightKind::Minibatch;
  BaseDistribution base = BaseDistribution::StandardNormal;
  std::size_t n = 1;
  std::size_t m = 1;

  void validate() const {
    require(m >= 1 && m <= n, "weight scheme: need 1 <= m <= n");
    if (kind == WeightKind::Dirichlet) {
      require(m >= 2 && m < n,
              "weight scheme: dirichlet needs 2 <= m < n so that (m-1)/(n-m) is "
              "positive and finite");
    }
    if (kind == WeightKind::GaussianStructured) {
      require(n >= 2, "weight scheme: gaussian-structured weights need n >= 2");
    }
  }

  /// Per-coordinate Dirichlet concentration (m-1)/(n-m).
  double dirichlet_shape() const {
    return static_cast<double>(m - 1) / static_cast<double>(n - m);
  }

  /// Short label used in file names, e.g. "gaussian-rademacher".
  std::string label() const {
    std::string out(to_string(kind));
    if (kind == WeightKind::GaussianStructured && base != BaseDistribution::StandardNormal) {
      out += "-";
      out += to_string(base);
    }
    return out;
  }
};

struct WeightVector {
  Vector values;
  WeightScheme scheme;
};

struct SigmaEntries {
  double diag = 0.0;
  double offdiag = 0.0;
};

/// Entries of the weight covariance: diag (n-m)/(m n^2), off-diagonal
/// -(n-m)/(m n^2 (n-1)); the off-diagonal is 0 when n = 1.
inline SigmaEntries sigma_entries(std::size_t n, std::size_t m) {
  require(m >= 1 && m <= n, "sigma_entries: need 1 <= m <= n");
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  const double diag = (nd - md) / (md * nd * nd);
  const double off = n == 1 ? 0.0 : -diag / (nd - 1.0);
  return {diag, off};
}

//---------------------------------------------------------------------------//
// Samplers. The *_into variants write into a caller-owned buffer of length n
// and are what the simulation loops use.
//---------------------------------------------------------------------------//

/// m distinct indices of {0..n-1} by a sparse partial Fisher-Yates shuffle;
/// only displaced slots are remembered, so extra memory is O(m).
inline void sample_minibatch_into(RngStream& stream, const WeightScheme& scheme,
                                  std::span<double> out) {
  const std::size_t n = scheme.n;
  const std::size_t m = scheme.m;
  std::fill(out.begin(), out.end(), 0.0);
  const double w = 1.0 / static_cast<double>(m);
  if (m == n) {
    std::fill(out.begin(), out.end(), w);
    return;
  }
  std::unordered_map<std::size_t, std::size_t> displaced;
  displaced.reserve(2 * m);
  auto slot = [&](std::size_t i) {
    auto it = displaced.find(i);
    return it == displaced.end() ? i : it->second;
  };
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.below(n - i));
    const std::size_t picked = slot(j);
    displaced[j] = slot(i);
    out[picked] = w;
  }
}

/// W = c (X - mean(X) l) + l/n, c = sqrt((n-m)/(m n (n-1))); the projection
/// (I - l l^T / n) is applied implicitly.
inline void sample_gaussian_structured_into(RngStream& stream, const WeightScheme& scheme,
                                            std::span<double> out) {
  const std::size_t n = scheme.n;
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(scheme.m);
  const double inv_n = 1.0 / nd;
  if (scheme.m == n) {
    std::fill(out.begin(), out.end(), inv_n);
    return;
  }
  switch (scheme.base) {
    case BaseDistribution::StandardNormal:
      fill_std_normal(stream, out);
      break;
    case BaseDistribution::Rademacher:
      for (std::size_t i = 0; i < n; i += 64) {
        std::uint64_t bits = stream();
        for (std::size_t b = i; b < std::min(n, i + 64); ++b, bits >>= 1) {
          out[b] = (bits & 1u) ? 1.0 : -1.0;
        }
      }
      break;
    case BaseDistribution::UniformScaled: {
      const double scale = std::sqrt(3.0);
      for (double& x : out) x = scale * (2.0 * stream.uniform() - 1.0);
      break;
    }
  }
  double mean = 0.0;
  for (double x : out) mean += x;
  mean *= inv_n;
  const double c = std::sqrt((nd - md) / (md * nd * (nd - 1.0)));
  for (double& x : out) x = c * (x - mean) + inv_n;
}

/// Dirichlet((m-1)/(n-m), ...) via normalized gamma draws. Gammas are drawn
/// in log space and shifted by their maximum before exponentiating, so the
/// normalizing sum is at least 1 and cannot underflow.
inline void sample_dirichlet_into(RngStream& stream, const WeightScheme& scheme,
                                  std::span<double> out) {
  const double shape = scheme.dirichlet_shape();
  double top = -std::numeric_limits<double>::infinity();
  for (double& x : out) {
    x = sample_log_gamma(stream, shape);
    top = std::max(top, x);
  }
  double total = 0.0;
  for (double& x : out) {
    x = std::exp(x - top);
    total += x;
  }
  for (double& x : out) x /= total;
}

inline void sample_weights_into(RngStream& stream, const WeightScheme& scheme,
                                std::span<double> out) {
  require(out.size() == scheme.n, "sample_weights: buffer length must equal n");
  switch (scheme.kind) {
    case WeightKind::Minibatch: sample_minibatch_into(stream, scheme, out); break;
    case WeightKind::GaussianStructured:
      sample_gaussian_structured_into(stream, scheme, out);
      break;
    case WeightKind::Dirichlet: sample_dirichlet_into(stream, scheme, out); break;
  }
}

inline WeightVector sample_minibatch_weights(RngStream& stream, const WeightScheme& scheme) {
  require(scheme.kind == WeightKind::Minibatch, "sample_minibatch_weights: wrong scheme kind");
  scheme.validate();
  WeightVector w{Vector(scheme.n), scheme};
  sample_minibatch_into(stream, scheme, w.values);
  return w;
}

inline WeightVector sample_gaussian_structured_weights(RngStream& stream,
                                                       const WeightScheme& scheme) {
  require(scheme.kind == WeightKind::GaussianStructured,
          "sample_gaussian_structured_weights: wrong scheme kind");
  scheme.validate();
  WeightVector w{Vector(scheme.n), scheme};
  sample_gaussian_structured_into(stream, scheme, w.values);
  return w;
}

inline WeightVector sample_dirichlet_weights(RngStream& stream, const WeightScheme& scheme) {
  require(scheme.kind == WeightKind::Dirichlet, "sample_dirichlet_weights: wrong scheme kind");
  scheme.validate();
  WeightVector w{Vector(scheme.n), scheme};
  sample_dirichlet_into(stream, scheme, w.values);
  return w;
}

inline WeightVector sample_weights(RngStream& stream, const WeightScheme& scheme) {
  scheme.validate();
  WeightVector w{Vector(scheme.n), scheme};
  sample_weights_into(stream, scheme, w.values);
  return w;
}

//---------------------------------------------------------------------------//
// Moments
//---------------------------------------------------------------------------//

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

/// Monte Carlo moments of a weight law over a fixed set of tracked
/// coordinates and coordinate pairs.
struct MomentReport {
  std::vector<std::size_t> coordinates;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<Estimate> mean;              // per tracked coordinate
  std::vector<Estimate> variance;          // per tracked coordinate
  std::vector<Estimate> covariance;        // per tracked pair
  Estimate m_sum_sq;                       // E[m sum w_i^2]
  Estimate m32_sum_cube;                   // E[m^{3/2} sum |w_i|^3]
  Estimate sqrt_m_max_dev;                 // E[sqrt(m) max_i |w_i - 1/n|]
  // Averages over all coordinates / all ordered pairs i != j, centered at
  // the known mean 1/n so each draw contributes an unbiased term:
  //   variance: sum_i (w_i - 1/n)^2 / n
  //   offdiag:  ((sum_i w_i - 1)^2 - sum_i (w_i - 1/n)^2) / (n (n - 1))
  Estimate pooled_variance;
  Estimate pooled_offdiag_covariance;
  std::size_t reps = 0;
};

namespace detail {

inline Estimate variance_estimate(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - mean) * (xs[i] - mean);
  const auto m = mean_and_se(sq);
  return {m.mean * n / (n - 1.0), m.se * n / (n - 1.0)};
}

inline Estimate covariance_estimate(std::span<const double> xs, std::span<const double> ys) {
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  std::vector<double> prod(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) prod[i] = (xs[i] - mx) * (ys[i] - my);
  const auto m = mean_and_se(prod);
  return {m.mean * n / (n - 1.0), m.se * n / (n - 1.0)};
}

}  // namespace detail

/// Default tracked coordinates {0, 1, n/2, n-1} and pairs
/// {(0,1), (0,n-1), (n/2, n/2+1)} (deduplicated for tiny n).
inline MomentReport empirical_weight_moments(const WeightScheme& scheme, const RngStream& stream,
                                             std::size_t reps, unsigned threads = 1) {
  scheme.validate();
  require(reps >= 100, "empirical_weight_moments: reps must be >= 100");
  const std::size_t n = scheme.n;
  MomentReport report;
  report.reps = reps;
  for (std::size_t c : {std::size_t{0}, std::size_t{1}, n / 2, n - 1}) {
    if (c < n && std::find(report.coordinates.begin(), report.coordinates.end(), c) ==
                     report.coordinates.end()) {
      report.coordinates.push_back(c);
    }
  }
  if (n >= 2) {
    report.pairs.emplace_back(0, 1);
    if (n > 2) report.pairs.emplace_back(0, n - 1);
    if (n / 2 + 1 < n && n / 2 > 1) report.pairs.emplace_back(n / 2, n / 2 + 1);
  }

  const std::size_t nc = report.coordinates.size();
  std::vector<double> tracked(reps * nc);
  std::vector<double> pair_a(reps * report.pairs.size());
  std::vector<double> pair_b(reps * report.pairs.size());
  std::vector<double> sum_sq(reps), sum_cube(reps), max_dev(reps);
  std::vector<double> pooled_var(reps), pooled_off(reps);
  const double md = static_cast<double>(scheme.m);
  const double inv_n = 1.0 / static_cast<double>(n);

  parallel_for(reps, threads, [&](std::size_t r) {
    RngStream s = stream.derive({"rep", r, "weights"});
    Vector w(n);
    sample_weights_into(s, scheme, w);
    for (std::size_t c = 0; c < nc; ++c) tracked[r * nc + c] = w[report.coordinates[c]];
    for (std::size_t k = 0; k < report.pairs.size(); ++k) {
      pair_a[r * report.pairs.size() + k] = w[report.pairs[k].first];
      pair_b[r * report.pairs.size() + k] = w[report.pairs[k].second];
    }
    double s2 = 0.0, s3 = 0.0, dev = 0.0, total = 0.0, centered_sq = 0.0;
    for (double x : w) {
      s2 += x * x;
      s3 += std::abs(x) * x * x;
      dev = std::max(dev, std::abs(x - inv_n));
      total += x;
      centered_sq += (x - inv_n) * (x - inv_n);
    }
    const double nd = static_cast<double>(n);
    pooled_var[r] = centered_sq / nd;
    pooled_off[r] = n > 1 ? ((total - 1.0) * (total - 1.0) - centered_sq) / (nd * (nd - 1.0)) : 0.0;
    sum_sq[r] = md * s2;
    sum_cube[r] = md * std::sqrt(md) * s3;
    max_dev[r] = std::sqrt(md) * dev;
  });

  std::vector<double> col(reps), col_b(reps);
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t r = 0; r < reps; ++r) col[r] = tracked[r * nc + c];
    const auto m = mean_and_se(col);
    report.mean.push_back({m.mean, m.se});
    report.variance.push_back(detail::variance_estimate(col));
  }
  for (std::size_t k = 0; k < report.pairs.size(); ++k) {
    for (std::size_t r = 0; r < reps; ++r) {
      col[r] = pair_a[r * report.pairs.size() + k];
      col_b[r] = pair_b[r * report.pairs.size() + k];
    }
    report.covariance.push_back(detail::covariance_estimate(col, col_b));
  }
  const auto s2 = mean_and_se(sum_sq);
  const auto s3 = mean_and_se(sum_cube);
  const auto dv = mean_and_se(max_dev);
  report.m_sum_sq = {s2.mean, s2.se};
  report.m32_sum_cube = {s3.mean, s3.se};
  report.sqrt_m_max_dev = {dv.mean, dv.se};
  const auto pv = mean_and_se(pooled_var);
  const auto po = mean_and_se(pooled_off);
  report.pooled_variance = {pv.mean, pv.se};
  report.pooled_offdiag_covariance = {po.mean, po.se};
  return report;
}

/// E[prod_i X_i^{beta_i}] for X ~ Dir(alpha):
///   Gamma(sum alpha) / Gamma(sum(alpha + beta)) * prod Gamma(alpha_i + beta_i) / Gamma(alpha_i),
/// evaluated in log space.
inline double dirichlet_mixed_moment(std::span<const double> alpha,
                                     std::span<const unsigned> beta) {
  require(alpha.size() == beta.size(), "dirichlet_mixed_moment: alpha and beta lengths differ");
  require(!alpha.empty(), "dirichlet_mixed_moment: empty alpha");
  double alpha_sum = 0.0, total_sum = 0.0, log_ratio = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    require(alpha[i] > 0.0, "dirichlet_mixed_moment: alpha entries must be positive");
    alpha_sum += alpha[i];
    total_sum += alpha[i] + beta[i];
    if (beta[i] != 0) log_ratio += std::lgamma(alpha[i] + beta[i]) - std::lgamma(alpha[i]);
  }
  return std::exp(std::lgamma(alpha_sum) - std::lgamma(total_sum) + log_ratio);
}

}  // namespace msgd
