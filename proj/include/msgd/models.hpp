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
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msgd/error.hpp"
#include "msgd/io.hpp"
#include "msgd/numerics.hpp"
#include "msgd/rng.hpp"

namespace msgd {

/// Problem constants used by the rate bounds.
///   L       Lipschitz constant of grad g
///   L1      Lipschitz constant of the noise factor sigma(.)
///   lambda  strong-convexity constant of g, when g is strongly convex
///   E_h1_sq E h_1(u)^2 for the per-datum gradient Lipschitz modulus h_1
struct ModelConstants {
  double L = 0.0;
  double L1 = 0.0;
  std::optional<double> lambda;
  std::optional<double> E_h1_sq;
};

/// A stochastic objective g(theta) = E_u l(theta, u) with u ~ Q.
///
/// Models expose the per-datum gradient as an accumulate-in-place operation
/// (out += scale * grad l(theta, u)) because the simulation loops sum n of
/// them per step. noise_factor(theta) is any sigma with
/// sigma sigma^T = Var_u[grad l(theta, u)]; its column count is noise_dim().
template <class M>
concept LossModel = requires(const M& model, RngStream& stream, std::span<const double> theta,
                             typename M::Datum& datum, std::span<double> out, double scale) {
  typename M::Datum;
  { model.dim() } -> std::convertible_to<std::size_t>;
  { model.noise_dim() } -> std::convertible_to<std::size_t>;
  { model.objective(theta) } -> std::convertible_to<double>;
  { model.grad_objective(theta) } -> std::same_as<Vector>;
  { model.make_datum() } -> std::same_as<typename M::Datum>;
  model.sample_datum(stream, datum);
  model.add_grad_loss(theta, std::as_const(datum), scale, out);
  { model.noise_factor(theta) } -> std::same_as<DenseMatrix>;
  { model.apply_noise_factor(theta, std::span<const double>()) } -> std::same_as<Vector>;
  { model.constants() } -> std::same_as<ModelConstants>;
};

template <LossModel M>
typename M::Datum sample_datum(const M& model, RngStream& stream) {
  auto datum = model.make_datum();
  model.sample_datum(stream, datum);
  return datum;
}

template <LossModel M>
Vector grad_loss(const M& model, std::span<const double> theta, const typename M::Datum& u) {
  Vector out(model.dim(), 0.0);
  model.add_grad_loss(theta, u, 1.0, out);
  return out;
}

/// Tr sigma^2(theta) = ||sigma(theta)||_F^2.
template <LossModel M>
double noise_trace(const M& model, std::span<const double> theta) {
  return model.noise_factor(theta).frobenius_norm_sq();
}

//---------------------------------------------------------------------------//
// Quadratic model: l(theta, u) = |theta - u|^2 / 2 with u ~ N(theta*, s^2 I).
// Closed forms everywhere; the workhorse oracle model.
//---------------------------------------------------------------------------//
class QuadraticModel {
 public:
  using Datum = Vector;

  QuadraticModel(Vector theta_star, double s) : theta_star_(std::move(theta_star)), s_(s) {
    require(!theta_star_.empty(), "quadratic model: dimension must be >= 1");
    require(s >= 0.0 && std::isfinite(s), "quadratic model: s must be finite and >= 0");
  }

  std::size_t dim() const { return theta_star_.size(); }
  std::size_t noise_dim() const { return theta_star_.size(); }
  double noise_scale() const { return s_; }
  const Vector& minimizer() const { return theta_star_; }

  // E l(theta, u) = |theta - theta*|^2 / 2 + p s^2 / 2
  double objective(std::span<const double> theta) const {
    return 0.5 * norm_sq(subtract(theta, theta_star_)) +
           0.5 * static_cast<double>(dim()) * s_ * s_;
  }
  double minimum_value() const { return 0.5 * static_cast<double>(dim()) * s_ * s_; }

  Vector grad_objective(std::span<const double> theta) const {
    return subtract(theta, theta_star_);
  }

  Datum make_datum() const { return Vector(dim()); }

  void sample_datum(RngStream& stream, Datum& u) const {
    fill_std_normal(stream, u);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = theta_star_[i] + s_ * u[i];
  }

  void add_grad_loss(std::span<const double> theta, const Datum& u, double scale,
                     std::span<double> out) const {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * (theta[i] - u[i]);
  }

  DenseMatrix noise_factor(std::span<const double>) const {
    return DenseMatrix::identity(dim(), s_);
  }

  Vector apply_noise_factor(std::span<const double>, std::span<const double> xi) const {
    Vector out(xi.begin(), xi.end());
    for (double& v : out) v *= s_;
    return out;
  }

  ModelConstants constants() const { return {1.0, 0.0, 1.0, 1.0}; }

 private:
  Vector theta_star_;
  double s_;
};

inline QuadraticModel make_quadratic_model(std::size_t p, Vector theta_star, double s) {
  require(theta_star.size() == p, "make_quadratic_model: theta_star must have length p");
  return QuadraticModel(std::move(theta_star), s);
}

//---------------------------------------------------------------------------//
// Uniform CLT model: grad l(theta, u) = u with u_j ~ Unif(-1, 1) iid, so
// g = 0 and sigma^2 = I / 3 at every theta.
//---------------------------------------------------------------------------//
class UniformCltModel {
 public:
  using Datum = Vector;

  explicit UniformCltModel(std::size_t p) : p_(p) {
    require(p >= 1, "uniform CLT model: dimension must be >= 1");
  }

  std::size_t dim() const { return p_; }
  std::size_t noise_dim() const { return p_; }
  double objective(std::span<const double>) const { return 0.0; }
  Vector grad_objective(std::span<const double>) const { return Vector(p_, 0.0); }
  Datum make_datum() const { return Vector(p_); }

  void sample_datum(RngStream& stream, Datum& u) const {
    for (double& v : u) v = 2.0 * stream.uniform() - 1.0;
  }

  void add_grad_loss(std::span<const double>, const Datum& u, double scale,
                     std::span<double> out) const {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * u[i];
  }

  DenseMatrix noise_factor(std::span<const double>) const {
    return DenseMatrix::identity(p_, 1.0 / std::sqrt(3.0));
  }

  Vector apply_noise_factor(std::span<const double>, std::span<const double> xi) const {
    Vector out(xi.begin(), xi.end());
    for (double& v : out) v /= std::sqrt(3.0);
    return out;
  }

  ModelConstants constants() const { return {0.0, 0.0, std::nullopt, std::nullopt}; }

 private:
  std::size_t p_;
};

inline UniformCltModel make_uniform_clt_model(std::size_t p) { return UniformCltModel(p); }

//---------------------------------------------------------------------------//
// Ridge-penalized logistic regression over a fixed dataset, resampled with
// replacement.
//---------------------------------------------------------------------------//
struct LogisticDataset {
  std::size_t p = 0;
  Vector y;   // labels in {0, 1}
  Vector x;   // row-major t x p covariates
  double kappa = 0.0;

  std::size_t t() const { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * p, p}; }

  void validate() const {
    require(p >= 1, "logistic dataset: p must be >= 1");
    require(t() >= 1, "logistic dataset: need at least one data point");
    require(x.size() == t() * p, "logistic dataset: covariate block must be t x p");
    require(kappa > 0.0 && std::isfinite(kappa), "logistic dataset: kappa must be > 0");
    for (double v : y) require(v == 0.0 || v == 1.0, "logistic dataset: labels must be 0 or 1");
    require(all_finite(x), "logistic dataset: covariates must be finite");
  }
};

/// y_i ~ Bernoulli(1/2), x_i ~ N(0, I_p), all independent.
inline LogisticDataset generate_logistic_dataset(const RngStream& stream, std::size_t p,
                                                       std::size_t t, double kappa) {
  require(p >= 1 && t >= 1, "generate_logistic_dataset: need p, t >= 1");
  LogisticDataset ds{p, Vector(t), Vector(t * p), kappa};
  RngStream labels = stream.derive("labels");
  RngStream covariates = stream.derive("covariates");
  for (double& v : ds.y) v = (labels() >> 63) ? 1.0 : 0.0;
  fill_std_normal(covariates, ds.x);
  return ds;
}

inline std::string logistic_dataset_to_csv(const LogisticDataset& ds) {
  io::CsvWriter w;
  std::vector<std::string> header{"y"};
  for (std::size_t j = 0; j < ds.p; ++j) header.push_back("x" + std::to_string(j + 1));
  w.header(header);
  for (std::size_t i = 0; i < ds.t(); ++i) {
    std::vector<std::string> cells{io::format_double(ds.y[i])};
    for (double v : ds.row(i)) cells.push_back(io::format_double(v));
    w.write_row(cells);
  }
  return w.str();
}

inline LogisticDataset logistic_dataset_from_csv(std::string_view text, double kappa) {
  const auto rows = io::parse_csv(text);
  require(rows.size() >= 2, "logistic csv: need a header row and at least one data row");
  const auto& header = rows.front();
  require(header.size() >= 2 && header[0] == "y", "logistic csv: header must be y,x1..xp");
  LogisticDataset ds;
  ds.p = header.size() - 1;
  ds.kappa = kappa;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    require(rows[r].size() == header.size(),
            "logistic csv: row " + std::to_string(r) + " has the wrong number of cells");
    ds.y.push_back(std::stod(rows[r][0]));
    for (std::size_t j = 1; j < rows[r].size(); ++j) ds.x.push_back(std::stod(rows[r][j]));
  }
  ds.validate();
  return ds;
}

class LogisticModel {
 public:
  struct Datum {
    double y = 0.0;
    std::span<const double> x;
  };

  explicit LogisticModel(LogisticDataset dataset) : data_(std::move(dataset)) {
    data_.validate();
    DenseMatrix gram(data_.p, data_.p);
    double mean_x4 = 0.0, mean_h1_sq = 0.0;
    for (std::size_t i = 0; i < data_.t(); ++i) {
      const auto xi = data_.row(i);
      for (std::size_t a = 0; a < data_.p; ++a)
        for (std::size_t b = 0; b < data_.p; ++b) gram(a, b) += xi[a] * xi[b];
      const double sq = norm_sq(xi);
      mean_x4 += sq * sq;
      const double h1 = 0.25 * sq + 2.0 * data_.kappa;
      mean_h1_sq += h1 * h1;
    }
    const double t = static_cast<double>(data_.t());
    lambda_max_xxt_ = largest_eigenvalue(gram, 1e-6);
    mean_x4 /= t;
    mean_h1_sq /= t;
    constants_.L = lambda_max_xxt_ / (4.0 * t) + 2.0 * data_.kappa;
    // |sigmoid(a) - sigmoid(b)| <= |a - b| / 4 and centering the columns only
    // shrinks them, so ||sigma(b1) - sigma(b2)||_F^2 <= mean|x|^4 / 16 |b1 - b2|^2.
    constants_.L1 = 0.25 * std::sqrt(mean_x4);
    constants_.lambda = 2.0 * data_.kappa;
    constants_.E_h1_sq = mean_h1_sq;
  }

  const LogisticDataset& dataset() const { return data_; }
  std::size_t dim() const { return data_.p; }
  std::size_t noise_dim() const { return data_.t(); }
  double kappa() const { return data_.kappa; }
  double lambda_max_xxt() const { return lambda_max_xxt_; }

  /// The looser Lipschitz bound lambda_max(X X^T)/t + 2 kappa, which ignores
  /// the 1/4 cap on the sigmoid derivative.
  double loose_lipschitz_bound() const {
    return lambda_max_xxt_ / static_cast<double>(data_.t()) + 2.0 * data_.kappa;
  }

  static double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }

  static double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }

  double objective(std::span<const double> beta) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < data_.t(); ++i) {
      const double z = dot(data_.row(i), beta);
      acc += -data_.y[i] * z + softplus(z);
    }
    return acc / static_cast<double>(data_.t()) + data_.kappa * norm_sq(beta);
  }

  Vector grad_objective(std::span<const double> beta) const {
    Vector g(data_.p, 0.0);
    for (std::size_t i = 0; i < data_.t(); ++i) {
      const auto xi = data_.row(i);
      axpy(sigmoid(dot(xi, beta)) - data_.y[i], xi, g);
    }
    const double inv_t = 1.0 / static_cast<double>(data_.t());
    for (std::size_t j = 0; j < data_.p; ++j) g[j] = g[j] * inv_t + 2.0 * data_.kappa * beta[j];
    return g;
  }

  Datum make_datum() const { return {data_.y[0], data_.row(0)}; }

  void sample_datum(RngStream& stream, Datum& u) const {
    const auto i = static_cast<std::size_t>(stream.below(data_.t()));
    u = {data_.y[i], data_.row(i)};
  }

  void add_grad_loss(std::span<const double> beta, const Datum& u, double scale,
                     std::span<double> out) const {
    const double c = scale * (sigmoid(dot(u.x, beta)) - u.y);
    const double r = scale * 2.0 * data_.kappa;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += c * u.x[j] + r * beta[j];
  }

  /// p x t matrix with columns (grad l(beta, z_i) - grad g(beta)) / sqrt(t).
  DenseMatrix noise_factor(std::span<const double> beta) const {
    const Vector g = grad_objective(beta);
    const double inv_sqrt_t = 1.0 / std::sqrt(static_cast<double>(data_.t()));
    DenseMatrix out(data_.p, data_.t());
    Vector col(data_.p);
    for (std::size_t i = 0; i < data_.t(); ++i) {
      std::fill(col.begin(), col.end(), 0.0);
      add_grad_loss(beta, {data_.y[i], data_.row(i)}, 1.0, col);
      for (std::size_t j = 0; j < data_.p; ++j) out(j, i) = (col[j] - g[j]) * inv_sqrt_t;
    }
    return out;
  }

  Vector apply_noise_factor(std::span<const double> beta, std::span<const double> xi) const {
    require(xi.size() == data_.t(), "logistic noise factor: driver must have length t");
    Vector acc(data_.p, 0.0);
    double xi_sum = 0.0;
    for (std::size_t i = 0; i < data_.t(); ++i) {
      add_grad_loss(beta, {data_.y[i], data_.row(i)}, xi[i], acc);
      xi_sum += xi[i];
    }
    const Vector g = grad_objective(beta);
    const double inv_sqrt_t = 1.0 / std::sqrt(static_cast<double>(data_.t()));
    for (std::size_t j = 0; j < data_.p; ++j) acc[j] = (acc[j] - xi_sum * g[j]) * inv_sqrt_t;
    return acc;
  }

  ModelConstants constants() const { return constants_; }

 private:
  LogisticDataset data_;
  double lambda_max_xxt_ = 0.0;
  ModelConstants constants_;
};

inline LogisticModel make_logistic_model(LogisticDataset dataset) {
  require(dataset.kappa > 0.0, "make_logistic_model: kappa must be > 0");
  return LogisticModel(std::move(dataset));
}

static_assert(LossModel<QuadraticModel>);
static_assert(LossModel<UniformCltModel>);
static_assert(LossModel<LogisticModel>);

}  // namespace msgd
