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
#include <numeric>
#include <span>
#include <vector>

#include "msgd/error.hpp"

namespace msgd {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }
inline double norm(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vector subtract(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "subtract: length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

/// Dense row-major real matrix. Holds noise factors, covariances and the
/// small Gram matrices the models need; nothing here tries to be a general
/// linear algebra package.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), entries_(rows * cols, fill) {
    require(rows > 0 && cols > 0, "DenseMatrix: dimensions must be positive");
    require(std::isfinite(fill), "DenseMatrix: entries must be finite");
  }

  DenseMatrix(std::size_t rows, std::size_t cols, Vector entries)
      : rows_(rows), cols_(cols), entries_(std::move(entries)) {
    require(rows > 0 && cols > 0, "DenseMatrix: dimensions must be positive");
    require(entries_.size() == rows * cols,
            "DenseMatrix: entries.size() must equal rows * cols");
    require(all_finite(entries_), "DenseMatrix: entries must be finite");
  }

  static DenseMatrix identity(std::size_t n, double scale = 1.0) {
    DenseMatrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = scale;
    return out;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {entries_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {entries_.data() + r * cols_, cols_}; }

  Vector column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  const Vector& entries() const noexcept { return entries_; }

  Vector multiply(std::span<const double> x) const {
    require(x.size() == cols_, "DenseMatrix::multiply: length mismatch");
    Vector out(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = dot(row(r), x);
    return out;
  }

  // A * A^T
  DenseMatrix gram() const {
    DenseMatrix out(rows_, rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        const double v = dot(row(i), row(j));
        out(i, j) = v;
        out(j, i) = v;
      }
    }
    return out;
  }

  double frobenius_norm_sq() const { return norm_sq(entries_); }

  double trace() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) acc += (*this)(i, i);
    return acc;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector entries_;
};

/// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h.
template <class F>
Vector finite_diff_gradient(F&& f, std::span<const double> x, double h = 1e-5) {
  require(h > 0.0, "finite_diff_gradient: step must be positive");
  Vector probe(x.begin(), x.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(std::span<const double>(probe));
    probe[i] = saved - h;
    const double down = f(std::span<const double>(probe));
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw EvaluationError("finite_diff_gradient: non-finite function value");
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration, stopped once successive Rayleigh quotients agree to `rel_tol`.
inline double largest_eigenvalue(const DenseMatrix& a, double rel_tol = 1e-6,
                                 std::size_t max_iter = 10000) {
  require(a.rows() == a.cols(), "largest_eigenvalue: matrix must be square");
  const std::size_t n = a.rows();
  // Unequal start entries avoid starting orthogonal to the top eigenvector of
  // the common symmetric test matrices.
  Vector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i);
  double lambda = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const double nv = norm(v);
    if (nv == 0.0) return 0.0;
    for (double& e : v) e /= nv;
    Vector av = a.multiply(v);
    const double next = dot(v, av);
    v = std::move(av);
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct MeanAndError {
  double mean = 0.0;
  double se = 0.0;
};

/// Sample mean and its standard error (sample sd / sqrt(N)).
inline MeanAndError mean_and_se(std::span<const double> xs) {
  require(xs.size() >= 2, "mean_and_se: need at least two samples");
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

/// Ordinary least squares slope and intercept of y on x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "fit_line: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  require(sxx > 0.0, "fit_line: x values must not all coincide");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace msgd
