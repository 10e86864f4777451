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

#include <cmath>

#include "msgd/numerics.hpp"

namespace msgd {
namespace {

TEST(FiniteDiffGradient, HalfSquaredNormIsIdentity) {
  auto f = [](std::span<const double> x) { return 0.5 * norm_sq(x); };
  const Vector x{1.0, 2.0};
  const Vector g = finite_diff_gradient(f, x, 1e-5);
  EXPECT_NEAR(g[0], 1.0, 1e-6);
  EXPECT_NEAR(g[1], 2.0, 1e-6);
}

TEST(FiniteDiffGradient, ConstantGivesZero) {
  auto f = [](std::span<const double>) { return 3.25; };
  const Vector g = finite_diff_gradient(f, Vector{0.3, -1.0, 7.0});
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDiffGradient, NonFiniteValueIsAnEvaluationError) {
  auto f = [](std::span<const double> x) { return x[0] > 0.0 ? std::log(-1.0) : 0.0; };
  EXPECT_THROW(finite_diff_gradient(f, Vector{0.0}, 1e-3), EvaluationError);
  EXPECT_THROW(finite_diff_gradient(f, Vector{0.0}, 0.0), PreconditionError);
}

TEST(DenseMatrix, RejectsBadShapesAndNonFiniteEntries) {
  EXPECT_THROW(DenseMatrix(2, 2, Vector{1.0, 2.0, 3.0}), PreconditionError);
  EXPECT_THROW(DenseMatrix(1, 1, Vector{NAN}), PreconditionError);
  EXPECT_THROW(DenseMatrix(0, 3), PreconditionError);
}

TEST(DenseMatrix, GramAndMultiply) {
  const DenseMatrix a(2, 3, Vector{1, 2, 3, 4, 5, 6});
  const DenseMatrix g = a.gram();
  EXPECT_EQ(g(0, 0), 14.0);
  EXPECT_EQ(g(0, 1), 32.0);
  EXPECT_EQ(g(1, 0), 32.0);
  EXPECT_EQ(g(1, 1), 77.0);
  EXPECT_EQ(a.multiply(Vector{1, 0, -1}), (Vector{-2, -2}));
  EXPECT_EQ(a.frobenius_norm_sq(), 91.0);
}

TEST(LargestEigenvalue, MatchesClosedFormForTwoByTwo) {
  // [[2, 1], [1, 2]] has eigenvalues 3 and 1.
  const DenseMatrix a(2, 2, Vector{2, 1, 1, 2});
  EXPECT_NEAR(largest_eigenvalue(a, 1e-12), 3.0, 1e-9);
  const DenseMatrix d(3, 3, Vector{1, 0, 0, 0, 5, 0, 0, 0, 2});
  EXPECT_NEAR(largest_eigenvalue(d, 1e-12), 5.0, 1e-8);
}

TEST(FitLine, RecoversExactLine) {
  const Vector x{0, 1, 2, 3};
  const Vector y{1, 3, 5, 7};
  const auto fit = fit_line(x, y);
  EXPECT_NEAR(fit.slope, 2.0, 1e-14);
  EXPECT_NEAR(fit.intercept, 1.0, 1e-14);
}

TEST(NormalCdf, KnownValues) {
  EXPECT_DOUBLE_EQ(normal_cdf(0.0), 0.5);
  EXPECT_NEAR(normal_cdf(1.96), 0.9750021048517795, 1e-12);
}

}  // namespace
}  // namespace msgd
