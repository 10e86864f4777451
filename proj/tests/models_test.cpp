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
#include <string>

#include "msgd/models.hpp"
#include "msgd/weights.hpp"

namespace msgd {
namespace {

using detail::covariance_estimate;

LogisticDataset small_dataset(std::uint64_t seed, std::size_t p = 3, std::size_t t = 200,
                              double kappa = 0.1) {
  return generate_logistic_dataset(derive_stream(seed, {"dataset"}), p, t, kappa);
}

Vector random_point(RngStream& s, std::size_t p, double scale = 1.0) {
  Vector v = sample_std_normal(s, p);
  for (double& x : v) x *= scale;
  return v;
}

// Mean and covariance of grad l(theta, u) over `count` fresh data, with SEs.
template <LossModel M>
void check_gradient_moments(const M& model, std::span<const double> theta, RngStream data,
                            std::size_t count) {
  const std::size_t p = model.dim();
  std::vector<Vector> cols(p, Vector(count));
  auto u = model.make_datum();
  for (std::size_t r = 0; r < count; ++r) {
    model.sample_datum(data, u);
    const Vector g = grad_loss(model, theta, u);
    for (std::size_t j = 0; j < p; ++j) cols[j][r] = g[j];
  }
  const Vector grad_g = model.grad_objective(theta);
  const DenseMatrix cov = model.noise_factor(theta).gram();
  for (std::size_t a = 0; a < p; ++a) {
    const auto m = mean_and_se(cols[a]);
    EXPECT_NEAR(m.mean, grad_g[a], 4.0 * m.se + 1e-12) << "mean coord " << a;
    for (std::size_t b = a; b < p; ++b) {
      const auto c = covariance_estimate(cols[a], cols[b]);
      EXPECT_NEAR(c.value, cov(a, b), 4.0 * c.se + 1e-12) << "cov (" << a << "," << b << ")";
    }
  }
}

template <LossModel M>
void check_gradient_matches_finite_differences(const M& model, std::span<const double> theta) {
  auto f = [&](std::span<const double> x) { return model.objective(x); };
  const Vector fd = finite_diff_gradient(f, theta, 1e-5);
  const Vector g = model.grad_objective(theta);
  const double scale = std::max(norm(g), 1e-3);
  EXPECT_LE(norm(subtract(fd, g)) / scale, 1e-5);
}

//---------------------------------------------------------------------------//

TEST(QuadraticModel, ClosedForms) {
  const auto model = make_quadratic_model(3, {1.0, -2.0, 0.5}, 1.5);
  const Vector star{1.0, -2.0, 0.5};
  for (double v : model.grad_objective(star)) EXPECT_EQ(v, 0.0);
  EXPECT_DOUBLE_EQ(model.objective(star), model.minimum_value());
  EXPECT_DOUBLE_EQ(noise_trace(model, Vector{4.0, 4.0, 4.0}), 3 * 1.5 * 1.5);
  const auto c = model.constants();
  EXPECT_EQ(c.L, 1.0);
  EXPECT_EQ(c.L1, 0.0);
  EXPECT_EQ(c.lambda.value(), 1.0);
  EXPECT_THROW(make_quadratic_model(2, {1.0}, 1.0), PreconditionError);
  EXPECT_THROW(QuadraticModel(Vector{1.0}, -0.1), PreconditionError);
}

TEST(QuadraticModel, GradientLossIsUnbiasedAtOrigin) {
  const auto model = make_quadratic_model(2, {1.0, 0.0}, 1.0);
  RngStream s = derive_stream(7, {"quadratic", "unbiased"});
  const Vector zero{0.0, 0.0};
  Vector mean(2, 0.0);
  auto u = model.make_datum();
  const int draws = 100000;
  for (int r = 0; r < draws; ++r) {
    model.sample_datum(s, u);
    model.add_grad_loss(zero, u, 1.0 / draws, mean);
  }
  EXPECT_NEAR(mean[0], -1.0, 0.02);
  EXPECT_NEAR(mean[1], 0.0, 0.02);
}

TEST(QuadraticModel, PerDatumGradientIsOneLipschitz) {
  const auto model = make_quadratic_model(4, Vector(4, 0.0), 2.0);
  RngStream s = derive_stream(8, {"quadratic", "h1"});
  for (int r = 0; r < 50; ++r) {
    const Vector a = random_point(s, 4), b = random_point(s, 4);
    const auto u = sample_datum(model, s);
    const double ratio = norm(subtract(grad_loss(model, a, u), grad_loss(model, b, u))) /
                         norm(subtract(a, b));
    EXPECT_NEAR(ratio, 1.0, 1e-12);
  }
}

TEST(UniformCltModel, ConstantNoiseOfOneThird) {
  const auto model = make_uniform_clt_model(2);
  for (double v : model.grad_objective(Vector{3.0, -1.0})) EXPECT_EQ(v, 0.0);
  const auto cov = model.noise_factor(Vector{0.0, 0.0}).gram();
  EXPECT_NEAR(cov(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(cov(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(cov(0, 1), 0.0);

  RngStream s = derive_stream(9, {"uniform", "variance"});
  Vector xs(100000);
  auto u = model.make_datum();
  for (double& x : xs) {
    model.sample_datum(s, u);
    x = u[0];
  }
  EXPECT_NEAR(detail::variance_estimate(xs).value, 1.0 / 3.0, 0.01);
}

//---------------------------------------------------------------------------//
// Properties shared by every model
//---------------------------------------------------------------------------//

TEST(ModelProperties, QuadraticUnbiasedWithMatchingNoiseFactor) {
  const auto model = make_quadratic_model(3, {0.5, -1.0, 2.0}, 0.7);
  RngStream s = derive_stream(10, {"points"});
  for (int i = 0; i < 10; ++i) {
    const Vector theta = random_point(s, 3, 2.0);
    check_gradient_moments(model, theta, derive_stream(10, {"data", i}), 20000);
    check_gradient_matches_finite_differences(model, theta);
  }
}

TEST(ModelProperties, UniformUnbiasedWithMatchingNoiseFactor) {
  const auto model = make_uniform_clt_model(3);
  RngStream s = derive_stream(11, {"points"});
  for (int i = 0; i < 10; ++i) {
    const Vector theta = random_point(s, 3);
    check_gradient_moments(model, theta, derive_stream(11, {"data", i}), 20000);
    check_gradient_matches_finite_differences(model, theta);
  }
}

TEST(ModelProperties, LogisticUnbiasedWithMatchingNoiseFactor) {
  const auto model = make_logistic_model(small_dataset(12));
  RngStream s = derive_stream(12, {"points"});
  for (int i = 0; i < 10; ++i) {
    const Vector beta = random_point(s, 3);
    check_gradient_moments(model, beta, derive_stream(12, {"data", i}), 20000);
  }
}

//---------------------------------------------------------------------------//
// Logistic model
//---------------------------------------------------------------------------//

TEST(LogisticModel, GradientAtZeroUsesHalfMinusLabel) {
  const auto ds = small_dataset(20, 4, 50);
  const auto model = make_logistic_model(ds);
  const Vector g = model.grad_objective(Vector(4, 0.0));
  Vector expected(4, 0.0);
  for (std::size_t i = 0; i < ds.t(); ++i) axpy((0.5 - ds.y[i]) / 50.0, ds.row(i), expected);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g[j], expected[j], 1e-14);
}

TEST(LogisticModel, AnalyticGradientMatchesFiniteDifferencesOnFullDataset) {
  const auto model = make_logistic_model(
      generate_logistic_dataset(derive_stream(21, {"dataset"}), 6, 10000, 0.05));
  RngStream s = derive_stream(21, {"points"});
  for (int i = 0; i < 10; ++i) check_gradient_matches_finite_differences(model, random_point(s, 6));
}

TEST(LogisticModel, NoiseFactorFrobeniusIdentity) {
  const auto ds = small_dataset(22, 3, 120);
  const auto model = make_logistic_model(ds);
  RngStream s = derive_stream(22, {"points"});
  for (int i = 0; i < 5; ++i) {
    const Vector beta = random_point(s, 3);
    const Vector g = model.grad_objective(beta);
    double direct = 0.0;
    for (std::size_t r = 0; r < ds.t(); ++r) {
      direct += norm_sq(subtract(grad_loss(model, beta, {ds.y[r], ds.row(r)}), g));
    }
    direct /= static_cast<double>(ds.t());
    EXPECT_NEAR(model.noise_factor(beta).frobenius_norm_sq(), direct, 1e-12 * direct);
  }
}

TEST(LogisticModel, ApplyNoiseFactorMatchesDenseProduct) {
  const auto model = make_logistic_model(small_dataset(23, 3, 80));
  RngStream s = derive_stream(23, {"xi"});
  const Vector beta{0.3, -0.2, 0.9};
  const Vector xi = sample_std_normal(s, 80);
  const Vector dense = model.noise_factor(beta).multiply(xi);
  const Vector fast = model.apply_noise_factor(beta, xi);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(fast[j], dense[j], 1e-12);
  EXPECT_THROW(model.apply_noise_factor(beta, Vector(79, 0.0)), PreconditionError);
}

TEST(LogisticModel, StronglyConvexWithCurvatureBelowL) {
  const double kappa = 0.05;
  const auto model = make_logistic_model(small_dataset(24, 4, 300, kappa));
  const double L = model.constants().L;
  EXPECT_DOUBLE_EQ(model.constants().lambda.value(), 2.0 * kappa);
  EXPECT_NEAR(L, model.lambda_max_xxt() / (4.0 * 300) + 2.0 * kappa, 1e-15);
  EXPECT_LT(L, model.loose_lipschitz_bound());
  RngStream s = derive_stream(24, {"points"});
  const double h = 1e-3;
  for (int i = 0; i < 10; ++i) {
    const Vector beta = random_point(s, 4);
    Vector v = random_point(s, 4);
    const double len = norm(v);
    for (double& x : v) x /= len;
    Vector plus = beta, minus = beta;
    axpy(h, v, plus);
    axpy(-h, v, minus);
    const double curvature =
        (model.objective(plus) - 2.0 * model.objective(beta) + model.objective(minus)) / (h * h);
    EXPECT_GE(curvature, 2.0 * kappa - 1e-6);
    EXPECT_LE(curvature, L + 1e-6);
  }
}

TEST(LogisticModel, PerDatumGradientLipschitzModulus) {
  const auto ds = small_dataset(25, 5, 100, 0.2);
  const auto model = make_logistic_model(ds);
  RngStream s = derive_stream(25, {"pairs"});
  for (int i = 0; i < 200; ++i) {
    const Vector a = random_point(s, 5, 3.0), b = random_point(s, 5, 3.0);
    const auto z = sample_datum(model, s);
    const double ratio = norm(subtract(grad_loss(model, a, z), grad_loss(model, b, z))) /
                         norm(subtract(a, b));
    EXPECT_LE(ratio, 0.25 * norm_sq(z.x) + 2.0 * ds.kappa + 1e-12);
  }
}

TEST(LogisticModel, NoiseFactorLipschitzBound) {
  const auto model = make_logistic_model(small_dataset(26, 3, 150));
  const double L1 = model.constants().L1;
  RngStream s = derive_stream(26, {"pairs"});
  for (int i = 0; i < 50; ++i) {
    const Vector a = random_point(s, 3, 2.0), b = random_point(s, 3, 2.0);
    const auto sa = model.noise_factor(a), sb = model.noise_factor(b);
    double diff = 0.0;
    for (std::size_t k = 0; k < sa.entries().size(); ++k) {
      diff += (sa.entries()[k] - sb.entries()[k]) * (sa.entries()[k] - sb.entries()[k]);
    }
    EXPECT_LE(std::sqrt(diff), L1 * norm(subtract(a, b)) * (1.0 + 1e-12));
  }
}

TEST(LogisticModel, StableForLargeMargins) {
  EXPECT_EQ(LogisticModel::sigmoid(-800.0), 0.0);
  EXPECT_EQ(LogisticModel::sigmoid(800.0), 1.0);
  EXPECT_DOUBLE_EQ(LogisticModel::softplus(800.0), 800.0);
  EXPECT_GT(LogisticModel::softplus(-800.0), -1.0);
  const auto model = make_logistic_model(small_dataset(27));
  EXPECT_TRUE(std::isfinite(model.objective(Vector{500.0, -500.0, 500.0})));
}

TEST(LogisticModel, RejectsInvalidDatasets) {
  auto ds = small_dataset(28);
  ds.kappa = 0.0;
  EXPECT_THROW(make_logistic_model(ds), PreconditionError);
  ds.kappa = 0.1;
  ds.y[0] = 0.5;
  EXPECT_THROW(make_logistic_model(ds), PreconditionError);
}

TEST(LogisticDataset, GenerationLaw) {
  const auto ds = small_dataset(29, 6, 10000, 0.1);
  ASSERT_EQ(ds.t(), 10000u);
  EXPECT_NEAR(mean_and_se(ds.y).mean, 0.5, 0.02);
  for (std::size_t a = 0; a < 6; ++a) {
    Vector ca(ds.t());
    for (std::size_t i = 0; i < ds.t(); ++i) ca[i] = ds.x[i * 6 + a];
    for (std::size_t b = a; b < 6; ++b) {
      Vector cb(ds.t());
      for (std::size_t i = 0; i < ds.t(); ++i) cb[i] = ds.x[i * 6 + b];
      EXPECT_NEAR(covariance_estimate(ca, cb).value, a == b ? 1.0 : 0.0, 0.05);
    }
  }
}

TEST(LogisticDataset, CsvRoundTripIsExact) {
  const auto ds = small_dataset(30, 2, 25, 0.3);
  const std::string csv = logistic_dataset_to_csv(ds);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "y,x1,x2");
  const auto back = logistic_dataset_from_csv(csv, 0.3);
  EXPECT_EQ(back.p, ds.p);
  EXPECT_EQ(back.y, ds.y);
  EXPECT_EQ(back.x, ds.x);
  EXPECT_THROW(logistic_dataset_from_csv("y,x1\n1,2,3\n", 0.3), PreconditionError);
}

}  // namespace
}  // namespace msgd
