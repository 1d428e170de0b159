// Copyright 2026 The nadpvi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nadpvi/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "nadpvi/conjugate.hpp"

namespace nadpvi {
namespace {

std::vector<ModelPtr> all_models() {
  return {make_gamma_exponential(), make_beta_bernoulli(),
          make_dirichlet_categorical(), make_linear_regression_10d(),
          make_logistic_regression(5)};
}

Vector numeric_grad(const std::function<double(const Vector&)>& f,
                    const Vector& z, double h = 1e-5) {
  Vector g(z.size());
  Vector zp = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(z(i)));
    zp(i) = z(i) + step;
    const double fp = f(zp);
    zp(i) = z(i) - step;
    const double fm = f(zp);
    zp(i) = z(i);
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

TEST(Transforms, RoundTripOnRandomPoints) {
  Rng rng(101);
  for (const auto& model : all_models()) {
    const auto& tr = model->transform();
    for (int rep = 0; rep < 100; ++rep) {
      Vector theta = model->prior_sample(rng);
      Vector z = tr.forward(theta);
      Vector back = tr.inverse(z);
      ASSERT_EQ(back.size(), theta.size());
      for (Eigen::Index i = 0; i < theta.size(); ++i)
        ASSERT_NEAR(back(i), theta(i), 1e-8)
            << model->name() << " rep " << rep << " coord " << i;
      // And the other composition, starting from the unconstrained side.
      Vector z2 = tr.forward(tr.inverse(z));
      for (Eigen::Index i = 0; i < z.size(); ++i)
        ASSERT_NEAR(z2(i), z(i), 1e-8) << model->name();
    }
  }
}

TEST(Transforms, LogDetJacobianMatchesFiniteDifferences) {
  Rng rng(102);
  for (const auto& model : all_models()) {
    const auto& tr = model->transform();
    const int n = tr.unconstrained_dim();
    for (int rep = 0; rep < 20; ++rep) {
      Vector z = rng.normal_vector(n);
      // Numeric Jacobian of the inverse map, constrained rows that vary.
      const double h = 1e-6;
      Matrix jac(tr.constrained_dim(), n);
      for (int j = 0; j < n; ++j) {
        Vector zp = z, zm = z;
        zp(j) += h;
        zm(j) -= h;
        jac.col(j) = (tr.inverse(zp) - tr.inverse(zm)) / (2.0 * h);
      }
      double logdet;
      if (jac.rows() == jac.cols()) {
        logdet = std::log(std::abs(jac.determinant()));
      } else {
        // Rectangular (simplex) case: det of the free-coordinate square block.
        Matrix sq = jac.topRows(n);
        logdet = std::log(std::abs(sq.determinant()));
      }
      const double got = tr.log_abs_det_jacobian_inverse(z);
      ASSERT_NEAR(got, logdet, 1e-4 * std::max(1.0, std::abs(logdet)))
          << model->name() << " rep " << rep;
    }
  }
}

TEST(GammaExponential, PinnedValues) {
  auto model = make_gamma_exponential();
  Vector theta(1), x(1);
  theta << 1.0;
  x << 1.0;
  // Exponential density at rate 1, x = 1: log(1 * e^-1) = -1.
  EXPECT_NEAR(model->per_example_log_lik(theta, x), -1.0, 1e-12);
  Vector two(1);
  two << 2.0;
  Vector z = model->transform().forward(two);
  EXPECT_NEAR(model->transform().inverse(z)(0), 2.0, 1e-8);
}

TEST(BetaBernoulli, PinnedValues) {
  auto model = make_beta_bernoulli();
  Vector theta(1), x1(1), x0(1);
  theta << 0.5;
  x1 << 1.0;
  x0 << 0.0;
  EXPECT_NEAR(model->per_example_log_lik(theta, x1), std::log(0.5), 1e-12);
  EXPECT_NEAR(model->per_example_log_lik(theta, x0), std::log(0.5), 1e-12);
  EXPECT_NEAR(model->transform().forward(theta)(0), 0.0, 1e-12);
}

TEST(DirichletCategorical, PinnedValues) {
  auto model = make_dirichlet_categorical();
  Vector uniform(3);
  uniform << 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0;
  Vector z = model->transform().forward(uniform);
  EXPECT_NEAR(z(0), 0.0, 1e-12);
  EXPECT_NEAR(z(1), 0.0, 1e-12);
  Vector origin = Vector::Zero(2);
  Vector p = model->transform().inverse(origin);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p(i), 1.0 / 3.0, 1e-12);
}

TEST(LinearRegression, PriorNoiseVarianceMean) {
  // InvGamma(20, 1/2) mean is b/(a-1) = 0.5/19.
  auto model = make_linear_regression_10d();
  Rng rng(103);
  double acc = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) acc += model->prior_sample(rng)(11);
  EXPECT_NEAR(acc / n, 0.5 / 19.0, 5e-4);
}

TEST(LinearRegression, ZeroWeightsGiveZeroMeanResponse) {
  auto model = make_linear_regression_10d();
  Vector theta = Vector::Zero(12);
  theta(11) = 0.02;
  Rng rng(104);
  Dataset data = model->simulate(rng, theta, 5000);
  EXPECT_NEAR(data.obs.row(10).mean(), 0.0, 0.01);
}

TEST(LinearRegression, LikelihoodMatchesLeastSquaresPosterior) {
  // With the noise variance fixed and a flat prior over locations, the
  // likelihood in (weights, bias) must be the Gaussian centered at the
  // ridge-free least-squares solution.
  auto model = make_linear_regression_10d();
  Rng rng(105);
  Vector theta = model->prior_sample(rng);
  const double sigma2 = theta(11);
  const int n = 50;
  Dataset data = model->simulate(rng, theta, n);

  Matrix design(n, 11);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    design.row(i).head(10) = data.obs.col(i).head(10).transpose();
    design(i, 10) = 1.0;
    y(i) = data.obs(10, i);
  }
  LeastSquaresPosterior post = least_squares_posterior(design, y, sigma2);
  const Matrix prec = design.transpose() * design / sigma2;

  auto total_ll = [&](const Vector& loc) {
    Vector full(12);
    full.head(11) = loc;
    full(11) = sigma2;
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += model->per_example_log_lik(full, data.example(i));
    return acc;
  };
  // log-lik plus the posterior quadratic form is constant in the location.
  std::vector<double> consts;
  for (int rep = 0; rep < 5; ++rep) {
    Vector loc = post.mean + 0.3 * rng.normal_vector(11);
    Vector d = loc - post.mean;
    consts.push_back(total_ll(loc) + 0.5 * d.dot(prec * d));
  }
  for (size_t i = 1; i < consts.size(); ++i)
    EXPECT_NEAR(consts[i], consts[0], 1e-6 * std::abs(consts[0]));
}

TEST(LogisticRegression, PinnedValues) {
  auto model = make_logistic_regression(5);
  EXPECT_EQ(model->param_dim(), 6);  // five features plus bias
  Rng rng(106);
  Vector theta = Vector::Zero(6);
  Vector obs(6);
  obs << 0.3, -1.2, 0.5, 2.0, -0.7, 1.0;
  EXPECT_NEAR(model->per_example_log_lik(theta, obs), std::log(0.5), 1e-12);
  // Score at the origin is (y - 1/2) [x; 1].
  Vector g = model->grad_log_lik_unc(theta, obs);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(g(i), 0.5 * obs(i), 1e-12);
  EXPECT_NEAR(g(5), 0.5, 1e-12);
  obs(5) = 0.0;
  g = model->grad_log_lik_unc(theta, obs);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(g(i), -0.5 * obs(i), 1e-12);
}

TEST(ConjugatePosteriors, MatchCountingFormulas) {
  Rng rng(107);
  auto m1 = std::make_shared<GammaExponentialModel>(2.0, 2.0);
  Vector rate(1);
  rate << 0.8;
  Dataset d1 = m1->simulate(rng, rate, 30);
  GammaDist g = conjugate_posterior(*m1, d1);
  EXPECT_DOUBLE_EQ(g.shape, 2.0 + 30.0);
  EXPECT_DOUBLE_EQ(g.rate, 2.0 + d1.obs.row(0).sum());

  auto m2 = std::make_shared<BetaBernoulliModel>(2.0, 2.0);
  Vector p(1);
  p << 0.3;
  Dataset d2 = m2->simulate(rng, p, 40);
  const double ones = d2.obs.row(0).sum();
  BetaDist b = conjugate_posterior(*m2, d2);
  EXPECT_DOUBLE_EQ(b.a, 2.0 + ones);
  EXPECT_DOUBLE_EQ(b.b, 2.0 + 40.0 - ones);

  auto m3 = std::make_shared<DirichletCategoricalModel>(
      (Vector(3) << 1.0, 1.0, 1.0).finished());
  Vector simplex(3);
  simplex << 0.5, 0.3, 0.2;
  Dataset d3 = m3->simulate(rng, simplex, 50);
  DirichletDist dd = conjugate_posterior(*m3, d3);
  double c0 = 0, c1 = 0, c2 = 0;
  for (int i = 0; i < 50; ++i) {
    if (d3.obs(0, i) == 0.0) c0 += 1;
    if (d3.obs(0, i) == 1.0) c1 += 1;
    if (d3.obs(0, i) == 2.0) c2 += 1;
  }
  EXPECT_DOUBLE_EQ(dd.alpha(0), 1.0 + c0);
  EXPECT_DOUBLE_EQ(dd.alpha(1), 1.0 + c1);
  EXPECT_DOUBLE_EQ(dd.alpha(2), 1.0 + c2);
}

TEST(ConjugatePosteriors, DensitiesIntegrateToOne) {
  Rng rng(108);
  // Gamma posterior from 25 observations.
  auto m1 = std::make_shared<GammaExponentialModel>(2.0, 2.0);
  Dataset d1 = m1->simulate(rng, (Vector(1) << 1.3).finished(), 25);
  GammaDist g = conjugate_posterior(*m1, d1);
  {
    const double mean = g.shape / g.rate;
    const double sd = std::sqrt(g.shape) / g.rate;
    const double lo = std::max(1e-9, mean - 12.0 * sd);
    const double hi = mean + 14.0 * sd;
    const int steps = 40000;
    const double dx = (hi - lo) / steps;
    double mass = 0.0;
    for (int i = 0; i < steps; ++i)
      mass += std::exp(g.log_pdf(lo + (i + 0.5) * dx)) * dx;
    EXPECT_NEAR(mass, 1.0, 1e-3);
  }
  // Beta posterior from 40 observations.
  auto m2 = std::make_shared<BetaBernoulliModel>(2.0, 2.0);
  Dataset d2 = m2->simulate(rng, (Vector(1) << 0.4).finished(), 40);
  BetaDist b = conjugate_posterior(*m2, d2);
  {
    const int steps = 200000;
    const double dx = 1.0 / steps;
    double mass = 0.0;
    for (int i = 0; i < steps; ++i)
      mass += std::exp(b.log_pdf((i + 0.5) * dx)) * dx;
    EXPECT_NEAR(mass, 1.0, 1e-3);
  }
  // Dirichlet posterior from 24 observations, integrated over the simplex.
  auto m3 = std::make_shared<DirichletCategoricalModel>(
      (Vector(3) << 1.0, 1.0, 1.0).finished());
  Dataset d3 =
      m3->simulate(rng, (Vector(3) << 0.4, 0.35, 0.25).finished(), 24);
  DirichletDist dd = conjugate_posterior(*m3, d3);
  {
    const int steps = 1500;
    const double dx = 1.0 / steps;
    double mass = 0.0;
    Vector p(3);
    for (int i = 0; i < steps; ++i) {
      const double p0 = (i + 0.5) * dx;
      for (int j = 0; j < steps - i - 1; ++j) {
        const double p1 = (j + 0.5) * dx;
        p << p0, p1, 1.0 - p0 - p1;
        if (p(2) <= 0.0) continue;
        mass += std::exp(dd.log_pdf(p)) * dx * dx;
      }
    }
    EXPECT_NEAR(mass, 1.0, 1e-3);
  }
}

TEST(ExactPosteriorSampler, MatchesConjugateMoments) {
  Rng rng(109);
  auto m2 = std::make_shared<BetaBernoulliModel>(2.0, 2.0);
  Dataset data = m2->simulate(rng, (Vector(1) << 0.25).finished(), 60);
  BetaDist post = conjugate_posterior(*m2, data);
  Matrix draws = sample_exact_posterior_unc(*m2, data, rng, 40000);
  // Push draws back through the transform and compare to Beta moments.
  double mean = 0.0;
  for (int i = 0; i < draws.rows(); ++i) mean += sigmoid(draws(i, 0));
  mean /= static_cast<double>(draws.rows());
  EXPECT_NEAR(mean, post.a / (post.a + post.b), 5e-3);

  auto logreg = make_logistic_regression(3);
  Dataset small = logreg->simulate(rng, Vector::Zero(4), 5);
  EXPECT_THROW(sample_exact_posterior_unc(*logreg, small, rng, 10),
               std::invalid_argument);
}

TEST(Models, LogLikelihoodIsPermutationInvariant) {
  Rng rng(110);
  for (const auto& model : all_models()) {
    Vector theta = model->prior_sample(rng);
    Dataset data = model->simulate(rng, theta, 50);
    std::vector<int> order(50);
    std::iota(order.begin(), order.end(), 0);
    double forward = 0.0;
    for (int i : order) forward += model->per_example_log_lik(theta, data.example(i));
    std::reverse(order.begin(), order.end());
    std::swap(order[3], order[17]);
    double shuffled = 0.0;
    for (int i : order) shuffled += model->per_example_log_lik(theta, data.example(i));
    EXPECT_NEAR(forward, shuffled, 1e-10 * std::max(1.0, std::abs(forward)))
        << model->name();
  }
}

TEST(Models, AnalyticGradientsMatchFiniteDifferences) {
  Rng rng(111);
  for (const auto& model : all_models()) {
    Vector theta = model->prior_sample(rng);
    Dataset data = model->simulate(rng, theta, 25);
    for (int rep = 0; rep < 20; ++rep) {
      Vector z = 0.8 * rng.normal_vector(model->param_dim());
      const Vector x = data.example(rep);

      Vector g_lik = model->grad_log_lik_unc(z, x);
      Vector n_lik = numeric_grad(
          [&](const Vector& zz) { return model->log_lik_unc(zz, x); }, z);
      for (Eigen::Index i = 0; i < z.size(); ++i)
        ASSERT_NEAR(g_lik(i), n_lik(i),
                    1e-4 * std::max(1.0, std::abs(n_lik(i))))
            << model->name() << " loglik rep " << rep << " coord " << i;

      Vector g_pr = model->grad_log_prior_jac_unc(z);
      Vector n_pr = numeric_grad(
          [&](const Vector& zz) { return model->log_prior_jac_unc(zz); }, z);
      for (Eigen::Index i = 0; i < z.size(); ++i)
        ASSERT_NEAR(g_pr(i), n_pr(i), 1e-4 * std::max(1.0, std::abs(n_pr(i))))
            << model->name() << " prior rep " << rep << " coord " << i;
    }
  }
}

TEST(Models, RejectInvalidInputs) {
  auto m1 = make_gamma_exponential();
  EXPECT_THROW(m1->per_example_log_lik((Vector(1) << -1.0).finished(),
                                       (Vector(1) << 1.0).finished()),
               std::invalid_argument);
  EXPECT_THROW(make_gamma_exponential(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(make_beta_bernoulli(1.0, -1.0), std::invalid_argument);
  auto m2 = make_beta_bernoulli();
  EXPECT_THROW(m2->per_example_log_lik((Vector(1) << 0.5).finished(),
                                       (Vector(1) << 0.5).finished()),
               std::invalid_argument);
  auto m3 = make_dirichlet_categorical();
  EXPECT_THROW(m3->per_example_log_lik((Vector(3) << 0.5, 0.3, 0.2).finished(),
                                       (Vector(1) << 3.0).finished()),
               std::invalid_argument);
  EXPECT_THROW(make_logistic_regression(0), std::invalid_argument);
  auto lr = make_logistic_regression(2);
  Vector bad(3);
  bad << 0.1, 0.2, 0.5;  // label must be a bit
  EXPECT_THROW(lr->per_example_log_lik(Vector::Zero(3), bad),
               std::invalid_argument);
}

}  // namespace
}  // namespace nadpvi
