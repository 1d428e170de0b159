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
//
// The five experiment models. Three conjugate single-parameter families
// (exponential, Bernoulli, categorical), a 10-feature linear regression with
// bias and unknown noise variance, and logistic regression. Each overrides
// the unconstrained-space gradients with closed forms; the finite-difference
// fallback in Model is the test oracle for those.

#ifndef NADPVI_MODELS_HPP_
#define NADPVI_MODELS_HPP_

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

#include "nadpvi/math.hpp"
#include "nadpvi/model.hpp"
#include "nadpvi/rng.hpp"
#include "nadpvi/transform.hpp"

namespace nadpvi {

// x | theta ~ Exponential(rate theta), theta ~ Gamma(alpha, rate beta).
// Observation row: [x]. Unconstrained coordinate z with theta = softplus(z).
class GammaExponentialModel final : public Model {
 public:
  GammaExponentialModel(double alpha, double beta)
      : alpha_(alpha), beta_(beta), transform_(1) {
    if (!(alpha > 0.0 && beta > 0.0))
      throw std::invalid_argument("Gamma hyperparameters must be > 0");
  }

  std::string name() const override { return "gamma_exponential"; }
  int param_dim() const override { return 1; }
  int obs_dim() const override { return 1; }
  const Diffeomorphism& transform() const override { return transform_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  Vector prior_sample(Rng& rng) const override {
    Vector t(1);
    t(0) = rng.gamma(alpha_, 1.0 / beta_);
    return t;
  }

  Dataset simulate(Rng& rng, const Vector& theta, int n) const override {
    check_theta(theta);
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    Matrix obs(1, n);
    for (int i = 0; i < n; ++i) obs(0, i) = rng.exponential(theta(0));
    return Dataset(std::move(obs));
  }

  double log_prior(const Vector& theta) const override {
    check_theta(theta);
    const double t = theta(0);
    return alpha_ * std::log(beta_) - std::lgamma(alpha_) +
           (alpha_ - 1.0) * std::log(t) - beta_ * t;
  }

  double per_example_log_lik(const Vector& theta, const Vector& x) const override {
    check_theta(theta);
    check_obs(x);
    return std::log(theta(0)) - theta(0) * x(0);
  }

  Vector grad_log_lik_unc(const Vector& z, const Vector& x) const override {
    check_obs(x);
    const double t = softplus(z(0));
    Vector g(1);
    g(0) = sigmoid(z(0)) * (1.0 / t - x(0));
    return g;
  }

  Vector grad_log_prior_jac_unc(const Vector& z) const override {
    const double t = softplus(z(0));
    const double s = sigmoid(z(0));
    Vector g(1);
    g(0) = s * ((alpha_ - 1.0) / t - beta_) + (1.0 - s);
    return g;
  }

 private:
  static void check_theta(const Vector& theta) {
    if (theta.size() != 1 || !(theta(0) > 0.0))
      throw std::invalid_argument("rate parameter must be a positive scalar");
  }
  static void check_obs(const Vector& x) {
    if (x.size() != 1 || !(x(0) >= 0.0))
      throw std::invalid_argument("observation must be a nonnegative scalar");
  }
  double alpha_, beta_;
  SoftplusTransform transform_;
};

// x | theta ~ Bernoulli(theta), theta ~ Beta(alpha, beta).
// Observation row: [x] with x in {0,1}. Unconstrained z with theta = sigmoid(z).
class BetaBernoulliModel final : public Model {
 public:
  BetaBernoulliModel(double alpha, double beta) : alpha_(alpha), beta_(beta) {
    if (!(alpha > 0.0 && beta > 0.0))
      throw std::invalid_argument("Beta hyperparameters must be > 0");
  }

  std::string name() const override { return "beta_bernoulli"; }
  int param_dim() const override { return 1; }
  int obs_dim() const override { return 1; }
  const Diffeomorphism& transform() const override { return transform_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  Vector prior_sample(Rng& rng) const override {
    Vector t(1);
    t(0) = rng.beta(alpha_, beta_);
    return t;
  }

  Dataset simulate(Rng& rng, const Vector& theta, int n) const override {
    check_theta(theta);
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    Matrix obs(1, n);
    for (int i = 0; i < n; ++i) obs(0, i) = rng.bernoulli(theta(0)) ? 1.0 : 0.0;
    return Dataset(std::move(obs));
  }

  double log_prior(const Vector& theta) const override {
    check_theta(theta);
    const double t = theta(0);
    return std::lgamma(alpha_ + beta_) - std::lgamma(alpha_) -
           std::lgamma(beta_) + (alpha_ - 1.0) * std::log(t) +
           (beta_ - 1.0) * std::log1p(-t);
  }

  double per_example_log_lik(const Vector& theta, const Vector& x) const override {
    check_theta(theta);
    check_obs(x);
    return x(0) > 0.5 ? std::log(theta(0)) : std::log1p(-theta(0));
  }

  Vector grad_log_lik_unc(const Vector& z, const Vector& x) const override {
    check_obs(x);
    Vector g(1);
    g(0) = x(0) - sigmoid(z(0));
    return g;
  }

  Vector grad_log_prior_jac_unc(const Vector& z) const override {
    const double t = sigmoid(z(0));
    Vector g(1);
    g(0) = (alpha_ - 1.0) * (1.0 - t) - (beta_ - 1.0) * t + 1.0 - 2.0 * t;
    return g;
  }

 private:
  static void check_theta(const Vector& theta) {
    if (theta.size() != 1 || !(theta(0) > 0.0 && theta(0) < 1.0))
      throw std::invalid_argument("success probability must lie in (0,1)");
  }
  static void check_obs(const Vector& x) {
    if (x.size() != 1 || (x(0) != 0.0 && x(0) != 1.0))
      throw std::invalid_argument("observation must be 0 or 1");
  }
  double alpha_, beta_;
  LogitTransform transform_;
};

// x | theta ~ Categorical(theta) over 3 classes, theta ~ Dirichlet(alpha).
// Observation row: [c] with c in {0,1,2}. Unconstrained coordinates are the
// first two logits of softmax(z1, z2, 0).
class DirichletCategoricalModel final : public Model {
 public:
  explicit DirichletCategoricalModel(Vector alpha) : alpha_(std::move(alpha)) {
    if (alpha_.size() != 3)
      throw std::invalid_argument("need exactly 3 concentration parameters");
    for (int i = 0; i < 3; ++i)
      if (!(alpha_(i) > 0.0))
        throw std::invalid_argument("concentrations must be > 0");
  }

  std::string name() const override { return "dirichlet_categorical"; }
  int param_dim() const override { return 2; }
  int obs_dim() const override { return 1; }
  const Diffeomorphism& transform() const override { return transform_; }
  const Vector& alpha() const { return alpha_; }

  Vector prior_sample(Rng& rng) const override { return rng.dirichlet(alpha_); }

  Dataset simulate(Rng& rng, const Vector& theta, int n) const override {
    check_theta(theta);
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    Matrix obs(1, n);
    for (int i = 0; i < n; ++i)
      obs(0, i) = static_cast<double>(rng.categorical(theta));
    return Dataset(std::move(obs));
  }

  double log_prior(const Vector& theta) const override {
    check_theta(theta);
    double acc = std::lgamma(alpha_.sum());
    for (int i = 0; i < 3; ++i)
      acc += (alpha_(i) - 1.0) * std::log(theta(i)) - std::lgamma(alpha_(i));
    return acc;
  }

  double per_example_log_lik(const Vector& theta, const Vector& x) const override {
    check_theta(theta);
    return std::log(theta(category(x)));
  }

  Vector grad_log_lik_unc(const Vector& z, const Vector& x) const override {
    const int c = category(x);
    Vector p = transform_.inverse(z);
    Vector g(2);
    for (int j = 0; j < 2; ++j) g(j) = (c == j ? 1.0 : 0.0) - p(j);
    return g;
  }

  Vector grad_log_prior_jac_unc(const Vector& z) const override {
    // Dirichlet density plus the softmax Jacobian collapse to
    // alpha_j - (sum alpha) p_j in logit coordinates.
    Vector p = transform_.inverse(z);
    const double total = alpha_.sum();
    Vector g(2);
    for (int j = 0; j < 2; ++j) g(j) = alpha_(j) - total * p(j);
    return g;
  }

 private:
  static void check_theta(const Vector& theta) {
    if (theta.size() != 3)
      throw std::invalid_argument("need a 3-simplex point");
    for (int i = 0; i < 3; ++i)
      if (!(theta(i) > 0.0))
        throw std::invalid_argument("simplex coordinates must be positive");
  }
  static int category(const Vector& x) {
    if (x.size() != 1) throw std::invalid_argument("observation must be scalar");
    const int c = static_cast<int>(x(0));
    if (c < 0 || c > 2 || x(0) != static_cast<double>(c))
      throw std::invalid_argument("category must be 0, 1, or 2");
    return c;
  }
  Vector alpha_;
  AdditiveLogRatioTransform transform_;
};

// y | x ~ N(w.x + b, sigma2) with 10 standard-normal covariates; the twelve
// parameters are (w1..w10, b, sigma2) with a normal-inverse-gamma prior:
// sigma2 ~ InvGamma(a0, b0), each location parameter ~ N(0, sigma2 / lambda0).
// Observation row: [x(10); y]. Only sigma2 is softplus-transformed.
class LinearRegressionModel final : public Model {
 public:
  static constexpr int kFeatures = 10;
  static constexpr int kLocDim = kFeatures + 1;  // weights and bias
  static constexpr double kLambda0 = 0.25;
  static constexpr double kA0 = 20.0;
  static constexpr double kB0 = 0.5;

  LinearRegressionModel() : transform_(kLocDim + 1, {kLocDim}) {}

  std::string name() const override { return "linear_regression_10d"; }
  int param_dim() const override { return kLocDim + 1; }
  int obs_dim() const override { return kFeatures + 1; }
  const Diffeomorphism& transform() const override { return transform_; }

  Vector prior_sample(Rng& rng) const override {
    const double s2 = rng.inverse_gamma(kA0, kB0);
    Vector t(param_dim());
    for (int i = 0; i < kLocDim; ++i)
      t(i) = rng.normal(0.0, std::sqrt(s2 / kLambda0));
    t(kLocDim) = s2;
    return t;
  }

  Dataset simulate(Rng& rng, const Vector& theta, int n) const override {
    check_theta(theta);
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    const double noise_sd = std::sqrt(theta(kLocDim));
    Matrix obs(obs_dim(), n);
    for (int i = 0; i < n; ++i) {
      Vector x = rng.normal_vector(kFeatures);
      obs.col(i).head(kFeatures) = x;
      obs(kFeatures, i) = theta.head(kFeatures).dot(x) + theta(kFeatures) +
                          rng.normal(0.0, noise_sd);
    }
    return Dataset(std::move(obs));
  }

  double log_prior(const Vector& theta) const override {
    check_theta(theta);
    const double s2 = theta(kLocDim);
    double acc = kA0 * std::log(kB0) - std::lgamma(kA0) -
                 (kA0 + 1.0) * std::log(s2) - kB0 / s2;
    const double v = s2 / kLambda0;
    for (int i = 0; i < kLocDim; ++i)
      acc += -0.5 * (kLogTwoPi + std::log(v)) - theta(i) * theta(i) / (2.0 * v);
    return acc;
  }

  double per_example_log_lik(const Vector& theta, const Vector& x) const override {
    check_theta(theta);
    check_obs(x);
    const double s2 = theta(kLocDim);
    const double r = residual(theta, x);
    return -0.5 * (kLogTwoPi + std::log(s2)) - r * r / (2.0 * s2);
  }

  Vector grad_log_lik_unc(const Vector& z, const Vector& x) const override {
    check_obs(x);
    const double s2 = softplus(z(kLocDim));
    const double r = residual_unc(z, x, s2);
    Vector g(param_dim());
    g.head(kFeatures) = (r / s2) * x.head(kFeatures);
    g(kFeatures) = r / s2;
    g(kLocDim) =
        (-0.5 / s2 + r * r / (2.0 * s2 * s2)) * sigmoid(z(kLocDim));
    return g;
  }

  Vector grad_log_prior_jac_unc(const Vector& z) const override {
    const double s2 = softplus(z(kLocDim));
    const double sig = sigmoid(z(kLocDim));
    Vector g(param_dim());
    for (int i = 0; i < kLocDim; ++i) g(i) = -kLambda0 * z(i) / s2;
    const double sq = z.head(kLocDim).squaredNorm();
    const double df_ds2 = -(0.5 * kLocDim) / s2 +
                          kLambda0 * sq / (2.0 * s2 * s2) -
                          (kA0 + 1.0) / s2 + kB0 / (s2 * s2);
    g(kLocDim) = df_ds2 * sig + (1.0 - sig);
    return g;
  }

 private:
  static void check_theta(const Vector& theta) {
    if (theta.size() != kLocDim + 1)
      throw std::invalid_argument("need 12 parameters");
    if (!(theta(kLocDim) > 0.0))
      throw std::invalid_argument("noise variance must be > 0");
  }
  static void check_obs(const Vector& x) {
    if (x.size() != kFeatures + 1)
      throw std::invalid_argument("observation must be [x(10); y]");
  }
  static double residual(const Vector& theta, const Vector& x) {
    return x(kFeatures) - theta.head(kFeatures).dot(x.head(kFeatures)) -
           theta(kFeatures);
  }
  static double residual_unc(const Vector& z, const Vector& x, double) {
    return x(kFeatures) - z.head(kFeatures).dot(x.head(kFeatures)) -
           z(kFeatures);
  }
  SoftplusTransform transform_;
};

// y | x ~ Bernoulli(sigmoid(w.x + b)) with standard normal prior over all
// weights. Observation row: [x(p); y]. A bias column of ones is implicit;
// param_dim is p+1 when the bias is enabled.
class LogisticRegressionModel final : public Model {
 public:
  explicit LogisticRegressionModel(int features, bool bias = true)
      : features_(features), bias_(bias),
        transform_(features + (bias ? 1 : 0)) {
    if (features < 1) throw std::invalid_argument("p must be >= 1");
  }

  std::string name() const override { return "logistic_regression"; }
  int param_dim() const override { return features_ + (bias_ ? 1 : 0); }
  int obs_dim() const override { return features_ + 1; }
  int features() const { return features_; }
  bool has_bias() const { return bias_; }
  const Diffeomorphism& transform() const override { return transform_; }

  Vector prior_sample(Rng& rng) const override {
    return rng.normal_vector(param_dim());
  }

  Dataset simulate(Rng& rng, const Vector& theta, int n) const override {
    check_theta(theta);
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    Matrix obs(obs_dim(), n);
    for (int i = 0; i < n; ++i) {
      Vector x = rng.normal_vector(features_);
      obs.col(i).head(features_) = x;
      obs(features_, i) =
          rng.bernoulli(sigmoid(logit_mean(theta, obs.col(i)))) ? 1.0 : 0.0;
    }
    return Dataset(std::move(obs));
  }

  double log_prior(const Vector& theta) const override {
    check_theta(theta);
    return -0.5 * (param_dim() * kLogTwoPi + theta.squaredNorm());
  }

  double per_example_log_lik(const Vector& theta, const Vector& x) const override {
    check_theta(theta);
    check_obs(x);
    const double t = logit_mean(theta, x);
    return x(features_) > 0.5 ? log_sigmoid(t) : log_sigmoid(-t);
  }

  Vector grad_log_lik_unc(const Vector& theta, const Vector& x) const override {
    check_theta(theta);
    check_obs(x);
    const double err = x(features_) - sigmoid(logit_mean(theta, x));
    Vector g(param_dim());
    g.head(features_) = err * x.head(features_);
    if (bias_) g(features_) = err;
    return g;
  }

  Vector grad_log_prior_jac_unc(const Vector& theta) const override {
    return -theta;
  }

 private:
  void check_theta(const Vector& theta) const {
    if (theta.size() != param_dim())
      throw std::invalid_argument("parameter dimension mismatch");
  }
  void check_obs(const Vector& x) const {
    if (x.size() != features_ + 1)
      throw std::invalid_argument("observation must be [x(p); y]");
    if (x(features_) != 0.0 && x(features_) != 1.0)
      throw std::invalid_argument("label must be 0 or 1");
  }
  double logit_mean(const Vector& theta, const Vector& x) const {
    double t = theta.head(features_).dot(x.head(features_));
    if (bias_) t += theta(features_);
    return t;
  }
  int features_;
  bool bias_;
  IdentityTransform transform_;
};

inline ModelPtr make_gamma_exponential(double alpha = 2.0, double beta = 2.0) {
  return std::make_shared<GammaExponentialModel>(alpha, beta);
}

inline ModelPtr make_beta_bernoulli(double alpha = 2.0, double beta = 2.0) {
  return std::make_shared<BetaBernoulliModel>(alpha, beta);
}

inline ModelPtr make_dirichlet_categorical(Vector alpha) {
  return std::make_shared<DirichletCategoricalModel>(std::move(alpha));
}

inline ModelPtr make_dirichlet_categorical() {
  Vector alpha(3);
  alpha << 1.0, 1.0, 1.0;
  return make_dirichlet_categorical(alpha);
}

inline ModelPtr make_linear_regression_10d() {
  return std::make_shared<LinearRegressionModel>();
}

inline ModelPtr make_logistic_regression(int features, bool bias = true) {
  return std::make_shared<LogisticRegressionModel>(features, bias);
}

}  // namespace nadpvi

#endif  // NADPVI_MODELS_HPP_
