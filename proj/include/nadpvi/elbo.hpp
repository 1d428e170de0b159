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
// Per-example Monte-Carlo ELBO loss and its exact reparameterization
// gradient. The per-example loss splits the ELBO so that summing it over the
// dataset with shared draws reconstructs the full estimate: each example
// carries its own likelihood term plus a 1/N share of the prior-minus-q term.

#ifndef NADPVI_ELBO_HPP_
#define NADPVI_ELBO_HPP_

#include <stdexcept>

#include "nadpvi/math.hpp"
#include "nadpvi/model.hpp"
#include "nadpvi/rng.hpp"
#include "nadpvi/variational.hpp"

namespace nadpvi {

struct ElboConfig {
  int n_vi = 10;
  int dataset_size = 1;

  void validate() const {
    if (n_vi < 1) throw std::invalid_argument("n_vi must be >= 1");
    if (dataset_size < 1)
      throw std::invalid_argument("dataset_size must be >= 1");
  }
};

// Per-step state shared by every example in a minibatch: the draws
// theta_i = mu + s .* eps_i and everything that does not depend on the
// observation (variational density, prior term, their gradients).
class ElboStepContext {
 public:
  ElboStepContext(const VariationalParams& params, const Model& model,
                  const ElboConfig& cfg, const Matrix& eps)
      : params_(params), model_(model), cfg_(cfg), eps_(eps) {
    cfg_.validate();
    if (eps.rows() != cfg.n_vi || eps.cols() != params.n())
      throw std::invalid_argument("eps must be n_vi x n");
    const Vector s = params.scale();
    s_ = s;
    sig_u_.resize(params.n());
    for (int j = 0; j < params.n(); ++j) sig_u_(j) = sigmoid(params.u(j));
    thetas_.resize(cfg.n_vi, params.n());
    prior_jac_.resize(cfg.n_vi);
    grad_prior_jac_.resize(cfg.n_vi, params.n());
    log_q_.resize(cfg.n_vi);
    const double log_s_sum = s.array().log().sum();
    for (int i = 0; i < cfg.n_vi; ++i) {
      thetas_.row(i) =
          (params.mu + s.cwiseProduct(eps.row(i).transpose())).transpose();
      const Vector theta = thetas_.row(i).transpose();
      prior_jac_(i) = model.log_prior_jac_unc(theta);
      grad_prior_jac_.row(i) = model.grad_log_prior_jac_unc(theta).transpose();
      log_q_(i) = -log_s_sum - 0.5 * params.n() * kLogTwoPi -
                  0.5 * eps.row(i).squaredNorm();
    }
    if (!prior_jac_.allFinite() || !grad_prior_jac_.allFinite())
      throw std::runtime_error("non-finite prior term in ELBO evaluation");
  }

  const Matrix& thetas() const { return thetas_; }

  // Monte-Carlo per-example loss: mean_i log p(x | U^-1(theta_i)) minus a
  // 1/N share of mean_i [log q(theta_i) - log p(U^-1(theta_i)) - log|det J|].
  double loss(const Vector& x) const {
    const double inv_k = 1.0 / cfg_.n_vi;
    const double inv_nk = inv_k / cfg_.dataset_size;
    double lik = 0.0, rest = 0.0;
    for (int i = 0; i < cfg_.n_vi; ++i) {
      lik += model_.log_lik_unc(thetas_.row(i).transpose(), x);
      rest += log_q_(i) - prior_jac_(i);
    }
    const double value = inv_k * lik - inv_nk * rest;
    if (!std::isfinite(value))
      throw std::runtime_error("non-finite per-example loss");
    return value;
  }

  // Exact pathwise gradient of loss() in phi = (mu, u), holding eps fixed.
  // log q at the reparameterized draw depends on phi only through -sum log s,
  // so its u-gradient is the entropy pull sigma(u_j)/s_j and its mu-gradient
  // vanishes.
  Vector grad(const Vector& x) const {
    const int n = params_.n();
    const double inv_k = 1.0 / cfg_.n_vi;
    const double inv_nk = inv_k / cfg_.dataset_size;
    Vector g_mu = Vector::Zero(n), g_u = Vector::Zero(n);
    for (int i = 0; i < cfg_.n_vi; ++i) {
      const Vector theta = thetas_.row(i).transpose();
      const Vector ga = model_.grad_log_lik_unc(theta, x);
      const Vector gb = grad_prior_jac_.row(i).transpose();
      const Vector eps_i = eps_.row(i).transpose();
      g_mu += inv_k * ga + inv_nk * gb;
      g_u += (inv_k * ga + inv_nk * gb).cwiseProduct(eps_i);
    }
    g_u += (1.0 / cfg_.dataset_size) * s_.cwiseInverse();
    g_u = g_u.cwiseProduct(sig_u_);
    Vector g(2 * n);
    g.head(n) = g_mu;
    g.tail(n) = g_u;
    if (!all_finite(g))
      throw std::runtime_error("non-finite per-example gradient");
    return g;
  }

 private:
  VariationalParams params_;
  const Model& model_;
  ElboConfig cfg_;
  Matrix eps_;
  Vector s_, sig_u_;
  Matrix thetas_;
  Vector prior_jac_, log_q_;
  Matrix grad_prior_jac_;
};

inline double per_example_loss(const VariationalParams& params, const Vector& x,
                               const Model& model, const ElboConfig& cfg,
                               Rng& rng) {
  const Matrix eps = rng.normal_matrix(cfg.n_vi, params.n());
  return ElboStepContext(params, model, cfg, eps).loss(x);
}

inline Vector per_example_grad(const VariationalParams& params, const Vector& x,
                               const Model& model, const ElboConfig& cfg,
                               Rng& rng) {
  const Matrix eps = rng.normal_matrix(cfg.n_vi, params.n());
  return ElboStepContext(params, model, cfg, eps).grad(x);
}

// Full-dataset Monte-Carlo ELBO with explicit draws; equals the sum of
// per-example losses sharing the same eps.
inline double full_elbo(const VariationalParams& params, const Model& model,
                        const Dataset& data, const ElboConfig& cfg,
                        const Matrix& eps) {
  ElboStepContext ctx(params, model, cfg, eps);
  double acc = 0.0;
  for (int i = 0; i < data.size(); ++i) acc += ctx.loss(data.example(i));
  return acc;
}

}  // namespace nadpvi

#endif  // NADPVI_ELBO_HPP_
