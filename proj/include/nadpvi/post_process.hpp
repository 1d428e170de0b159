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
// Bayesian post-processing of a DP-SGD trace: the noisy gradients are
// modeled as g | phi_t ~ N(kappa * A * (phi_t - phi_star), noise), with
// A = diag(softplus(v)) and data-driven Gaussian priors on (phi_star, v).
// Inference is MAP + Laplace here; see hmc.hpp for the MCMC alternative.

#ifndef NADPVI_POST_PROCESS_HPP_
#define NADPVI_POST_PROCESS_HPP_

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Cholesky>

#include "nadpvi/dp_sgd.hpp"
#include "nadpvi/math.hpp"
#include "nadpvi/optim.hpp"
#include "nadpvi/rng.hpp"

namespace nadpvi {

struct GaussianPrior {
  Vector mean;
  Vector sd;
};

struct PostProcessModel {
  // Stationary window of the trace: row t holds phi_{T*+t} and the noisy
  // gradient it produced, t = 0..window-1.
  Matrix phis;
  Matrix grads;
  int burn_in = 0;
  Vector phi_star_prior_mean;  // prior covariance is the identity
  GaussianPrior v_prior;
  Vector noise_var;  // (sigma^2 C^2 + sigma_sub_i) / beta_i^2 per coordinate
  double kappa = 0.0;

  int dim() const { return static_cast<int>(phis.cols()); }
  int window() const { return static_cast<int>(phis.rows()); }
};

namespace detail {

// Per-coordinate v-prior from the window sums: mean is the magnitude of the
// least-squares slope of gradients on centered iterates, scale is that
// estimator's noise-induced spread. cross = sum g * dev, ssq = sum dev^2.
inline std::pair<double, double> v_prior_coordinate(double cross, double ssq,
                                                    double kappa,
                                                    double noise_scale,
                                                    double beta) {
  const double mean = std::abs(cross) / (kappa * ssq);
  const double sd =
      noise_scale * noise_scale / (kappa * kappa * beta * beta * ssq);
  return {mean, sd};
}

}  // namespace detail

// Data-driven priors per coordinate: the v-prior mean is the magnitude of
// the least-squares slope of gradients on centered iterates, and the
// v-prior scale is that estimator's noise-induced standard deviation.
inline std::pair<Vector, GaussianPrior> trace_priors(const DpSgdTrace& trace,
                                                     int burn_in) {
  const int steps = trace.steps();
  const int d = trace.dim();
  if (burn_in < 1 || burn_in >= steps)
    throw std::invalid_argument("burn_in must be in [1, T)");
  const int window = steps - burn_in;

  const Matrix phis = trace.params.middleRows(burn_in, window);
  const Matrix grads = trace.noisy_grads.middleRows(burn_in, window);
  const Vector bar = phis.colwise().mean().transpose();
  const Matrix dev = phis.rowwise() - bar.transpose();
  const Vector ssq = dev.colwise().squaredNorm().transpose();

  const double kappa = trace.config.sampling_rate;
  const double sc = trace.config.noise_multiplier * trace.config.clip_norm;
  GaussianPrior v_prior;
  v_prior.mean.resize(d);
  v_prior.sd.resize(d);
  for (int i = 0; i < d; ++i) {
    if (!(ssq(i) > 0.0))
      throw std::runtime_error(
          "degenerate trace: zero spread in coordinate " + std::to_string(i));
    const auto [mean, sd] = detail::v_prior_coordinate(
        grads.col(i).dot(dev.col(i)), ssq(i), kappa, sc,
        trace.config.precondition(i));
    v_prior.mean(i) = mean;
    v_prior.sd(i) = sd;
  }
  return {bar, v_prior};
}

inline PostProcessModel make_post_process_model(const DpSgdTrace& trace,
                                                int burn_in,
                                                const Vector& sigma_sub = {}) {
  const int d = trace.dim();
  Vector sub = sigma_sub;
  if (sub.size() == 0) sub = Vector::Zero(d);
  if (sub.size() != d)
    throw std::invalid_argument("sigma_sub must have one entry per coordinate");
  for (int i = 0; i < d; ++i)
    if (sub(i) < 0.0)
      throw std::invalid_argument("sigma_sub entries must be >= 0");

  PostProcessModel model;
  auto [bar, v_prior] = trace_priors(trace, burn_in);
  model.burn_in = burn_in;
  model.phi_star_prior_mean = std::move(bar);
  model.v_prior = std::move(v_prior);
  const int window = trace.steps() - burn_in;
  model.phis = trace.params.middleRows(burn_in, window);
  model.grads = trace.noisy_grads.middleRows(burn_in, window);
  model.kappa = trace.config.sampling_rate;
  const double sc = trace.config.noise_multiplier * trace.config.clip_norm;
  model.noise_var.resize(d);
  for (int i = 0; i < d; ++i) {
    const double beta_i = trace.config.precondition(i);
    model.noise_var(i) = (sc * sc + sub(i)) / (beta_i * beta_i);
  }
  return model;
}

// Normalized log density of (phi_star, v) given the trace window: Gaussian
// priors plus the per-coordinate factorized gradient likelihood.
inline double log_posterior_density(const Vector& phi_star, const Vector& v,
                                    const PostProcessModel& model) {
  const int d = model.dim();
  if (phi_star.size() != d || v.size() != d)
    throw std::invalid_argument("phi_star and v must have trace dimension");
  double lp = 0.0;
  for (int i = 0; i < d; ++i) {
    lp += log_normal_pdf(phi_star(i), model.phi_star_prior_mean(i), 1.0);
    lp += log_normal_pdf(v(i), model.v_prior.mean(i), model.v_prior.sd(i));
  }
  const int window = model.window();
  for (int i = 0; i < d; ++i) {
    const double a = softplus(v(i));
    const double w = model.noise_var(i);
    double sq = 0.0;
    for (int t = 0; t < window; ++t) {
      const double mean = model.kappa * a * (model.phis(t, i) - phi_star(i));
      const double r = model.grads(t, i) - mean;
      sq += r * r;
    }
    lp += -0.5 * sq / w - 0.5 * window * (std::log(w) + kLogTwoPi);
  }
  return lp;
}

// Same density with its analytic gradient in z = [phi_star; v].
inline double log_posterior_grad(const Vector& z, Vector& grad,
                                 const PostProcessModel& model) {
  const int d = model.dim();
  if (z.size() != 2 * d) throw std::invalid_argument("z must be [phi_star; v]");
  const auto phi_star = z.head(d);
  const auto v = z.tail(d);
  grad.resize(2 * d);
  double lp = 0.0;
  const int window = model.window();
  for (int i = 0; i < d; ++i) {
    const double a = softplus(v(i));
    const double sig = sigmoid(v(i));
    const double w = model.noise_var(i);
    double sq = 0.0;
    double r_sum = 0.0;
    double r_dev_sum = 0.0;
    for (int t = 0; t < window; ++t) {
      const double dev = model.phis(t, i) - phi_star(i);
      const double r = model.grads(t, i) - model.kappa * a * dev;
      sq += r * r;
      r_sum += r;
      r_dev_sum += r * dev;
    }
    lp += -0.5 * sq / w - 0.5 * window * (std::log(w) + kLogTwoPi);
    lp += log_normal_pdf(phi_star(i), model.phi_star_prior_mean(i), 1.0);
    const double v_sd = model.v_prior.sd(i);
    lp += log_normal_pdf(v(i), model.v_prior.mean(i), v_sd);
    // d mean / d phi_star = -kappa a, d mean / d v = sigmoid(v) kappa dev.
    grad(i) = -(phi_star(i) - model.phi_star_prior_mean(i)) -
              model.kappa * a * r_sum / w;
    grad(d + i) = sig * model.kappa * r_dev_sum / w -
                  (v(i) - model.v_prior.mean(i)) / (v_sd * v_sd);
  }
  return lp;
}

struct PosteriorSamples {
  Matrix draws;  // M x 2d rows of (phi_star, v)
  std::string method;
  double map_grad_norm = 0.0;    // Laplace only
  double map_value = 0.0;        // Laplace only
  double jitter_used = 0.0;      // Laplace only
  Vector map_point;              // Laplace only, free coordinates
  Matrix covariance;             // Laplace only, free coordinates
  double acceptance_rate = 0.0;  // HMC only
  Vector ess;                    // HMC only, per coordinate
};

struct LaplaceConfig {
  AdamConfig adam;
  double hessian_step = 1e-4;  // relative finite-difference step
  double grad_tol = 1.0;       // MAP gradient-norm convergence bound
  // Newton refinements after Adam; Adam alone stalls at its terminal step
  // size, these bring the MAP to solver precision on smooth targets.
  int newton_polish_steps = 2;
  // When set, v is frozen at this value and only phi_star is inferred;
  // the density is then exactly Gaussian in phi_star.
  std::optional<Vector> fixed_v;
};

// Central finite differences of the analytic gradient of f, symmetrized.
// f has the adam_maximize objective signature.
template <typename F>
Matrix hessian_from_gradient(F&& f, const Vector& zhat, double rel_step) {
  const int n = static_cast<int>(zhat.size());
  Matrix hess(n, n);
  Vector gp(n), gm(n);
  for (int j = 0; j < n; ++j) {
    const double h = rel_step * std::max(1.0, std::abs(zhat(j)));
    Vector zp = zhat;
    zp(j) += h;
    Vector zm = zhat;
    zm(j) -= h;
    f(zp, gp);
    f(zm, gm);
    hess.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

// MAP by Adam ascent, Gaussian approximation from the inverted negative
// Hessian, then Gaussian draws of (phi_star, v).
inline PosteriorSamples fit_laplace(const PostProcessModel& model,
                                    int n_draws, Rng& rng,
                                    const LaplaceConfig& cfg = {}) {
  if (n_draws < 1) throw std::invalid_argument("n_draws must be >= 1");
  const int d = model.dim();
  const bool fix_v = cfg.fixed_v.has_value();
  if (fix_v && cfg.fixed_v->size() != d)
    throw std::invalid_argument("fixed_v must have trace dimension");

  Vector z0;
  if (fix_v) {
    z0 = model.phi_star_prior_mean;
  } else {
    z0.resize(2 * d);
    z0.head(d) = model.phi_star_prior_mean;
    for (int i = 0; i < d; ++i)
      z0(d + i) = inv_softplus(std::max(model.v_prior.mean(i), 1e-3));
  }

  Vector z_full(2 * d);
  Vector g_full(2 * d);
  const auto objective = [&](const Vector& z, Vector& grad) -> double {
    if (!fix_v) return log_posterior_grad(z, grad, model);
    z_full.head(d) = z;
    z_full.tail(d) = *cfg.fixed_v;
    const double lp = log_posterior_grad(z_full, g_full, model);
    grad = g_full.head(d);
    return lp;
  };

  AdamResult map = adam_maximize(objective, z0, cfg.adam);
  const int free_dim = static_cast<int>(map.z.size());
  for (int polish = 0; polish < cfg.newton_polish_steps; ++polish) {
    const Matrix hp = hessian_from_gradient(objective, map.z, cfg.hessian_step);
    const Vector step = hp.ldlt().solve(map.grad);
    if (!all_finite(step)) break;
    // Backtrack along the Newton direction; keep only improving moves.
    double scale = 1.0;
    bool improved = false;
    Vector grad_new(free_dim);
    for (int half = 0; half < 10; ++half) {
      const Vector z_new = map.z - scale * step;
      const double value_new = objective(z_new, grad_new);
      if (std::isfinite(value_new) && value_new >= map.value) {
        map.z = z_new;
        map.value = value_new;
        map.grad = grad_new;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }
  const double grad_norm = map.grad.norm();
  if (!(grad_norm <= cfg.grad_tol))
    throw std::runtime_error("Laplace MAP did not converge: |grad| = " +
                             std::to_string(grad_norm));

  const Matrix hess = hessian_from_gradient(objective, map.z, cfg.hessian_step);
  const Matrix precision = -hess;  // must be positive definite at a maximum
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
  for (;;) {
    llt.compute(precision + jitter * Matrix::Identity(free_dim, free_dim));
    if (llt.info() == Eigen::Success) break;
    jitter = jitter == 0.0 ? 1e-8 : jitter * 10.0;
    if (jitter > 1e-4)
      throw std::runtime_error(
          "Laplace Hessian not negative definite after jitter");
  }

  PosteriorSamples samples;
  samples.method = "laplace";
  samples.map_grad_norm = grad_norm;
  samples.map_value = map.value;
  samples.jitter_used = jitter;
  samples.map_point = map.z;
  samples.covariance = llt.solve(Matrix::Identity(free_dim, free_dim));
  samples.draws.resize(n_draws, 2 * d);
  // x = U^-1 eta has covariance (U^T U)^-1 = precision^-1.
  const auto chol_u = llt.matrixU();
  for (int m = 0; m < n_draws; ++m) {
    const Vector free_draw = map.z + chol_u.solve(rng.normal_vector(free_dim));
    samples.draws.row(m).head(free_dim) = free_draw.transpose();
    if (fix_v) samples.draws.row(m).tail(d) = cfg.fixed_v->transpose();
  }
  if (!all_finite(samples.draws))
    throw std::runtime_error("Laplace produced non-finite draws");
  return samples;
}

}  // namespace nadpvi

#endif  // NADPVI_POST_PROCESS_HPP_
