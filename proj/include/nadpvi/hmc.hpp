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
// Hamiltonian Monte Carlo with a fixed leapfrog path length and dual
// averaging of the step size toward a target acceptance rate, plus an
// effective-sample-size estimate from the initial positive autocorrelation
// sequence.

#ifndef NADPVI_HMC_HPP_
#define NADPVI_HMC_HPP_

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nadpvi/math.hpp"
#include "nadpvi/post_process.hpp"
#include "nadpvi/rng.hpp"

namespace nadpvi {

struct HmcConfig {
  int leapfrog_steps = 32;
  double target_accept = 0.8;
  double min_accept = 0.1;  // below this after warmup the run is pathological

  void validate() const {
    if (leapfrog_steps < 1)
      throw std::invalid_argument("leapfrog_steps must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw std::invalid_argument("target_accept must be in (0,1)");
  }
};

struct HmcRun {
  Matrix draws;  // post-warmup states, one row per draw
  double acceptance_rate = 0.0;
  double step_size = 0.0;
  Vector ess;  // per coordinate
};

// Effective sample size from Geyer's initial positive sequence: sum paired
// autocorrelations until a pair goes non-positive.
inline double effective_sample_size(const Vector& x) {
  const int m = static_cast<int>(x.size());
  if (m < 4) return static_cast<double>(m);
  const double mean = x.mean();
  const Vector c = x.array() - mean;
  const double var = c.squaredNorm() / m;
  if (var == 0.0) return static_cast<double>(m);
  double sum_rho = 0.0;
  for (int k = 1; k + 1 < m; k += 2) {
    const double rho_a = c.head(m - k).dot(c.tail(m - k)) / (m * var);
    const double rho_b =
        c.head(m - k - 1).dot(c.tail(m - k - 1)) / (m * var);
    const double pair = rho_a + rho_b;
    if (pair <= 0.0) break;
    sum_rho += pair;
  }
  return m / (1.0 + 2.0 * sum_rho);
}

namespace detail {

template <typename F>
double leapfrog(F&& target, Vector& z, Vector& p, Vector& grad,
                double step_size, int n_steps) {
  double logp = 0.0;
  for (int s = 0; s < n_steps; ++s) {
    p += 0.5 * step_size * grad;
    z += step_size * p;
    logp = target(z, grad);
    if (!std::isfinite(logp) || !all_finite(grad)) {
      return -std::numeric_limits<double>::infinity();
    }
    p += 0.5 * step_size * grad;
  }
  return logp;
}

// Doubles or halves the step size until the single-step acceptance
// probability crosses 1/2.
template <typename F>
double reasonable_step_size(F&& target, const Vector& z0, Rng& rng) {
  const int n = static_cast<int>(z0.size());
  Vector grad0(n);
  const double logp0 = target(z0, grad0);
  if (!std::isfinite(logp0))
    throw std::runtime_error("HMC initial point has non-finite density");
  double eps = 0.1;
  const Vector p0 = rng.normal_vector(n);
  const auto joint_delta = [&](double step) {
    Vector z = z0;
    Vector p = p0;
    Vector grad = grad0;
    const double logp = leapfrog(target, z, p, grad, step, 1);
    return (logp - 0.5 * p.squaredNorm()) - (logp0 - 0.5 * p0.squaredNorm());
  };
  double delta = joint_delta(eps);
  const double dir = delta > std::log(0.5) ? 1.0 : -1.0;
  for (int iter = 0; iter < 60; ++iter) {
    if (dir * delta <= dir * std::log(0.5)) break;
    eps *= std::pow(2.0, dir);
    delta = joint_delta(eps);
    if (!std::isfinite(delta) && dir > 0.0) {
      eps *= 0.5;
      break;
    }
  }
  return eps;
}

}  // namespace detail

// Samples from an unnormalized log density with analytic gradient
// (signature: target(z, grad) -> logp). Step size is adapted during warmup
// only; draws come from the fixed post-warmup kernel.
template <typename F>
HmcRun hmc_sample(F&& target, const Vector& z0, int warmup, int draws,
                  Rng& rng, const HmcConfig& cfg = {}) {
  cfg.validate();
  if (warmup < 1 || draws < 1)
    throw std::invalid_argument("warmup and draws must be >= 1");
  const int n = static_cast<int>(z0.size());

  double eps = detail::reasonable_step_size(target, z0, rng);
  // Dual averaging constants per the standard adaptive-HMC recipe.
  const double mu = std::log(10.0 * eps);
  const double gamma = 0.05;
  const double t0 = 10.0;
  const double da_kappa = 0.75;
  double h_bar = 0.0;
  double log_eps_bar = std::log(eps);

  Vector z = z0;
  Vector grad(n);
  double logp = target(z, grad);
  if (!std::isfinite(logp))
    throw std::runtime_error("HMC initial point has non-finite density");

  HmcRun run;
  run.draws.resize(draws, n);
  int accepted = 0;
  const int total = warmup + draws;
  for (int m = 1; m <= total; ++m) {
    const bool in_warmup = m <= warmup;
    const double step = in_warmup ? eps : std::exp(log_eps_bar);
    const Vector p0 = rng.normal_vector(n);
    Vector zp = z;
    Vector pp = p0;
    Vector gradp = grad;
    const double logp_prop =
        detail::leapfrog(target, zp, pp, gradp, step, cfg.leapfrog_steps);
    const double h0 = logp - 0.5 * p0.squaredNorm();
    const double h1 = logp_prop - 0.5 * pp.squaredNorm();
    const double accept_prob =
        std::isfinite(h1) ? std::min(1.0, std::exp(h1 - h0)) : 0.0;
    if (rng.uniform() < accept_prob) {
      z = zp;
      grad = gradp;
      logp = logp_prop;
      if (!in_warmup) ++accepted;
    }
    if (in_warmup) {
      const double frac = 1.0 / (m + t0);
      h_bar = (1.0 - frac) * h_bar + frac * (cfg.target_accept - accept_prob);
      const double log_eps = mu - std::sqrt(static_cast<double>(m)) / gamma * h_bar;
      const double w = std::pow(static_cast<double>(m), -da_kappa);
      log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
      eps = std::exp(log_eps);
    } else {
      run.draws.row(m - warmup - 1) = z.transpose();
    }
  }
  run.acceptance_rate = static_cast<double>(accepted) / draws;
  run.step_size = std::exp(log_eps_bar);
  run.ess.resize(n);
  for (int j = 0; j < n; ++j)
    run.ess(j) = effective_sample_size(run.draws.col(j));
  if (run.acceptance_rate < cfg.min_accept)
    throw std::runtime_error(
        "HMC adaptation pathological: acceptance rate " +
        std::to_string(run.acceptance_rate));
  return run;
}

// MCMC inference for the post-processing model over z = [phi_star; v].
inline PosteriorSamples fit_hmc(const PostProcessModel& model, int warmup,
                                int draws, Rng& rng,
                                const HmcConfig& cfg = {}) {
  const int d = model.dim();
  Vector z0(2 * d);
  z0.head(d) = model.phi_star_prior_mean;
  for (int i = 0; i < d; ++i)
    z0(d + i) = inv_softplus(std::max(model.v_prior.mean(i), 1e-3));
  const auto target = [&model](const Vector& z, Vector& grad) {
    return log_posterior_grad(z, grad, model);
  };
  const HmcRun run = hmc_sample(target, z0, warmup, draws, rng, cfg);

  PosteriorSamples samples;
  samples.method = "hmc";
  samples.draws = run.draws;
  samples.acceptance_rate = run.acceptance_rate;
  samples.ess = run.ess;
  return samples;
}

}  // namespace nadpvi

#endif  // NADPVI_HMC_HPP_
