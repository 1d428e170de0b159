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
// DP-SGD on the negative per-example ELBO loss: Poisson subsampling,
// per-example clipping in a preconditioned metric, Gaussian noise, and a
// full parameter/noisy-gradient trace for downstream post-processing.

#ifndef NADPVI_DP_SGD_HPP_
#define NADPVI_DP_SGD_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nadpvi/elbo.hpp"
#include "nadpvi/math.hpp"
#include "nadpvi/model.hpp"
#include "nadpvi/rng.hpp"
#include "nadpvi/variational.hpp"

namespace nadpvi {

// g * min(1, C / |g|); the zero vector is left unchanged.
inline Vector clip(const Vector& g, double clip_norm) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
  const double norm = g.norm();
  if (norm <= clip_norm || norm == 0.0) return g;
  return g * (clip_norm / norm);
}

// sqrt(2) * lambda_c / (sigma * C * sqrt(T * d)).
inline double lr_heuristic(double lambda_c, double sigma, double clip_norm,
                           int64_t steps, int dim) {
  if (!(lambda_c > 0.0 && sigma > 0.0 && clip_norm > 0.0))
    throw std::invalid_argument("lr_heuristic arguments must be > 0");
  if (steps < 1 || dim < 1)
    throw std::invalid_argument("steps and dim must be >= 1");
  return std::numbers::sqrt2 * lambda_c /
         (sigma * clip_norm *
          std::sqrt(static_cast<double>(steps) * static_cast<double>(dim)));
}

struct DpSgdConfig {
  double clip_norm = 1.0;
  double sampling_rate = 0.1;
  int64_t steps = 1000;
  double noise_multiplier = 1.0;
  Vector precondition;  // beta, one entry per flat coordinate
  double lr_scale = 1.0;
  Vector init;  // phi_0 in flat [mu; u] layout
  uint64_t seed = 0;

  // beta = 1 on the mean block, beta_u on the scale block.
  static Vector default_precondition(int n, double beta_u) {
    Vector beta = Vector::Ones(2 * n);
    beta.tail(n).setConstant(beta_u);
    return beta;
  }

  // mu = 0, u = softplus^-1(1): unit initial scales.
  static Vector default_init(int n) {
    return VariationalParams::standard(n).flat();
  }

  static DpSgdConfig defaults(int n, double beta_u = 10.0) {
    DpSgdConfig cfg;
    cfg.precondition = default_precondition(n, beta_u);
    cfg.init = default_init(n);
    return cfg;
  }

  void validate(int dim) const {
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
    if (!(sampling_rate > 0.0 && sampling_rate <= 1.0))
      throw std::invalid_argument("sampling_rate must be in (0,1]");
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (!(noise_multiplier > 0.0))
      throw std::invalid_argument("noise_multiplier must be > 0");
    if (!(lr_scale > 0.0)) throw std::invalid_argument("lr_scale must be > 0");
    if (precondition.size() != dim)
      throw std::invalid_argument("precondition must have one entry per coordinate");
    for (Eigen::Index i = 0; i < precondition.size(); ++i)
      if (!(precondition(i) > 0.0))
        throw std::invalid_argument("precondition entries must be > 0");
    if (init.size() != dim)
      throw std::invalid_argument("init must have one entry per coordinate");
  }
};

struct DpSgdTrace {
  Matrix params;       // (T+1) x d iterates phi_t
  Matrix noisy_grads;  // T x d privatized gradients, row t is gtilde_{t+1}
  DpSgdConfig config;
  Vector effective_lr;  // lambda = lr_heuristic * beta

  int steps() const { return static_cast<int>(noisy_grads.rows()); }
  int dim() const { return static_cast<int>(params.cols()); }
};

// One pass of Algorithm-style DP-SGD. Per step, in fixed draw order
// (shared ELBO draws, then the Poisson mask in dataset order, then noise):
//   sum_i clip(beta .* grad_i, C) over the minibatch, with grad_i the
//   gradient of the negative per-example loss;
//   gtilde = (1/beta) .* (sum + sigma * C * eta);
//   phi <- phi - lambda .* gtilde.
// Empty minibatches contribute a zero sum; the noise is still added.
inline DpSgdTrace run_dpsgd(const Model& model, const Dataset& data,
                            const ElboConfig& vi, const DpSgdConfig& cfg) {
  data.validate();
  vi.validate();
  if (vi.dataset_size != data.size())
    throw std::invalid_argument("ElboConfig.dataset_size must match the dataset");
  const int n = model.param_dim();
  const int d = 2 * n;
  cfg.validate(d);

  const double lam_scalar = lr_heuristic(cfg.lr_scale, cfg.noise_multiplier,
                                         cfg.clip_norm, cfg.steps, d);
  const Vector lambda = lam_scalar * cfg.precondition;
  const Vector inv_beta = cfg.precondition.cwiseInverse();
  const double noise_scale = cfg.noise_multiplier * cfg.clip_norm;

  DpSgdTrace trace;
  trace.config = cfg;
  trace.effective_lr = lambda;
  const int steps = static_cast<int>(cfg.steps);
  trace.params.resize(steps + 1, d);
  trace.noisy_grads.resize(steps, d);
  trace.params.row(0) = cfg.init.transpose();

  Rng rng(cfg.seed);
  Vector phi = cfg.init;
  for (int t = 0; t < steps; ++t) {
    const Matrix eps = rng.normal_matrix(vi.n_vi, n);
    Vector sum = Vector::Zero(d);
    try {
      const VariationalParams params = VariationalParams::from_flat(phi);
      const ElboStepContext ctx(params, model, vi, eps);
      for (int i = 0; i < data.size(); ++i) {
        const bool in_batch = rng.bernoulli(cfg.sampling_rate);
        if (!in_batch) continue;
        const Vector g = -ctx.grad(data.example(i));
        sum += clip(cfg.precondition.cwiseProduct(g), cfg.clip_norm);
      }
    } catch (const std::exception& e) {
      // At t = 0 the iterate is the caller's init, so the failure is a
      // setup problem; afterwards the optimizer walked there itself.
      if (t == 0) throw;
      throw std::runtime_error("DP-SGD diverged: gradient evaluation failed at step " +
                               std::to_string(t + 1) + " (" + e.what() + ")");
    }
    const Vector eta = rng.normal_vector(d);
    const Vector gtilde = inv_beta.cwiseProduct(sum + noise_scale * eta);

    phi -= lambda.cwiseProduct(gtilde);
    if (!all_finite(phi))
      throw std::runtime_error("DP-SGD diverged: non-finite parameters at step " +
                               std::to_string(t + 1));
    trace.noisy_grads.row(t) = gtilde.transpose();
    trace.params.row(t + 1) = phi.transpose();
  }
  return trace;
}

}  // namespace nadpvi

#endif  // NADPVI_DP_SGD_HPP_
