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
// The final approximate posterior: an equal-weight mixture of variational
// Gaussians, one component per posterior draw of phi_star.

#ifndef NADPVI_POSTERIOR_HPP_
#define NADPVI_POSTERIOR_HPP_

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nadpvi/math.hpp"
#include "nadpvi/model.hpp"
#include "nadpvi/post_process.hpp"
#include "nadpvi/rng.hpp"
#include "nadpvi/variational.hpp"

namespace nadpvi {

struct NoiseAwarePosterior {
  Matrix means;   // M x n component means
  Matrix scales;  // M x n component standard deviations

  int components() const { return static_cast<int>(means.rows()); }
  int dim() const { return static_cast<int>(means.cols()); }

  void validate() const {
    if (means.rows() < 1) throw std::invalid_argument("empty mixture");
    if (means.rows() != scales.rows() || means.cols() != scales.cols())
      throw std::invalid_argument("means/scales shape mismatch");
    if (!(scales.array() > 0.0).all())
      throw std::invalid_argument("component scales must be positive");
  }
};

// Drops the v block of each draw; each phi_star = (mu, u) becomes a
// diagonal Gaussian component N(mu, diag(softplus(u)^2)) with weight 1/M.
inline NoiseAwarePosterior mixture_posterior(const PosteriorSamples& samples) {
  const int m = static_cast<int>(samples.draws.rows());
  if (m < 1) throw std::invalid_argument("no posterior draws");
  const int two_d = static_cast<int>(samples.draws.cols());
  if (two_d % 4 != 0)
    throw std::invalid_argument("draws must hold (mu, u, v) blocks");
  const int n = two_d / 4;  // draws are (phi_star, v) with phi_star = (mu, u)
  NoiseAwarePosterior post;
  post.means = samples.draws.leftCols(n);
  post.scales.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      post.scales(i, j) = softplus(samples.draws(i, n + j));
  post.validate();
  return post;
}

// A single-component mixture from fixed variational parameters; the naive
// baseline uses this with the last trace iterate.
inline NoiseAwarePosterior point_posterior(const VariationalParams& params) {
  NoiseAwarePosterior post;
  post.means = params.mu.transpose();
  post.scales = params.scale().transpose();
  post.validate();
  return post;
}

inline double mixture_log_density(const NoiseAwarePosterior& post,
                                  const Vector& theta) {
  if (theta.size() != post.dim())
    throw std::invalid_argument("theta dimension mismatch");
  const int m = post.components();
  std::vector<double> comp(m);
  for (int i = 0; i < m; ++i) {
    double lp = 0.0;
    for (int j = 0; j < post.dim(); ++j)
      lp += log_normal_pdf(theta(j), post.means(i, j), post.scales(i, j));
    comp[i] = lp;
  }
  return logsumexp(comp) - std::log(static_cast<double>(m));
}

// Ancestral sampling: uniform component, then a Gaussian draw. Rows are
// unconstrained parameter vectors.
inline Matrix sample_posterior(const NoiseAwarePosterior& post, Rng& rng,
                               int n_samples) {
  post.validate();
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  const int n = post.dim();
  Matrix out(n_samples, n);
  for (int s = 0; s < n_samples; ++s) {
    const int i = rng.uniform_int(post.components());
    for (int j = 0; j < n; ++j)
      out(s, j) = post.means(i, j) + post.scales(i, j) * rng.normal();
  }
  return out;
}

// Monte-Carlo posterior predictive probability for a logistic model:
// mean over posterior draws of sigmoid(theta . x), with x already carrying
// the bias entry expected by the parameter layout.
inline double posterior_predictive_logistic(const NoiseAwarePosterior& post,
                                            const Vector& x, Rng& rng,
                                            int n_samples) {
  if (x.size() != post.dim())
    throw std::invalid_argument("feature dimension mismatch");
  const Matrix draws = sample_posterior(post, rng, n_samples);
  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s)
    acc += sigmoid(draws.row(s).dot(x.transpose()));
  return acc / n_samples;
}

}  // namespace nadpvi

#endif  // NADPVI_POSTERIOR_HPP_
