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
// Closed-form posteriors for the conjugate models. These are the ground
// truth that calibration tests compare approximate samplers against.

#ifndef NADPVI_CONJUGATE_HPP_
#define NADPVI_CONJUGATE_HPP_

#include <cmath>
#include <stdexcept>

#include "nadpvi/math.hpp"
#include "nadpvi/model.hpp"
#include "nadpvi/models.hpp"
#include "nadpvi/rng.hpp"

namespace nadpvi {

struct GammaDist {
  double shape = 1.0;
  double rate = 1.0;

  double log_pdf(double x) const {
    if (!(x > 0.0)) return kNegInf;
    return shape * std::log(rate) - std::lgamma(shape) +
           (shape - 1.0) * std::log(x) - rate * x;
  }
  double sample(Rng& rng) const { return rng.gamma(shape, 1.0 / rate); }
};

struct BetaDist {
  double a = 1.0;
  double b = 1.0;

  double log_pdf(double x) const {
    if (!(x > 0.0 && x < 1.0)) return kNegInf;
    return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
           (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
  }
  double sample(Rng& rng) const { return rng.beta(a, b); }
};

struct DirichletDist {
  Vector alpha;

  double log_pdf(const Vector& p) const {
    if (p.size() != alpha.size()) throw std::invalid_argument("dim mismatch");
    double acc = std::lgamma(alpha.sum());
    for (Eigen::Index i = 0; i < alpha.size(); ++i) {
      if (!(p(i) > 0.0)) return kNegInf;
      acc += (alpha(i) - 1.0) * std::log(p(i)) - std::lgamma(alpha(i));
    }
    return acc;
  }
  Vector sample(Rng& rng) const { return rng.dirichlet(alpha); }
};

inline GammaDist conjugate_posterior(const GammaExponentialModel& model,
                                     const Dataset& data) {
  data.validate();
  return {model.alpha() + data.size(), model.beta() + data.obs.row(0).sum()};
}

inline BetaDist conjugate_posterior(const BetaBernoulliModel& model,
                                    const Dataset& data) {
  data.validate();
  const double ones = data.obs.row(0).sum();
  return {model.alpha() + ones, model.beta() + (data.size() - ones)};
}

inline DirichletDist conjugate_posterior(const DirichletCategoricalModel& model,
                                         const Dataset& data) {
  data.validate();
  Vector alpha = model.alpha();
  for (int i = 0; i < data.size(); ++i) {
    const int c = static_cast<int>(data.obs(0, i));
    if (c < 0 || c > 2) throw std::invalid_argument("category out of range");
    alpha(c) += 1.0;
  }
  return {alpha};
}

// Draws from the exact posterior mapped into unconstrained coordinates,
// one row per draw. Only the conjugate models support this; it anchors the
// end-to-end coverage check that validates the evaluation harness itself.
inline Matrix sample_exact_posterior_unc(const Model& model,
                                         const Dataset& data, Rng& rng,
                                         int n_draws) {
  if (n_draws < 1) throw std::invalid_argument("n_draws must be >= 1");
  Matrix out(n_draws, model.param_dim());
  if (const auto* m1 = dynamic_cast<const GammaExponentialModel*>(&model)) {
    const GammaDist post = conjugate_posterior(*m1, data);
    for (int i = 0; i < n_draws; ++i)
      out(i, 0) = inv_softplus(post.sample(rng));
    return out;
  }
  if (const auto* m2 = dynamic_cast<const BetaBernoulliModel*>(&model)) {
    const BetaDist post = conjugate_posterior(*m2, data);
    for (int i = 0; i < n_draws; ++i) {
      const double p = post.sample(rng);
      out(i, 0) = std::log(p) - std::log1p(-p);
    }
    return out;
  }
  if (const auto* m3 = dynamic_cast<const DirichletCategoricalModel*>(&model)) {
    const DirichletDist post = conjugate_posterior(*m3, data);
    for (int i = 0; i < n_draws; ++i) {
      Vector p = post.sample(rng);
      out(i, 0) = std::log(p(0)) - std::log(p(2));
      out(i, 1) = std::log(p(1)) - std::log(p(2));
    }
    return out;
  }
  throw std::invalid_argument("no closed-form posterior for model " +
                              model.name());
}

// Gaussian posterior over regression weights with the noise variance held
// fixed and a flat prior: mean (X^T X)^-1 X^T y, covariance sigma2 (X^T X)^-1.
struct LeastSquaresPosterior {
  Vector mean;
  Matrix cov;
};

inline LeastSquaresPosterior least_squares_posterior(const Matrix& x,
                                                     const Vector& y,
                                                     double sigma2) {
  if (x.rows() != y.size()) throw std::invalid_argument("row mismatch");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be > 0");
  const Matrix xtx = x.transpose() * x;
  const Matrix xtx_inv = xtx.ldlt().solve(
      Matrix::Identity(x.cols(), x.cols()));
  return {xtx_inv * (x.transpose() * y), sigma2 * xtx_inv};
}

}  // namespace nadpvi

#endif  // NADPVI_CONJUGATE_HPP_
