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
// Probabilistic model contract: prior, likelihood, simulator, and the
// diffeomorphism to the unconstrained space where inference runs.

#ifndef NADPVI_MODEL_HPP_
#define NADPVI_MODEL_HPP_

#include <memory>
#include <stdexcept>
#include <string>

#include "nadpvi/math.hpp"
#include "nadpvi/rng.hpp"
#include "nadpvi/transform.hpp"

namespace nadpvi {

// Column-per-example observation matrix. Each model documents its row
// layout (e.g. a regression example stores covariates then the response).
struct Dataset {
  Matrix obs;  // obs_dim x N

  Dataset() = default;
  explicit Dataset(Matrix m) : obs(std::move(m)) {}

  int size() const { return static_cast<int>(obs.cols()); }
  int obs_dim() const { return static_cast<int>(obs.rows()); }
  Vector example(int i) const { return obs.col(i); }

  void validate() const {
    if (obs.cols() < 1) throw std::invalid_argument("dataset must have N >= 1");
    if (!obs.allFinite()) throw std::invalid_argument("dataset has non-finite values");
  }
};

// Immutable after construction; safe for concurrent use with per-thread RNGs.
// Scalar members work on the constrained space; the *_unc members evaluate
// through the transform, with gradients taken in unconstrained coordinates.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  // Unconstrained dimension n; the variational family over this model has
  // 2n free parameters (means and scales).
  virtual int param_dim() const = 0;
  virtual int obs_dim() const = 0;
  virtual const Diffeomorphism& transform() const = 0;

  virtual Vector prior_sample(Rng& rng) const = 0;
  virtual Dataset simulate(Rng& rng, const Vector& theta_con, int n) const = 0;
  virtual double log_prior(const Vector& theta_con) const = 0;
  virtual double per_example_log_lik(const Vector& theta_con,
                                     const Vector& x) const = 0;

  double log_lik_unc(const Vector& theta_unc, const Vector& x) const {
    return per_example_log_lik(transform().inverse(theta_unc), x);
  }
  // log prior density pushed to unconstrained space: log p(U^-1(z)) + log|det J|.
  double log_prior_jac_unc(const Vector& theta_unc) const {
    return log_prior(transform().inverse(theta_unc)) +
           transform().log_abs_det_jacobian_inverse(theta_unc);
  }

  // Analytic in the concrete models; central differences otherwise.
  virtual Vector grad_log_lik_unc(const Vector& theta_unc,
                                  const Vector& x) const {
    return finite_diff([&](const Vector& z) { return log_lik_unc(z, x); },
                       theta_unc);
  }
  virtual Vector grad_log_prior_jac_unc(const Vector& theta_unc) const {
    return finite_diff([&](const Vector& z) { return log_prior_jac_unc(z); },
                       theta_unc);
  }

 protected:
  template <typename F>
  static Vector finite_diff(F&& f, const Vector& z, double h = 1e-6) {
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
};

using ModelPtr = std::shared_ptr<const Model>;

}  // namespace nadpvi

#endif  // NADPVI_MODEL_HPP_
