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
// Adam ascent on a smooth objective with a late-stage step-size drop, used
// for MAP estimation of the post-processing posterior.

#ifndef NADPVI_OPTIM_HPP_
#define NADPVI_OPTIM_HPP_

#include <cmath>
#include <stdexcept>
#include <utility>

#include "nadpvi/math.hpp"

namespace nadpvi {

struct AdamConfig {
  int steps = 3000;
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // After decay_fraction of the budget the step size is multiplied once.
  double decay_fraction = 0.7;
  double decay_multiplier = 0.1;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("betas must be in [0,1)");
    if (!(decay_fraction > 0.0 && decay_fraction <= 1.0))
      throw std::invalid_argument("decay_fraction must be in (0,1]");
  }
};

struct AdamResult {
  Vector z;
  double value = 0.0;
  Vector grad;
};

// Maximizes f, where f(z, grad) returns the objective and fills its
// gradient. The final value/grad are evaluated at the returned point.
template <typename F>
AdamResult adam_maximize(F&& f, const Vector& z0, const AdamConfig& cfg = {}) {
  cfg.validate();
  Vector z = z0;
  Vector m = Vector::Zero(z.size());
  Vector v = Vector::Zero(z.size());
  Vector grad(z.size());
  const int decay_at = static_cast<int>(cfg.decay_fraction * cfg.steps);
  for (int i = 1; i <= cfg.steps; ++i) {
    const double value = f(z, grad);
    if (!std::isfinite(value) || !all_finite(grad))
      throw std::runtime_error("adam_maximize: non-finite objective or gradient");
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double mc = 1.0 - std::pow(cfg.beta1, i);
    const double vc = 1.0 - std::pow(cfg.beta2, i);
    const double lr = i <= decay_at ? cfg.lr : cfg.lr * cfg.decay_multiplier;
    // Ascent step; v is a running mean of squared gradients.
    z.array() += lr * (m / mc).array() / ((v / vc).array().sqrt() + cfg.eps);
  }
  AdamResult result;
  result.z = z;
  result.grad.resize(z.size());
  result.value = f(z, result.grad);
  return result;
}

}  // namespace nadpvi

#endif  // NADPVI_OPTIM_HPP_
