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
// Diagonal-Gaussian variational family in unconstrained coordinates. The
// free parameters are phi = (mu, u) with standard deviations s = softplus(u).

#ifndef NADPVI_VARIATIONAL_HPP_
#define NADPVI_VARIATIONAL_HPP_

#include <stdexcept>

#include "nadpvi/math.hpp"
#include "nadpvi/rng.hpp"

namespace nadpvi {

struct VariationalParams {
  Vector mu;
  Vector u;

  VariationalParams() = default;
  VariationalParams(Vector mu_in, Vector u_in)
      : mu(std::move(mu_in)), u(std::move(u_in)) {
    if (mu.size() != u.size())
      throw std::invalid_argument("mu and u must have equal length");
    if (mu.size() < 1) throw std::invalid_argument("empty parameter vector");
  }

  // Default start: zero means, unit standard deviations.
  static VariationalParams standard(int n) {
    return {Vector::Zero(n), Vector::Constant(n, inv_softplus(1.0))};
  }

  // Flat layout [mu; u], the coordinate system the optimizer traces.
  static VariationalParams from_flat(const Vector& phi) {
    if (phi.size() < 2 || phi.size() % 2 != 0)
      throw std::invalid_argument("flat parameter vector must have even length");
    const Eigen::Index n = phi.size() / 2;
    return {phi.head(n), phi.tail(n)};
  }

  int n() const { return static_cast<int>(mu.size()); }
  int flat_dim() const { return 2 * n(); }

  Vector flat() const {
    Vector phi(flat_dim());
    phi.head(n()) = mu;
    phi.tail(n()) = u;
    return phi;
  }

  Vector scale() const {
    Vector s(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) s(i) = softplus(u(i));
    return s;
  }
};

// m draws theta_i = mu + s .* eps_i, one per row.
inline Matrix sample_variational(const VariationalParams& params, Rng& rng,
                                 int m) {
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  const Vector s = params.scale();
  Matrix draws(m, params.n());
  for (int i = 0; i < m; ++i)
    draws.row(i) =
        (params.mu + s.cwiseProduct(rng.normal_vector(params.n()))).transpose();
  return draws;
}

// Variational log-density at an unconstrained point.
inline double log_q(const VariationalParams& params, const Vector& theta) {
  if (theta.size() != params.mu.size())
    throw std::invalid_argument("dimension mismatch");
  const Vector s = params.scale();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    acc += log_normal_pdf(theta(i), params.mu(i), s(i));
  return acc;
}

}  // namespace nadpvi

#endif  // NADPVI_VARIATIONAL_HPP_
