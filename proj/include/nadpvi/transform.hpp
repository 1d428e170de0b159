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
// Bijections between a model's constrained parameter space and the
// unconstrained space where variational inference and DP-SGD operate.

#ifndef NADPVI_TRANSFORM_HPP_
#define NADPVI_TRANSFORM_HPP_

#include <memory>
#include <stdexcept>
#include <vector>

#include "nadpvi/math.hpp"

namespace nadpvi {

// forward() maps constrained -> unconstrained; inverse() maps back.
// log_abs_det_jacobian_inverse is log |det d(inverse)/d(unconstrained)|,
// the correction applied when evaluating constrained-space densities at
// unconstrained points.
class Diffeomorphism {
 public:
  virtual ~Diffeomorphism() = default;
  virtual int constrained_dim() const = 0;
  virtual int unconstrained_dim() const = 0;
  virtual Vector forward(const Vector& theta_con) const = 0;
  virtual Vector inverse(const Vector& theta_unc) const = 0;
  virtual double log_abs_det_jacobian_inverse(const Vector& theta_unc) const = 0;
};

class IdentityTransform final : public Diffeomorphism {
 public:
  explicit IdentityTransform(int dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  }
  int constrained_dim() const override { return dim_; }
  int unconstrained_dim() const override { return dim_; }
  Vector forward(const Vector& theta) const override { return theta; }
  Vector inverse(const Vector& theta) const override { return theta; }
  double log_abs_det_jacobian_inverse(const Vector&) const override {
    return 0.0;
  }

 private:
  int dim_;
};

// Softplus on a masked subset of coordinates (identity elsewhere); maps
// unconstrained reals onto the positive half-line where masked.
class SoftplusTransform final : public Diffeomorphism {
 public:
  explicit SoftplusTransform(int dim)
      : mask_(static_cast<size_t>(dim), true) {
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  }
  SoftplusTransform(int dim, std::vector<int> positive_indices)
      : mask_(static_cast<size_t>(dim), false) {
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    for (int i : positive_indices) {
      if (i < 0 || i >= dim) throw std::invalid_argument("index out of range");
      mask_[static_cast<size_t>(i)] = true;
    }
  }
  int constrained_dim() const override { return static_cast<int>(mask_.size()); }
  int unconstrained_dim() const override { return constrained_dim(); }
  Vector forward(const Vector& theta_con) const override {
    check(theta_con);
    Vector z = theta_con;
    for (size_t i = 0; i < mask_.size(); ++i)
      if (mask_[i]) z(static_cast<Eigen::Index>(i)) = inv_softplus(theta_con(static_cast<Eigen::Index>(i)));
    return z;
  }
  Vector inverse(const Vector& theta_unc) const override {
    check(theta_unc);
    Vector t = theta_unc;
    for (size_t i = 0; i < mask_.size(); ++i)
      if (mask_[i]) t(static_cast<Eigen::Index>(i)) = softplus(theta_unc(static_cast<Eigen::Index>(i)));
    return t;
  }
  double log_abs_det_jacobian_inverse(const Vector& theta_unc) const override {
    check(theta_unc);
    double acc = 0.0;
    for (size_t i = 0; i < mask_.size(); ++i)
      if (mask_[i]) acc += log_sigmoid(theta_unc(static_cast<Eigen::Index>(i)));
    return acc;
  }

 private:
  void check(const Vector& v) const {
    if (v.size() != static_cast<Eigen::Index>(mask_.size()))
      throw std::invalid_argument("dimension mismatch");
  }
  std::vector<bool> mask_;
};

// Scalar logit/sigmoid pair for parameters on (0,1).
class LogitTransform final : public Diffeomorphism {
 public:
  int constrained_dim() const override { return 1; }
  int unconstrained_dim() const override { return 1; }
  Vector forward(const Vector& theta_con) const override {
    check(theta_con);
    const double p = theta_con(0);
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("logit argument must be in (0,1)");
    Vector z(1);
    z(0) = std::log(p) - std::log1p(-p);
    return z;
  }
  Vector inverse(const Vector& theta_unc) const override {
    check(theta_unc);
    Vector t(1);
    t(0) = sigmoid(theta_unc(0));
    return t;
  }
  double log_abs_det_jacobian_inverse(const Vector& theta_unc) const override {
    check(theta_unc);
    // d sigmoid/dz = s(1-s)
    return log_sigmoid(theta_unc(0)) + log_sigmoid(-theta_unc(0));
  }

 private:
  static void check(const Vector& v) {
    if (v.size() != 1) throw std::invalid_argument("dimension mismatch");
  }
};

// Additive log-ratio coordinates for the 3-simplex: the unconstrained pair
// (z1, z2) maps to softmax(z1, z2, 0). The third logit is pinned to zero for
// identifiability.
class AdditiveLogRatioTransform final : public Diffeomorphism {
 public:
  int constrained_dim() const override { return 3; }
  int unconstrained_dim() const override { return 2; }
  Vector forward(const Vector& theta_con) const override {
    if (theta_con.size() != 3) throw std::invalid_argument("need a 3-simplex point");
    for (int i = 0; i < 3; ++i)
      if (!(theta_con(i) > 0.0))
        throw std::invalid_argument("simplex coordinates must be positive");
    Vector z(2);
    z(0) = std::log(theta_con(0)) - std::log(theta_con(2));
    z(1) = std::log(theta_con(1)) - std::log(theta_con(2));
    return z;
  }
  Vector inverse(const Vector& theta_unc) const override {
    if (theta_unc.size() != 2) throw std::invalid_argument("dimension mismatch");
    const double m = std::max({theta_unc(0), theta_unc(1), 0.0});
    const double e0 = std::exp(theta_unc(0) - m);
    const double e1 = std::exp(theta_unc(1) - m);
    const double e2 = std::exp(-m);
    const double s = e0 + e1 + e2;
    Vector p(3);
    p << e0 / s, e1 / s, e2 / s;
    return p;
  }
  double log_abs_det_jacobian_inverse(const Vector& theta_unc) const override {
    // det of the 2x2 Jacobian of (p1, p2) in (z1, z2) is p1 p2 p3.
    Vector p = inverse(theta_unc);
    return std::log(p(0)) + std::log(p(1)) + std::log(p(2));
  }
};

}  // namespace nadpvi

#endif  // NADPVI_TRANSFORM_HPP_
