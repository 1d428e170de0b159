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
// Privacy accounting for DP-SGD: Renyi differential privacy of the
// Poisson-subsampled Gaussian mechanism, composed over steps and converted
// to (epsilon, delta). Noise calibration inverts the curve by bisection.

#ifndef NADPVI_ACCOUNTANT_HPP_
#define NADPVI_ACCOUNTANT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "nadpvi/math.hpp"

namespace nadpvi {

struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
    if (!(delta > 0.0 && delta < 1.0))
      throw std::invalid_argument("delta must be in (0,1)");
  }
};

struct MechanismSpec {
  int64_t steps = 0;
  double sampling_rate = 0.0;
  double noise_multiplier = 0.0;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (!(sampling_rate > 0.0 && sampling_rate <= 1.0))
      throw std::invalid_argument("sampling_rate must be in (0,1]");
    if (!(noise_multiplier > 0.0))
      throw std::invalid_argument("noise_multiplier must be > 0");
  }
};

namespace detail {

// Single-step RDP of order alpha (integer alpha >= 2) for the subsampled
// Gaussian: (1/(alpha-1)) log sum_k C(alpha,k)(1-q)^{alpha-k} q^k
// exp(k(k-1)/(2 sigma^2)), accumulated in log space.
inline double rdp_subsampled_gaussian_int(double q, double sigma,
                                          int64_t alpha) {
  std::vector<double> terms(static_cast<size_t>(alpha) + 1);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  for (int64_t k = 0; k <= alpha; ++k) {
    terms[static_cast<size_t>(k)] =
        log_binomial(alpha, k) + static_cast<double>(alpha - k) * log_1mq +
        static_cast<double>(k) * log_q +
        static_cast<double>(k * (k - 1)) / (2.0 * sigma * sigma);
  }
  return logsumexp(terms) / (static_cast<double>(alpha) - 1.0);
}

// Fractional alpha: the integral splits at z0 = sigma^2 log(1/q - 1) + 1/2
// and each half expands into a binomial series whose terms pair a
// generalized binomial coefficient with a Gaussian tail (erfc). Signs of the
// coefficients alternate once the series index passes alpha.
inline double rdp_subsampled_gaussian_frac(double q, double sigma,
                                           double alpha) {
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double s2 = 2.0 * sigma * sigma;
  const double sqrt2s = std::numbers::sqrt2 * sigma;

  double log_a0 = kNegInf, log_a1 = kNegInf;
  double log_coef = 0.0;
  double sign = 1.0;
  for (int64_t i = 0;; ++i) {
    const double di = static_cast<double>(i);
    const double dj = alpha - di;
    const double log_t0 = log_coef + di * log_q + dj * log_1mq;
    const double log_t1 = log_coef + dj * log_q + di * log_1mq;
    const double log_e0 = std::log(0.5) + log_erfc((di - z0) / sqrt2s);
    const double log_e1 = std::log(0.5) + log_erfc((z0 - dj) / sqrt2s);
    const double log_s0 = log_t0 + (di * di - di) / s2 + log_e0;
    const double log_s1 = log_t1 + (dj * dj - dj) / s2 + log_e1;
    if (sign > 0.0) {
      log_a0 = logaddexp(log_a0, log_s0);
      log_a1 = logaddexp(log_a1, log_s1);
    } else {
      log_a0 = logsubexp(log_a0, log_s0);
      log_a1 = logsubexp(log_a1, log_s1);
    }

    const double next = alpha - (di + 1.0) + 1.0;  // binom recurrence factor
    const double f = next / (di + 1.0);
    if (f == 0.0) break;
    if (f < 0.0) {
      sign = -sign;
      log_coef += std::log(-f);
    } else {
      log_coef += std::log(f);
    }
    if (di > alpha && i > 10 &&
        std::max(log_s0, log_s1) < std::max(log_a0, log_a1) - 40.0) {
      break;
    }
    if (i > 200000)
      throw std::runtime_error("subsampled-Gaussian RDP series did not converge");
  }
  return logaddexp(log_a0, log_a1) / (alpha - 1.0);
}

}  // namespace detail

// Single-step RDP of the Poisson-subsampled Gaussian mechanism.
inline double rdp_subsampled_gaussian(double sampling_rate, double sigma,
                                      double alpha) {
  if (!(sampling_rate > 0.0 && sampling_rate <= 1.0))
    throw std::invalid_argument("sampling_rate must be in (0,1]");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
  if (!(alpha > 1.0)) throw std::invalid_argument("alpha must be > 1");
  if (sampling_rate == 1.0) return alpha / (2.0 * sigma * sigma);
  const double rounded = std::nearbyint(alpha);
  if (std::abs(alpha - rounded) < 1e-12 && rounded >= 2.0) {
    return detail::rdp_subsampled_gaussian_int(sampling_rate, sigma,
                                               static_cast<int64_t>(rounded));
  }
  return detail::rdp_subsampled_gaussian_frac(sampling_rate, sigma, alpha);
}

// Exact (epsilon, delta) curve of the unsubsampled Gaussian mechanism with
// sensitivity 1: delta(eps) = Phi(1/(2s) - eps*s) - e^eps Phi(-1/(2s) - eps*s).
// Returns the smallest eps whose delta does not exceed the target.
inline double analytic_gaussian_epsilon(double sigma, double delta) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("delta must be in (0,1)");
  auto delta_of = [sigma](double eps) {
    return normal_cdf(0.5 / sigma - eps * sigma) -
           std::exp(eps) * normal_cdf(-0.5 / sigma - eps * sigma);
  };
  double lo = 0.0, hi = 1.0;
  while (delta_of(hi) > delta) {
    hi *= 2.0;
    if (hi > 1e6) throw std::runtime_error("analytic Gaussian: eps overflow");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (delta_of(mid) > delta) lo = mid; else hi = mid;
  }
  return hi;
}

// RDP accountant over a fixed grid of orders. Quarter-integer orders up to 64
// follow common practice; the grid continues with integer orders so that
// conversion overhead does not floor epsilon above small targets (the
// (eps, delta) conversion at order a costs about -(log delta + log a)/(a-1)
// even at zero RDP, which exceeds 0.1 for delta = 1e-5 unless a > 64).
class PrivacyAccountant {
 public:
  PrivacyAccountant() : orders_(default_orders()) {}
  explicit PrivacyAccountant(std::vector<double> orders)
      : orders_(std::move(orders)) {
    if (orders_.empty()) throw std::invalid_argument("empty order grid");
    for (double a : orders_)
      if (!(a > 1.0)) throw std::invalid_argument("orders must be > 1");
  }

  static std::vector<double> default_orders() {
    std::vector<double> orders;
    for (int i = 0; 1.25 + 0.25 * i <= 64.0; ++i) orders.push_back(1.25 + 0.25 * i);
    for (int a = 65; a <= 1024; ++a) orders.push_back(static_cast<double>(a));
    return orders;
  }

  const std::vector<double>& orders() const { return orders_; }

  // Total (eps, delta)-DP cost of `steps` compositions. A full-batch schedule
  // (kappa = 1) composes exactly into one Gaussian mechanism with multiplier
  // sigma/sqrt(T), where the analytic curve is tight; the RDP route stays
  // 8-10% conservative there, which matters for calibration targets.
  double epsilon_of(double sigma, double delta, int64_t steps,
                    double kappa) const {
    MechanismSpec{steps, kappa, sigma}.validate();
    if (!(delta > 0.0 && delta < 1.0))
      throw std::invalid_argument("delta must be in (0,1)");
    if (kappa == 1.0) {
      return analytic_gaussian_epsilon(
          sigma / std::sqrt(static_cast<double>(steps)), delta);
    }
    double best = std::numeric_limits<double>::infinity();
    const double log_delta = std::log(delta);
    for (double a : orders_) {
      const double rho =
          static_cast<double>(steps) * rdp_subsampled_gaussian(kappa, sigma, a);
      const double eps =
          rho + std::log((a - 1.0) / a) - (log_delta + std::log(a)) / (a - 1.0);
      best = std::min(best, eps);
    }
    if (!std::isfinite(best))
      throw std::runtime_error("accountant produced non-finite epsilon");
    return best;
  }

  double epsilon_of(const MechanismSpec& mech, double delta) const {
    return epsilon_of(mech.noise_multiplier, delta, mech.steps,
                      mech.sampling_rate);
  }

  // Smallest noise multiplier meeting the budget, by bisection on
  // [sigma_min, sigma_max]. The returned value always satisfies
  // epsilon_of(sigma) <= budget.epsilon.
  double calibrate_sigma(const PrivacyBudget& budget, int64_t steps,
                         double kappa, double rel_tol = 1e-3) const {
    budget.validate();
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (!(kappa > 0.0 && kappa <= 1.0))
      throw std::invalid_argument("kappa must be in (0,1]");
    if (!(rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be > 0");

    double lo = kSigmaMin, hi = kSigmaMax;
    if (epsilon_of(lo, budget.delta, steps, kappa) <= budget.epsilon) return lo;
    if (epsilon_of(hi, budget.delta, steps, kappa) > budget.epsilon) {
      throw std::runtime_error(
          "calibrate_sigma: target epsilon " + std::to_string(budget.epsilon) +
          " infeasible within sigma <= " + std::to_string(kSigmaMax) +
          " (epsilon may sit below the order grid's conversion floor)");
    }
    while ((hi - lo) / hi > rel_tol) {
      const double mid = 0.5 * (lo + hi);
      if (epsilon_of(mid, budget.delta, steps, kappa) <= budget.epsilon)
        hi = mid;
      else
        lo = mid;
    }
    return hi;
  }

 private:
  static constexpr double kSigmaMin = 0.3;
  static constexpr double kSigmaMax = 1e4;

  std::vector<double> orders_;
};

}  // namespace nadpvi

#endif  // NADPVI_ACCOUNTANT_HPP_
