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

#ifndef NADPVI_RNG_HPP_
#define NADPVI_RNG_HPP_

#include <cstdint>
#include <random>
#include <span>

#include "nadpvi/math.hpp"

namespace nadpvi {

// SplitMix64 finalizer, used to derive independent stream seeds from a master
// seed plus structural indices (repetition, worker, stage). Scheduling must
// never influence which seed a repetition gets.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0,
                            uint64_t c = 0) {
  uint64_t h = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return h;
}

// Seeded random stream. Distribution objects are constructed per call so the
// sequence of variates is a pure function of the call sequence and the seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  Vector normal_vector(int n) {
    Vector out(n);
    for (int i = 0; i < n; ++i) out[i] = normal();
    return out;
  }

  Matrix normal_matrix(int rows, int cols) {
    Matrix out(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) out(i, j) = normal();
    return out;
  }

  double exponential(double rate) {
    return std::exponential_distribution<double>(rate)(gen_);
  }

  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(gen_);
  }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  double inverse_gamma(double shape, double rate) {
    return rate / gamma(shape, 1.0);
  }

  Vector dirichlet(const Vector& alpha) {
    Vector out(alpha.size());
    for (int i = 0; i < alpha.size(); ++i) out[i] = gamma(alpha[i], 1.0);
    return out / out.sum();
  }

  bool bernoulli(double p) { return uniform() < p; }

  int categorical(const Vector& probs) {
    double u = uniform();
    for (int i = 0; i < probs.size(); ++i) {
      u -= probs[i];
      if (u < 0.0) return i;
    }
    return static_cast<int>(probs.size()) - 1;
  }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(gen_));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace nadpvi

#endif  // NADPVI_RNG_HPP_
