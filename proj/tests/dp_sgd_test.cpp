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

#include "nadpvi/dp_sgd.hpp"

#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "nadpvi/elbo.hpp"
#include "nadpvi/models.hpp"

namespace nadpvi {
namespace {

Dataset make_dataset(const Model& model, double theta, int n, uint64_t seed) {
  Rng rng(seed);
  Vector t(1);
  t << theta;
  return model.simulate(rng, t, n);
}

TEST(Clip, ShortVectorsPassThrough) {
  Vector g(2);
  g << 3.0, 4.0;
  const Vector out = clip(g, 10.0);
  EXPECT_EQ(out(0), 3.0);
  EXPECT_EQ(out(1), 4.0);
}

TEST(Clip, LongVectorsScaleToTheBall) {
  Vector g(2);
  g << 3.0, 4.0;  // norm 5
  const Vector out = clip(g, 1.0);
  EXPECT_NEAR(out(0), 0.6, 1e-15);
  EXPECT_NEAR(out(1), 0.8, 1e-15);
  EXPECT_NEAR(out.norm(), 1.0, 1e-15);
}

TEST(Clip, ZeroVectorUnchanged) {
  const Vector out = clip(Vector::Zero(3), 0.5);
  EXPECT_EQ(out.norm(), 0.0);
}

TEST(Clip, NormNeverExceedsBound) {
  Rng rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const Vector g = 50.0 * rng.normal_vector(6);
    EXPECT_LE(clip(g, 2.5).norm(), 2.5 + 1e-12);
  }
}

TEST(Clip, RejectsNonPositiveBound) {
  EXPECT_THROW(clip(Vector::Zero(2), 0.0), std::invalid_argument);
  EXPECT_THROW(clip(Vector::Zero(2), -1.0), std::invalid_argument);
}

TEST(LrHeuristic, PinnedValues) {
  // sqrt(2) / (1 * 1 * sqrt(2 * 1)) = 1.
  EXPECT_NEAR(lr_heuristic(1.0, 1.0, 1.0, 2, 1), 1.0, 1e-15);
  // sqrt(2) * 2 / sqrt(8) = 1.
  EXPECT_NEAR(lr_heuristic(2.0, 1.0, 1.0, 1, 8), 1.0, 1e-15);
  EXPECT_NEAR(lr_heuristic(1.0, 2.0, 0.5, 10000, 24), 2.8867513459481294e-03,
              1e-12);
}

TEST(LrHeuristic, RejectsInvalidArguments) {
  EXPECT_THROW(lr_heuristic(0.0, 1.0, 1.0, 1, 1), std::invalid_argument);
  EXPECT_THROW(lr_heuristic(1.0, 0.0, 1.0, 1, 1), std::invalid_argument);
  EXPECT_THROW(lr_heuristic(1.0, 1.0, 0.0, 1, 1), std::invalid_argument);
  EXPECT_THROW(lr_heuristic(1.0, 1.0, 1.0, 0, 1), std::invalid_argument);
  EXPECT_THROW(lr_heuristic(1.0, 1.0, 1.0, 1, 0), std::invalid_argument);
}

TEST(DpSgdConfig, DefaultsShapeAndValues) {
  const DpSgdConfig cfg = DpSgdConfig::defaults(3);
  ASSERT_EQ(cfg.precondition.size(), 6);
  EXPECT_EQ(cfg.precondition(0), 1.0);
  EXPECT_EQ(cfg.precondition(2), 1.0);
  EXPECT_EQ(cfg.precondition(3), 10.0);
  EXPECT_EQ(cfg.precondition(5), 10.0);
  ASSERT_EQ(cfg.init.size(), 6);
  EXPECT_EQ(cfg.init(0), 0.0);
  EXPECT_NEAR(softplus(cfg.init(4)), 1.0, 1e-12);
}

TEST(DpSgdConfig, ValidateRejectsBadFields) {
  DpSgdConfig cfg = DpSgdConfig::defaults(1);
  cfg.sampling_rate = 0.0;
  EXPECT_THROW(cfg.validate(2), std::invalid_argument);
  cfg = DpSgdConfig::defaults(1);
  cfg.sampling_rate = 1.5;
  EXPECT_THROW(cfg.validate(2), std::invalid_argument);
  cfg = DpSgdConfig::defaults(1);
  cfg.precondition(0) = 0.0;
  EXPECT_THROW(cfg.validate(2), std::invalid_argument);
  cfg = DpSgdConfig::defaults(1);
  EXPECT_THROW(cfg.validate(4), std::invalid_argument);  // wrong dim
}

// Reconstructs the whole run from the documented per-step draw order
// (ELBO draws, Poisson mask in dataset order, noise) and demands bitwise
// agreement, preconditioner included.
TEST(RunDpSgd, TraceMatchesManualReconstructionBitwise) {
  const auto model = make_gamma_exponential();
  const Dataset data = make_dataset(*model, 1.0, 12, 99);
  ElboConfig vi;
  vi.n_vi = 10;
  vi.dataset_size = data.size();

  DpSgdConfig cfg = DpSgdConfig::defaults(1, 10.0);
  cfg.clip_norm = 0.8;
  cfg.sampling_rate = 0.5;
  cfg.steps = 4;
  cfg.noise_multiplier = 1.3;
  cfg.lr_scale = 1.7;
  cfg.seed = 777;

  const DpSgdTrace trace = run_dpsgd(*model, data, vi, cfg);
  ASSERT_EQ(trace.params.rows(), 5);
  ASSERT_EQ(trace.noisy_grads.rows(), 4);
  ASSERT_EQ(trace.dim(), 2);

  const double lam_scalar =
      lr_heuristic(cfg.lr_scale, cfg.noise_multiplier, cfg.clip_norm, cfg.steps, 2);
  const Vector lambda = lam_scalar * cfg.precondition;
  for (int j = 0; j < 2; ++j) EXPECT_EQ(trace.effective_lr(j), lambda(j));

  const Vector inv_beta = cfg.precondition.cwiseInverse();
  const double noise_scale = cfg.noise_multiplier * cfg.clip_norm;
  Rng rng(cfg.seed);
  Vector phi = cfg.init;
  EXPECT_EQ(trace.params.row(0), phi.transpose());
  for (int t = 0; t < 4; ++t) {
    const Matrix eps = rng.normal_matrix(vi.n_vi, 1);
    const VariationalParams params = VariationalParams::from_flat(phi);
    const ElboStepContext ctx(params, *model, vi, eps);
    Vector sum = Vector::Zero(2);
    for (int i = 0; i < data.size(); ++i) {
      if (!rng.bernoulli(cfg.sampling_rate)) continue;
      const Vector g = -ctx.grad(data.example(i));
      sum += clip(cfg.precondition.cwiseProduct(g), cfg.clip_norm);
    }
    const Vector eta = rng.normal_vector(2);
    const Vector gtilde = inv_beta.cwiseProduct(sum + noise_scale * eta);
    phi -= lambda.cwiseProduct(gtilde);
    for (int j = 0; j < 2; ++j) {
      EXPECT_EQ(trace.noisy_grads(t, j), gtilde(j)) << "step " << t;
      EXPECT_EQ(trace.params(t + 1, j), phi(j)) << "step " << t;
    }
  }
}

TEST(RunDpSgd, BitwiseReproducibleAcrossRuns) {
  const auto model = make_beta_bernoulli();
  const Dataset data = make_dataset(*model, 0.3, 40, 5);
  ElboConfig vi;
  vi.dataset_size = data.size();
  DpSgdConfig cfg = DpSgdConfig::defaults(1);
  cfg.steps = 25;
  cfg.seed = 2024;

  const DpSgdTrace a = run_dpsgd(*model, data, vi, cfg);
  const DpSgdTrace b = run_dpsgd(*model, data, vi, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.noisy_grads, b.noisy_grads);
}

TEST(RunDpSgd, SeedChangesTheTrace) {
  const auto model = make_beta_bernoulli();
  const Dataset data = make_dataset(*model, 0.3, 40, 5);
  ElboConfig vi;
  vi.dataset_size = data.size();
  DpSgdConfig cfg = DpSgdConfig::defaults(1);
  cfg.steps = 5;
  cfg.seed = 1;
  const DpSgdTrace a = run_dpsgd(*model, data, vi, cfg);
  cfg.seed = 2;
  const DpSgdTrace b = run_dpsgd(*model, data, vi, cfg);
  EXPECT_NE(a.noisy_grads, b.noisy_grads);
}

// phi_{t+1} must equal phi_t - lambda .* gtilde_{t+1} exactly, so the
// iterates are recoverable from the gradient rows alone.
TEST(RunDpSgd, IteratesRecoverableFromGradients) {
  const auto model = make_gamma_exponential();
  const Dataset data = make_dataset(*model, 2.0, 30, 17);
  ElboConfig vi;
  vi.dataset_size = data.size();
  DpSgdConfig cfg = DpSgdConfig::defaults(1);
  cfg.steps = 20;
  cfg.seed = 8;

  const DpSgdTrace trace = run_dpsgd(*model, data, vi, cfg);
  Vector phi = cfg.init;
  for (int t = 0; t < trace.steps(); ++t) {
    phi -= trace.effective_lr.cwiseProduct(trace.noisy_grads.row(t).transpose());
    for (int j = 0; j < trace.dim(); ++j)
      EXPECT_EQ(trace.params(t + 1, j), phi(j));
  }
}

// Each example's preconditioned contribution is capped even when the raw
// likelihood gradients are orders of magnitude larger than the bound.
TEST(RunDpSgd, PerExampleContributionBoundedUnderLargeGradients) {
  const auto model = make_linear_regression_10d();
  Rng rng(4);
  const Vector theta_con = model->prior_sample(rng);
  const Dataset data = model->simulate(rng, theta_con, 25);

  VariationalParams params = VariationalParams::standard(12);
  params.u.setConstant(inv_softplus(0.05));  // small scales inflate gradients
  params.mu(11) = -4.0;
  ElboConfig vi;
  vi.dataset_size = data.size();
  const Matrix eps = rng.normal_matrix(vi.n_vi, 12);
  const ElboStepContext ctx(params, *model, vi, eps);

  const Vector beta = DpSgdConfig::default_precondition(12, 10.0);
  const double clip_norm = 1.0;
  bool saw_clipping = false;
  for (int i = 0; i < data.size(); ++i) {
    const Vector g = -ctx.grad(data.example(i));
    const Vector contrib = clip(beta.cwiseProduct(g), clip_norm);
    EXPECT_LE(contrib.norm(), clip_norm + 1e-12);
    if (beta.cwiseProduct(g).norm() > clip_norm) saw_clipping = true;
  }
  EXPECT_TRUE(saw_clipping);
}

TEST(RunDpSgd, EmptyMinibatchesStillProduceNoisySteps) {
  const auto model = make_gamma_exponential();
  const Dataset data = make_dataset(*model, 1.0, 3, 21);
  ElboConfig vi;
  vi.dataset_size = data.size();
  DpSgdConfig cfg = DpSgdConfig::defaults(1);
  cfg.sampling_rate = 0.01;  // batches are almost always empty
  cfg.steps = 50;
  cfg.seed = 3;

  const DpSgdTrace trace = run_dpsgd(*model, data, vi, cfg);
  EXPECT_TRUE(all_finite(trace.params));
  EXPECT_TRUE(all_finite(trace.noisy_grads));
  // Pure-noise steps still move the iterate.
  for (int t = 0; t < trace.steps(); ++t)
    EXPECT_GT(trace.noisy_grads.row(t).norm(), 0.0);
}

// With a sane desk-scale configuration the optimizer should improve the
// objective from the standard start; evaluated with shared draws.
TEST(RunDpSgd, ImprovesElboOnExponentialModel) {
  const auto model = make_gamma_exponential();
  const Dataset data = make_dataset(*model, 1.5, 500, 42);
  ElboConfig vi;
  vi.dataset_size = data.size();
  DpSgdConfig cfg = DpSgdConfig::defaults(1);
  cfg.clip_norm = 2.0;
  cfg.sampling_rate = 0.2;
  cfg.steps = 400;
  cfg.noise_multiplier = 2.0;
  cfg.seed = 12;

  const DpSgdTrace trace = run_dpsgd(*model, data, vi, cfg);
  Rng eval_rng(1000);
  ElboConfig eval_cfg = vi;
  eval_cfg.n_vi = 200;
  const Matrix eval_eps = eval_rng.normal_matrix(eval_cfg.n_vi, 1);
  const VariationalParams start = VariationalParams::from_flat(cfg.init);
  const VariationalParams end =
      VariationalParams::from_flat(trace.params.row(trace.steps()).transpose());
  const double before = full_elbo(start, *model, data, eval_cfg, eval_eps);
  const double after = full_elbo(end, *model, data, eval_cfg, eval_eps);
  EXPECT_GT(after, before);
  // Posterior concentration: the fitted scale shrinks well below the start.
  EXPECT_LT(end.scale()(0), 0.5);
}

TEST(RunDpSgd, DivergenceAbortsWithStepIndex) {
  const auto model = make_gamma_exponential();
  Matrix obs(1, 100);
  obs.setConstant(5.0);
  const Dataset data{obs};
  ElboConfig vi;
  vi.dataset_size = data.size();
  DpSgdConfig cfg = DpSgdConfig::defaults(1);
  cfg.sampling_rate = 1.0;
  cfg.steps = 3;
  cfg.lr_scale = 1e307;  // overflows the first update
  cfg.seed = 0;

  try {
    run_dpsgd(*model, data, vi, cfg);
    FAIL() << "expected divergence";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

TEST(RunDpSgd, RejectsDatasetSizeMismatch) {
  const auto model = make_gamma_exponential();
  const Dataset data = make_dataset(*model, 1.0, 10, 1);
  ElboConfig vi;
  vi.dataset_size = 11;
  const DpSgdConfig cfg = DpSgdConfig::defaults(1);
  EXPECT_THROW(run_dpsgd(*model, data, vi, cfg), std::invalid_argument);
}

}  // namespace
}  // namespace nadpvi
