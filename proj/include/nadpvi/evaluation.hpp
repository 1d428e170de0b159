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
// Coverage testing for approximate posteriors: credible regions are balls
// around reference points, and a correct posterior covers the truth at
// every credible level. Also: RMSE summaries and predictive calibration
// curves for classifiers.

#ifndef NADPVI_EVALUATION_HPP_
#define NADPVI_EVALUATION_HPP_

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nadpvi/math.hpp"
#include "nadpvi/model.hpp"
#include "nadpvi/rng.hpp"

namespace nadpvi {

enum class ReferenceSampler { kPrior, kUniformBox };

inline std::string to_string(ReferenceSampler s) {
  return s == ReferenceSampler::kPrior ? "prior" : "uniform_box";
}

struct TarpConfig {
  int repetitions = 100;
  int posterior_samples = 1000;
  Vector alpha_grid = default_alpha_grid();
  ReferenceSampler reference_sampler = ReferenceSampler::kPrior;
  uint64_t seed = 0;
  int data_size = 1000;  // N for the simulated dataset of each repetition
  double max_failure_rate = 0.05;
  bool marginals = false;
  int workers = 1;

  static Vector default_alpha_grid() {
    Vector grid(19);
    for (int i = 0; i < 19; ++i) grid(i) = 0.05 * (i + 1);
    return grid;
  }

  void validate() const {
    if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
    if (posterior_samples < 1)
      throw std::invalid_argument("posterior_samples must be >= 1");
    if (data_size < 1) throw std::invalid_argument("data_size must be >= 1");
    if (alpha_grid.size() < 1) throw std::invalid_argument("empty alpha grid");
    for (int i = 0; i < alpha_grid.size(); ++i) {
      if (!(alpha_grid(i) > 0.0 && alpha_grid(i) < 1.0))
        throw std::invalid_argument("alpha grid values must be in (0,1)");
      if (i > 0 && !(alpha_grid(i) > alpha_grid(i - 1)))
        throw std::invalid_argument("alpha grid must be strictly increasing");
    }
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  }
};

struct CoverageReport {
  Vector alpha;
  Vector coverage;
  Vector error;  // coverage - (1 - alpha)
  double rmse = 0.0;
  int repetitions = 0;
  int failures = 0;
  std::string ref_sampler;
  std::vector<CoverageReport> marginal;  // per dimension when requested
};

// sqrt(mean over the grid of (C(alpha) - (1 - alpha))^2).
inline double coverage_rmse(const CoverageReport& report) {
  if (report.alpha.size() < 1) throw std::invalid_argument("empty alpha grid");
  double acc = 0.0;
  for (int i = 0; i < report.alpha.size(); ++i) {
    const double err = report.coverage(i) - (1.0 - report.alpha(i));
    acc += err * err;
  }
  return std::sqrt(acc / report.alpha.size());
}

// Posterior sampler under test: must return posterior_samples x n
// unconstrained draws, deterministically in the given seed.
using PosteriorPipeline =
    std::function<Matrix(const Dataset& data, uint64_t seed, int n_samples)>;

// Several posteriors computed from the same dataset in one call, so
// baselines can share expensive intermediate state (e.g. one optimizer
// trace) with the method under test. Must return a fixed-length vector.
using MultiPosteriorPipeline = std::function<std::vector<Matrix>(
    const Dataset& data, uint64_t seed, int n_samples)>;

namespace detail {

// Seed-derivation tags: the per-repetition stream (truth, data, reference)
// and the seed handed to the pipeline. Exposed so callers can replay a
// specific repetition outside the harness.
constexpr uint64_t kTarpRepTag = 0x7a5a;
constexpr uint64_t kTarpPipelineTag = 0x9c3c;

inline void fill_coverage(const Vector& alpha, const std::vector<double>& fs,
                          CoverageReport* report) {
  const int n_alpha = static_cast<int>(alpha.size());
  report->alpha = alpha;
  report->coverage = Vector::Zero(n_alpha);
  for (const double f : fs)
    for (int i = 0; i < n_alpha; ++i)
      if (f < 1.0 - alpha(i)) report->coverage(i) += 1.0;
  report->coverage /= static_cast<double>(fs.size());
  report->error.resize(n_alpha);
  for (int i = 0; i < n_alpha; ++i)
    report->error(i) = report->coverage(i) - (1.0 - alpha(i));
  report->rmse = coverage_rmse(*report);
}

}  // namespace detail

// For each repetition: draw a ground truth from the prior, simulate a
// dataset, run the pipeline, and record per posterior the fraction of its
// samples closer to a reference point than the truth is. Coverage at level
// 1 - alpha is the fraction of repetitions with f < 1 - alpha. Distances
// are Euclidean in the unconstrained parameterization. All members of a
// repetition share the truth, the dataset, and the reference point, so the
// resulting reports are directly comparable.
inline std::vector<CoverageReport> tarp_coverage_multi(
    const Model& model, const MultiPosteriorPipeline& pipeline, int n_members,
    const TarpConfig& cfg) {
  cfg.validate();
  if (n_members < 1) throw std::invalid_argument("n_members must be >= 1");
  const int n = model.param_dim();
  const int k_reps = cfg.repetitions;

  // fs[m][k] = -1 marks repetition k failed (shared across members).
  std::vector<std::vector<double>> fs(
      n_members, std::vector<double>(k_reps, -1.0));
  std::vector<std::vector<Vector>> fs_marg(n_members,
                                           std::vector<Vector>(k_reps));
  std::atomic<int> next{0};
  std::atomic<int> failures{0};
  std::mutex error_mutex;
  std::string first_error;

  const auto worker = [&]() {
    for (;;) {
      const int k = next.fetch_add(1);
      if (k >= k_reps) return;
      try {
        Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(k), detail::kTarpRepTag));
        const Vector theta_con = model.prior_sample(rng);
        const Dataset data = model.simulate(rng, theta_con, cfg.data_size);
        const Vector theta_unc = model.transform().forward(theta_con);
        const std::vector<Matrix> members =
            pipeline(data,
                     derive_seed(cfg.seed, static_cast<uint64_t>(k),
                                 detail::kTarpPipelineTag),
                     cfg.posterior_samples);
        if (static_cast<int>(members.size()) != n_members)
          throw std::runtime_error("pipeline returned wrong member count");
        for (const Matrix& samples : members) {
          if (samples.rows() != cfg.posterior_samples || samples.cols() != n)
            throw std::runtime_error("pipeline returned wrong sample shape");
          if (!all_finite(samples))
            throw std::runtime_error("pipeline returned non-finite samples");
        }

        Vector ref(n);
        if (cfg.reference_sampler == ReferenceSampler::kPrior) {
          ref = model.transform().forward(model.prior_sample(rng));
        } else {
          // Bounding box of all members' samples, so the reference is fair
          // to each of them.
          Vector lo = members[0].colwise().minCoeff().transpose();
          Vector hi = members[0].colwise().maxCoeff().transpose();
          for (int m = 1; m < n_members; ++m) {
            lo = lo.cwiseMin(members[m].colwise().minCoeff().transpose());
            hi = hi.cwiseMax(members[m].colwise().maxCoeff().transpose());
          }
          for (int j = 0; j < n; ++j) ref(j) = rng.uniform(lo(j), hi(j));
        }

        const double true_dist = (theta_unc - ref).norm();
        for (int m = 0; m < n_members; ++m) {
          const Matrix& samples = members[m];
          int closer = 0;
          for (int s = 0; s < cfg.posterior_samples; ++s)
            if ((samples.row(s).transpose() - ref).norm() < true_dist)
              ++closer;
          fs[m][k] = static_cast<double>(closer) / cfg.posterior_samples;

          if (cfg.marginals) {
            Vector fm = Vector::Zero(n);
            for (int j = 0; j < n; ++j) {
              const double td = std::abs(theta_unc(j) - ref(j));
              int cj = 0;
              for (int s = 0; s < cfg.posterior_samples; ++s)
                if (std::abs(samples(s, j) - ref(j)) < td) ++cj;
              fm(j) = static_cast<double>(cj) / cfg.posterior_samples;
            }
            fs_marg[m][k] = std::move(fm);
          }
        }
      } catch (const std::exception& e) {
        failures.fetch_add(1);
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };

  if (cfg.workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const int failed = failures.load();
  if (static_cast<double>(failed) / k_reps > cfg.max_failure_rate)
    throw std::runtime_error("TARP repetition failure rate above " +
                             std::to_string(cfg.max_failure_rate) + ": " +
                             std::to_string(failed) + "/" +
                             std::to_string(k_reps) + " (first: " +
                             first_error + ")");

  std::vector<CoverageReport> reports(n_members);
  for (int m = 0; m < n_members; ++m) {
    std::vector<double> ok_fs;
    ok_fs.reserve(k_reps);
    for (const double f : fs[m])
      if (f >= 0.0) ok_fs.push_back(f);
    if (ok_fs.empty()) throw std::runtime_error("all TARP repetitions failed");

    CoverageReport& report = reports[m];
    detail::fill_coverage(cfg.alpha_grid, ok_fs, &report);
    report.repetitions = k_reps;
    report.failures = failed;
    report.ref_sampler = to_string(cfg.reference_sampler);

    if (cfg.marginals) {
      report.marginal.resize(n);
      for (int j = 0; j < n; ++j) {
        std::vector<double> fj;
        fj.reserve(k_reps);
        for (int k = 0; k < k_reps; ++k)
          if (fs[m][k] >= 0.0) fj.push_back(fs_marg[m][k](j));
        detail::fill_coverage(cfg.alpha_grid, fj, &report.marginal[j]);
        report.marginal[j].repetitions = k_reps;
        report.marginal[j].failures = failed;
        report.marginal[j].ref_sampler = report.ref_sampler;
      }
    }
  }
  return reports;
}

inline CoverageReport tarp_coverage(const Model& model,
                                    const PosteriorPipeline& pipeline,
                                    const TarpConfig& cfg) {
  const MultiPosteriorPipeline wrapped =
      [&pipeline](const Dataset& data, uint64_t seed, int n_samples) {
        return std::vector<Matrix>{pipeline(data, seed, n_samples)};
      };
  return tarp_coverage_multi(model, wrapped, 1, cfg)[0];
}

struct CalibrationReport {
  Vector bin_lo;
  Vector bin_hi;
  Vector mean_pred;  // NaN marks an empty bin
  Vector frac_pos;   // NaN marks an empty bin
  std::vector<int> count;
  // Count-weighted rmse of the per-bin calibration errors
  // (frac_pos - mean_pred): the reliability term of the binned Brier
  // decomposition. Zero for a perfectly calibrated predictor even when
  // the labels themselves are noisy.
  double rmse = 0.0;
};

// Equal-width reliability bins on predicted probability plus the rmse of
// the per-bin calibration errors.
inline CalibrationReport calibration_curve(const Vector& predictions,
                                           const std::vector<int>& labels,
                                           int bins) {
  if (bins < 1) throw std::invalid_argument("bins must be >= 1");
  const int n = static_cast<int>(predictions.size());
  if (n != static_cast<int>(labels.size()) || n == 0)
    throw std::invalid_argument("predictions/labels length mismatch or empty");

  CalibrationReport report;
  report.bin_lo.resize(bins);
  report.bin_hi.resize(bins);
  report.mean_pred = Vector::Zero(bins);
  report.frac_pos = Vector::Zero(bins);
  report.count.assign(bins, 0);
  for (int b = 0; b < bins; ++b) {
    report.bin_lo(b) = static_cast<double>(b) / bins;
    report.bin_hi(b) = static_cast<double>(b + 1) / bins;
  }

  for (int i = 0; i < n; ++i) {
    const double p = predictions(i);
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("predictions must lie in [0,1]");
    if (labels[i] != 0 && labels[i] != 1)
      throw std::invalid_argument("labels must be 0/1");
    const int b = std::min(static_cast<int>(p * bins), bins - 1);
    report.mean_pred(b) += p;
    report.frac_pos(b) += labels[i];
    ++report.count[b];
  }
  double weighted_sq = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (report.count[b] == 0) {
      report.mean_pred(b) = std::numeric_limits<double>::quiet_NaN();
      report.frac_pos(b) = std::numeric_limits<double>::quiet_NaN();
    } else {
      report.mean_pred(b) /= report.count[b];
      report.frac_pos(b) /= report.count[b];
      const double err = report.frac_pos(b) - report.mean_pred(b);
      weighted_sq += report.count[b] * err * err;
    }
  }
  report.rmse = std::sqrt(weighted_sq / n);
  return report;
}

}  // namespace nadpvi

#endif  // NADPVI_EVALUATION_HPP_
