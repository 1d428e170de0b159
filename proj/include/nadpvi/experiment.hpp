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
// Config-driven experiment runner. Composes the privacy accountant, the
// DP-SGD optimizer, noise-aware post-processing, and the evaluation
// harness; writes a manifest plus coverage or calibration CSVs. The naive
// last-iterate baseline always consumes the identical optimizer trace as
// the noise-aware posterior, so the comparison isolates post-processing.

#ifndef NADPVI_EXPERIMENT_HPP_
#define NADPVI_EXPERIMENT_HPP_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nadpvi/accountant.hpp"
#include "nadpvi/adult.hpp"
#include "nadpvi/config.hpp"
#include "nadpvi/csv.hpp"
#include "nadpvi/dp_sgd.hpp"
#include "nadpvi/evaluation.hpp"
#include "nadpvi/hmc.hpp"
#include "nadpvi/models.hpp"
#include "nadpvi/post_process.hpp"
#include "nadpvi/posterior.hpp"
#include "nadpvi/version.hpp"

namespace nadpvi {

enum class ExperimentKind {
  kExpfamM1,
  kExpfamM2,
  kExpfamM3,
  kLinreg10d,
  kAdultLogreg,
  kCustom,
};

enum class PostMethod { kLaplace, kHmc };
enum class EvalMode { kTarp, kCalibration };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kExpfamM1: return "expfam_m1";
    case ExperimentKind::kExpfamM2: return "expfam_m2";
    case ExperimentKind::kExpfamM3: return "expfam_m3";
    case ExperimentKind::kLinreg10d: return "linreg10d";
    case ExperimentKind::kAdultLogreg: return "adult_logreg";
    case ExperimentKind::kCustom: return "custom";
  }
  return "unknown";
}

inline std::string to_string(PostMethod m) {
  return m == PostMethod::kLaplace ? "laplace" : "hmc";
}

inline std::string to_string(EvalMode m) {
  return m == EvalMode::kTarp ? "tarp" : "calibration";
}

// Every configuration knob, resolved. Defaults match the desk-scale
// protocol; presets override what each experiment family needs.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kExpfamM1;

  // custom kind only
  std::string model_kind = "logistic_regression";
  int features = 5;
  bool bias = true;

  double epsilon = 1.0;
  double delta = 1e-5;

  int data_n = 1000;            // synthetic dataset size
  std::string train_path;       // adult_logreg only
  std::string test_path;        // adult_logreg only

  int64_t steps = 2000;
  double kappa = 0.1;
  double clip_norm = 1.0;
  double beta_u = 10.0;
  double lambda_c = 1.0;
  int n_vi = 10;

  PostMethod method = PostMethod::kLaplace;
  int warmup = 500;
  int draws = 100;
  int burn_in = 0;  // 0 resolves to steps / 2

  EvalMode eval_mode = EvalMode::kTarp;
  int tarp_repetitions = 1;   // independent coverage studies
  int repetitions = 100;      // TARP repetitions per study, or seeds
  int posterior_samples = 1000;
  int test_size = 1000;       // calibration holdout (synthetic)
  int bins = 10;
  int predictive_draws = 200;
  double max_failure_rate = 0.05;

  std::string out_dir = "out";
  bool save_trace = false;
  bool save_posterior = false;

  uint64_t seed = 0;
  int workers = 1;

  int resolved_burn_in() const {
    return burn_in > 0 ? burn_in : static_cast<int>(steps / 2);
  }

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("privacy.epsilon must be > 0");
    if (!(delta > 0.0 && delta < 1.0))
      throw ConfigError("privacy.delta must be in (0,1)");
    if (kind != ExperimentKind::kAdultLogreg && data_n < 1)
      throw ConfigError("data.n must be >= 1");
    if (kind == ExperimentKind::kAdultLogreg &&
        (train_path.empty() || test_path.empty()))
      throw ConfigError(
          "adult_logreg requires data.train_path and data.test_path");
    if (kind == ExperimentKind::kCustom &&
        model_kind != "logistic_regression")
      throw ConfigError("model.kind must be logistic_regression");
    if (steps < 2) throw ConfigError("dp_sgd.steps must be >= 2");
    if (!(kappa > 0.0 && kappa <= 1.0))
      throw ConfigError("dp_sgd.kappa must be in (0,1]");
    if (!(clip_norm > 0.0)) throw ConfigError("dp_sgd.clip_norm must be > 0");
    if (!(beta_u > 0.0)) throw ConfigError("dp_sgd.beta_u must be > 0");
    if (!(lambda_c > 0.0)) throw ConfigError("dp_sgd.lambda_c must be > 0");
    if (n_vi < 1) throw ConfigError("dp_sgd.n_vi must be >= 1");
    if (warmup < 1) throw ConfigError("post.warmup must be >= 1");
    if (draws < 1) throw ConfigError("post.draws must be >= 1");
    if (burn_in < 0 || burn_in >= steps)
      throw ConfigError("post.burn_in must lie in [0, steps)");
    if (tarp_repetitions < 1)
      throw ConfigError("evaluation.tarp_repetitions must be >= 1");
    if (repetitions < 1) throw ConfigError("evaluation.repetitions must be >= 1");
    if (posterior_samples < 1)
      throw ConfigError("evaluation.posterior_samples must be >= 1");
    if (test_size < 1) throw ConfigError("evaluation.test_size must be >= 1");
    if (bins < 1) throw ConfigError("evaluation.bins must be >= 1");
    if (predictive_draws < 1)
      throw ConfigError("evaluation.predictive_draws must be >= 1");
    if (!(max_failure_rate >= 0.0 && max_failure_rate <= 1.0))
      throw ConfigError("evaluation.max_failure_rate must be in [0,1]");
    if (out_dir.empty()) throw ConfigError("output.dir must be set");
    if (workers < 1) throw ConfigError("run.workers must be >= 1");
    if (eval_mode == EvalMode::kTarp && kind == ExperimentKind::kAdultLogreg)
      throw ConfigError(
          "adult_logreg has no generative ground truth; use calibration");
    if (kind == ExperimentKind::kAdultLogreg && (save_trace || save_posterior))
      throw ConfigError(
          "trace/posterior dumps are not supported for adult_logreg");
  }
};

inline ExperimentKind parse_experiment_kind(const std::string& name) {
  if (name == "expfam_m1") return ExperimentKind::kExpfamM1;
  if (name == "expfam_m2") return ExperimentKind::kExpfamM2;
  if (name == "expfam_m3") return ExperimentKind::kExpfamM3;
  if (name == "linreg10d") return ExperimentKind::kLinreg10d;
  if (name == "adult_logreg") return ExperimentKind::kAdultLogreg;
  if (name == "custom") return ExperimentKind::kCustom;
  throw ConfigError("unknown experiment.kind '" + name +
                    "' (expected expfam_m1|expfam_m2|expfam_m3|linreg10d|"
                    "adult_logreg|custom)");
}

// Extracts and validates a full experiment configuration; rejects keys it
// does not recognize so typos cannot silently fall back to defaults.
inline ExperimentConfig experiment_config_from(const ParsedConfig& parsed) {
  ExperimentConfig cfg;
  cfg.kind = parse_experiment_kind(parsed.get_string("experiment.kind"));

  if (cfg.kind == ExperimentKind::kCustom) {
    cfg.model_kind = parsed.get_string("model.kind", "logistic_regression");
    cfg.features = static_cast<int>(parsed.get_int("model.features", 5));
    cfg.bias = parsed.get_bool("model.bias", true);
  }

  cfg.epsilon = parsed.get_double("privacy.epsilon");
  cfg.delta = parsed.get_double("privacy.delta", 1e-5);

  if (cfg.kind == ExperimentKind::kAdultLogreg) {
    cfg.train_path = parsed.get_string("data.train_path");
    cfg.test_path = parsed.get_string("data.test_path");
  } else {
    cfg.data_n = static_cast<int>(parsed.get_int("data.n"));
  }

  cfg.steps = parsed.get_int("dp_sgd.steps");
  cfg.kappa = parsed.get_double("dp_sgd.kappa", 0.1);
  cfg.clip_norm = parsed.get_double("dp_sgd.clip_norm");
  cfg.beta_u = parsed.get_double("dp_sgd.beta_u", 10.0);
  cfg.lambda_c = parsed.get_double("dp_sgd.lambda_c", 1.0);
  cfg.n_vi = static_cast<int>(parsed.get_int("dp_sgd.n_vi", 10));

  const std::string method = parsed.get_string("post.method", "laplace");
  if (method == "laplace") cfg.method = PostMethod::kLaplace;
  else if (method == "hmc") cfg.method = PostMethod::kHmc;
  else throw ConfigError("post.method must be laplace or hmc, got '" +
                         method + "'");
  cfg.warmup = static_cast<int>(parsed.get_int("post.warmup", 500));
  cfg.draws = static_cast<int>(parsed.get_int("post.draws", 100));
  cfg.burn_in = static_cast<int>(parsed.get_int("post.burn_in", 0));

  const bool default_tarp = cfg.kind != ExperimentKind::kAdultLogreg &&
                            cfg.kind != ExperimentKind::kCustom;
  const std::string mode = parsed.get_string(
      "evaluation.mode", default_tarp ? "tarp" : "calibration");
  if (mode == "tarp") cfg.eval_mode = EvalMode::kTarp;
  else if (mode == "calibration") cfg.eval_mode = EvalMode::kCalibration;
  else throw ConfigError("evaluation.mode must be tarp or calibration, got '" +
                         mode + "'");
  cfg.tarp_repetitions =
      static_cast<int>(parsed.get_int("evaluation.tarp_repetitions", 1));
  cfg.repetitions =
      static_cast<int>(parsed.get_int("evaluation.repetitions", 100));
  cfg.posterior_samples =
      static_cast<int>(parsed.get_int("evaluation.posterior_samples", 1000));
  cfg.test_size = static_cast<int>(parsed.get_int("evaluation.test_size", 1000));
  cfg.bins = static_cast<int>(parsed.get_int("evaluation.bins", 10));
  cfg.predictive_draws =
      static_cast<int>(parsed.get_int("evaluation.predictive_draws", 200));
  cfg.max_failure_rate =
      parsed.get_double("evaluation.max_failure_rate", 0.05);

  cfg.out_dir = parsed.get_string("output.dir", "out");
  cfg.save_trace = parsed.get_bool("output.save_trace", false);
  cfg.save_posterior = parsed.get_bool("output.save_posterior", false);

  cfg.seed = parsed.get_uint("run.seed", 0);
  cfg.workers = static_cast<int>(parsed.get_int("run.workers", 1));

  parsed.reject_unused();
  cfg.validate();
  return cfg;
}

// Generated key reference for the config format; printed by the CLI.
inline std::string experiment_config_reference() {
  struct Row {
    const char* key;
    const char* type;
    const char* fallback;
    const char* meaning;
  };
  static const Row rows[] = {
      {"experiment.kind", "string", "(required)",
       "expfam_m1|expfam_m2|expfam_m3|linreg10d|adult_logreg|custom"},
      {"model.kind", "string", "logistic_regression",
       "custom only: model family"},
      {"model.features", "int", "5", "custom only: covariate count"},
      {"model.bias", "bool", "true", "custom only: include a bias weight"},
      {"privacy.epsilon", "float", "(required)", "DP epsilon budget"},
      {"privacy.delta", "float", "1e-5", "DP delta budget"},
      {"data.n", "int", "(required)",
       "synthetic dataset size per repetition (non-adult kinds)"},
      {"data.train_path", "path", "(required)",
       "adult_logreg only: ingested training CSV"},
      {"data.test_path", "path", "(required)",
       "adult_logreg only: ingested test CSV"},
      {"dp_sgd.steps", "int", "(required)", "optimizer steps T"},
      {"dp_sgd.kappa", "float", "0.1", "Poisson subsampling rate"},
      {"dp_sgd.clip_norm", "float", "(required)",
       "per-example gradient clipping threshold C"},
      {"dp_sgd.beta_u", "float", "10",
       "preconditioning factor on scale coordinates"},
      {"dp_sgd.lambda_c", "float", "1", "learning-rate heuristic constant"},
      {"dp_sgd.n_vi", "int", "10", "Monte Carlo draws per gradient"},
      {"post.method", "string", "laplace", "laplace|hmc"},
      {"post.warmup", "int", "500", "hmc adaptation steps"},
      {"post.draws", "int", "100", "posterior draws M"},
      {"post.burn_in", "int", "0 (= steps/2)",
       "trace iterations discarded before post-processing"},
      {"evaluation.mode", "string", "by kind", "tarp|calibration"},
      {"evaluation.tarp_repetitions", "int", "1",
       "independent coverage studies"},
      {"evaluation.repetitions", "int", "100",
       "TARP repetitions per study, or calibration seeds"},
      {"evaluation.posterior_samples", "int", "1000",
       "posterior samples per repetition"},
      {"evaluation.test_size", "int", "1000",
       "calibration holdout size (synthetic kinds)"},
      {"evaluation.bins", "int", "10", "calibration bins"},
      {"evaluation.predictive_draws", "int", "200",
       "Monte Carlo draws per predictive probability"},
      {"evaluation.max_failure_rate", "float", "0.05",
       "tolerated fraction of failed repetitions"},
      {"output.dir", "path", "out", "artifact directory"},
      {"output.save_trace", "bool", "false",
       "dump the first repetition's optimizer trace"},
      {"output.save_posterior", "bool", "false",
       "dump the first repetition's posterior draws"},
      {"run.seed", "int", "0", "master seed"},
      {"run.workers", "int", "1", "repetition worker threads"},
  };
  std::ostringstream out;
  out << "Configuration keys (flat key = value, grouped by [section]):\n\n";
  for (const Row& r : rows) {
    out << "  " << r.key << "\n    type: " << r.type
        << "  default: " << r.fallback << "\n    " << r.meaning << "\n";
  }
  return out.str();
}

struct RunManifest {
  ExperimentConfig config;
  double sigma_dp = 0.0;
  double effective_lr_base = 0.0;  // scalar lambda before preconditioning
  std::string library_version = NADPVI_VERSION_STRING;
  std::vector<uint64_t> repetition_seeds;

  // Valid config-format text; computed values live in [run_info].
  std::string to_text() const {
    std::ostringstream out;
    const ExperimentConfig& c = config;
    out << "[experiment]\nkind = " << to_string(c.kind) << "\n";
    if (c.kind == ExperimentKind::kCustom) {
      out << "\n[model]\nkind = " << c.model_kind
          << "\nfeatures = " << c.features
          << "\nbias = " << (c.bias ? "true" : "false") << "\n";
    }
    out << "\n[privacy]\nepsilon = " << format_double(c.epsilon)
        << "\ndelta = " << format_double(c.delta) << "\n";
    out << "\n[data]\n";
    if (c.kind == ExperimentKind::kAdultLogreg) {
      out << "train_path = " << c.train_path
          << "\ntest_path = " << c.test_path << "\n";
    } else {
      out << "n = " << c.data_n << "\n";
    }
    out << "\n[dp_sgd]\nsteps = " << c.steps
        << "\nkappa = " << format_double(c.kappa)
        << "\nclip_norm = " << format_double(c.clip_norm)
        << "\nbeta_u = " << format_double(c.beta_u)
        << "\nlambda_c = " << format_double(c.lambda_c)
        << "\nn_vi = " << c.n_vi << "\n";
    out << "\n[post]\nmethod = " << to_string(c.method)
        << "\nwarmup = " << c.warmup << "\ndraws = " << c.draws
        << "\nburn_in = " << c.burn_in << "\n";
    out << "\n[evaluation]\nmode = " << to_string(c.eval_mode)
        << "\ntarp_repetitions = " << c.tarp_repetitions
        << "\nrepetitions = " << c.repetitions
        << "\nposterior_samples = " << c.posterior_samples
        << "\ntest_size = " << c.test_size << "\nbins = " << c.bins
        << "\npredictive_draws = " << c.predictive_draws
        << "\nmax_failure_rate = " << format_double(c.max_failure_rate)
        << "\n";
    out << "\n[output]\ndir = " << c.out_dir
        << "\nsave_trace = " << (c.save_trace ? "true" : "false")
        << "\nsave_posterior = " << (c.save_posterior ? "true" : "false")
        << "\n";
    out << "\n[run]\nseed = " << c.seed << "\nworkers = " << c.workers
        << "\n";
    out << "\n[run_info]\nlibrary_version = " << library_version
        << "\nsigma_dp = " << format_double(sigma_dp)
        << "\neffective_lr_base = " << format_double(effective_lr_base)
        << "\nresolved_burn_in = " << c.resolved_burn_in()
        << "\ntimings_file = timings.txt\n";
    out << "\n[seeds]\n";
    for (std::size_t r = 0; r < repetition_seeds.size(); ++r)
      out << "rep_" << r << " = " << repetition_seeds[r] << "\n";
    return out.str();
  }
};

struct ExperimentResult {
  RunManifest manifest;
  // TARP mode: one report pair per coverage study.
  std::vector<CoverageReport> na_reports;
  std::vector<CoverageReport> naive_reports;
  // Calibration mode: one report pair per seed.
  std::vector<CalibrationReport> na_calibrations;
  std::vector<CalibrationReport> naive_calibrations;
  // Original repetition index behind each report pair; calibration seeds
  // that failed within the tolerated rate are absent.
  std::vector<int> repetition_ids;
  std::vector<double> rmse_na;
  std::vector<double> rmse_naive;
  std::vector<std::string> written_files;
};

namespace detail {

constexpr uint64_t kTagOuterRep = 0x0e17;
constexpr uint64_t kTagCalRep = 0x0ca1;
constexpr uint64_t kTagCalData = 0x0da7;
constexpr uint64_t kTagDpSgd = 0x0d50;
constexpr uint64_t kTagFit = 0x0f17;
constexpr uint64_t kTagSampleNa = 0x05a0;
constexpr uint64_t kTagSampleNaive = 0x05a1;
constexpr uint64_t kTagPredictNa = 0x0b00;
constexpr uint64_t kTagPredictNaive = 0x0b01;

inline ModelPtr model_for(const ExperimentConfig& cfg, int adult_features) {
  switch (cfg.kind) {
    case ExperimentKind::kExpfamM1: return make_gamma_exponential();
    case ExperimentKind::kExpfamM2: return make_beta_bernoulli();
    case ExperimentKind::kExpfamM3: return make_dirichlet_categorical();
    case ExperimentKind::kLinreg10d: return make_linear_regression_10d();
    case ExperimentKind::kAdultLogreg:
      return make_logistic_regression(adult_features, true);
    case ExperimentKind::kCustom:
      return make_logistic_regression(cfg.features, cfg.bias);
  }
  throw std::logic_error("unreachable experiment kind");
}

struct TracePosterior {
  DpSgdTrace trace;
  PosteriorSamples samples;
  NoiseAwarePosterior na;
  NoiseAwarePosterior naive;
};

// One end-to-end fit: DP-SGD on the dataset, then the noise-aware
// posterior and the last-iterate baseline from the identical trace.
inline TracePosterior fit_both(const Model& model, const Dataset& data,
                               const ExperimentConfig& cfg, double sigma_dp,
                               uint64_t seed) {
  DpSgdConfig dp = DpSgdConfig::defaults(model.param_dim(), cfg.beta_u);
  dp.clip_norm = cfg.clip_norm;
  dp.sampling_rate = cfg.kappa;
  dp.steps = cfg.steps;
  dp.noise_multiplier = sigma_dp;
  dp.lr_scale = cfg.lambda_c;
  dp.seed = derive_seed(seed, 0, kTagDpSgd);

  ElboConfig vi;
  vi.n_vi = cfg.n_vi;
  vi.dataset_size = data.size();

  TracePosterior out;
  out.trace = run_dpsgd(model, data, vi, dp);

  const PostProcessModel ppm =
      make_post_process_model(out.trace, cfg.resolved_burn_in());
  Rng fit_rng(derive_seed(seed, 0, kTagFit));
  out.samples = cfg.method == PostMethod::kLaplace
                    ? fit_laplace(ppm, cfg.draws, fit_rng)
                    : fit_hmc(ppm, cfg.warmup, cfg.draws, fit_rng);
  out.na = mixture_posterior(out.samples);

  const Vector phi_last =
      out.trace.params.row(out.trace.params.rows() - 1).transpose();
  out.naive = point_posterior(VariationalParams::from_flat(phi_last));
  return out;
}

inline bool mentions_divergence(const std::exception& e) {
  return std::string(e.what()).find("diverged") != std::string::npos;
}

class StopWatch {
 public:
  StopWatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

// TARP-mode experiment: for each coverage study, run the paired
// NA/naive pipeline through the coverage harness and emit both curves.
inline ExperimentResult run_tarp_experiment(const ExperimentConfig& cfg,
                                            double sigma_dp,
                                            std::ostream& log) {
  const ModelPtr model = detail::model_for(cfg, 0);
  std::atomic<bool> divergence_seen{false};

  const MultiPosteriorPipeline pipeline =
      [&](const Dataset& data, uint64_t seed, int n_samples) {
        try {
          const detail::TracePosterior fit =
              detail::fit_both(*model, data, cfg, sigma_dp, seed);
          Rng na_rng(derive_seed(seed, 0, detail::kTagSampleNa));
          Rng naive_rng(derive_seed(seed, 0, detail::kTagSampleNaive));
          return std::vector<Matrix>{
              sample_posterior(fit.na, na_rng, n_samples),
              sample_posterior(fit.naive, naive_rng, n_samples)};
        } catch (const std::runtime_error& e) {
          if (detail::mentions_divergence(e)) divergence_seen = true;
          throw;
        }
      };

  ExperimentResult result;
  result.manifest.config = cfg;
  result.manifest.sigma_dp = sigma_dp;
  result.manifest.effective_lr_base = lr_heuristic(
      cfg.lambda_c, sigma_dp, cfg.clip_norm, cfg.steps,
      2 * model->param_dim());

  TarpConfig tarp;
  tarp.repetitions = cfg.repetitions;
  tarp.posterior_samples = cfg.posterior_samples;
  tarp.data_size = cfg.data_n;
  tarp.max_failure_rate = cfg.max_failure_rate;
  tarp.workers = cfg.workers;

  for (int r = 0; r < cfg.tarp_repetitions; ++r) {
    const uint64_t study_seed =
        derive_seed(cfg.seed, static_cast<uint64_t>(r), detail::kTagOuterRep);
    result.manifest.repetition_seeds.push_back(study_seed);
    tarp.seed = study_seed;
    detail::StopWatch watch;
    try {
      std::vector<CoverageReport> reports =
          tarp_coverage_multi(*model, pipeline, 2, tarp);
      result.na_reports.push_back(std::move(reports[0]));
      result.naive_reports.push_back(std::move(reports[1]));
    } catch (const std::runtime_error& e) {
      if (divergence_seen.load())
        throw std::runtime_error(std::string("pipeline diverged: ") +
                                 e.what());
      throw;
    }
    result.repetition_ids.push_back(r);
    result.rmse_na.push_back(result.na_reports.back().rmse);
    result.rmse_naive.push_back(result.naive_reports.back().rmse);
    log << "study " << r << ": rmse na_dpvi = "
        << format_double(result.rmse_na.back())
        << ", naive = " << format_double(result.rmse_naive.back()) << " ("
        << format_double(watch.seconds()) << "s)\n";
  }
  return result;
}

// Calibration-mode experiment: per seed, fit on a training set and score
// predictive probabilities on a holdout with reliability bins.
inline ExperimentResult run_calibration_experiment(const ExperimentConfig& cfg,
                                                   double sigma_dp,
                                                   std::ostream& log) {
  Dataset adult_train, adult_test;
  int adult_features = 0;
  if (cfg.kind == ExperimentKind::kAdultLogreg) {
    std::vector<std::string> train_names, test_names;
    const Matrix train = parse_matrix_csv(read_text_file(cfg.train_path),
                                          &train_names);
    const Matrix test = parse_matrix_csv(read_text_file(cfg.test_path),
                                         &test_names);
    if (train_names != test_names)
      throw std::runtime_error(
          "train/test feature columns differ; re-ingest both splits");
    adult_features = static_cast<int>(train.cols()) - 1;
    adult_train = Dataset(train.transpose());
    adult_test = Dataset(test.transpose());
  }
  const ModelPtr model = detail::model_for(cfg, adult_features);
  const int p = cfg.kind == ExperimentKind::kAdultLogreg ? adult_features
                                                         : cfg.features;

  ExperimentResult result;
  result.manifest.config = cfg;
  result.manifest.sigma_dp = sigma_dp;
  result.manifest.effective_lr_base = lr_heuristic(
      cfg.lambda_c, sigma_dp, cfg.clip_norm, cfg.steps,
      2 * model->param_dim());
  for (int r = 0; r < cfg.repetitions; ++r)
    result.manifest.repetition_seeds.push_back(
        derive_seed(cfg.seed, static_cast<uint64_t>(r), detail::kTagCalRep));

  const int reps = cfg.repetitions;
  result.na_calibrations.resize(reps);
  result.naive_calibrations.resize(reps);
  std::vector<std::string> errors(reps);
  std::atomic<int> next{0};
  std::atomic<int> failures{0};
  std::atomic<bool> divergence_seen{false};

  const bool with_bias =
      cfg.kind == ExperimentKind::kAdultLogreg ? true : cfg.bias;
  const auto evaluate = [&](const NoiseAwarePosterior& post, uint64_t seed,
                            uint64_t tag, const Dataset& test) {
    Rng rng(derive_seed(seed, 0, tag));
    const int m = test.size();
    Vector preds(m);
    std::vector<int> labels(m);
    // The bias weight multiplies an implicit all-ones input.
    Vector x(with_bias ? p + 1 : p);
    if (with_bias) x(p) = 1.0;
    for (int i = 0; i < m; ++i) {
      x.head(p) = test.example(i).head(p);
      preds(i) =
          posterior_predictive_logistic(post, x, rng, cfg.predictive_draws);
      labels[i] = test.obs(p, i) > 0.5 ? 1 : 0;
    }
    return calibration_curve(preds, labels, cfg.bins);
  };

  const auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= reps) return;
      const uint64_t seed = result.manifest.repetition_seeds[r];
      try {
        Dataset train, test;
        if (cfg.kind == ExperimentKind::kAdultLogreg) {
          train = adult_train;
          test = adult_test;
        } else {
          Rng data_rng(derive_seed(seed, 0, detail::kTagCalData));
          const Vector theta = model->prior_sample(data_rng);
          train = model->simulate(data_rng, theta, cfg.data_n);
          test = model->simulate(data_rng, theta, cfg.test_size);
        }
        const detail::TracePosterior fit =
            detail::fit_both(*model, train, cfg, sigma_dp, seed);
        result.na_calibrations[r] =
            evaluate(fit.na, seed, detail::kTagPredictNa, test);
        result.naive_calibrations[r] =
            evaluate(fit.naive, seed, detail::kTagPredictNaive, test);
      } catch (const std::exception& e) {
        if (detail::mentions_divergence(e)) divergence_seen = true;
        errors[r] = e.what();
        failures.fetch_add(1);
      }
    }
  };

  detail::StopWatch watch;
  if (cfg.workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const int failed = failures.load();
  if (static_cast<double>(failed) / reps > cfg.max_failure_rate) {
    std::string first_error;
    for (const std::string& e : errors)
      if (!e.empty()) { first_error = e; break; }
    const std::string msg = "calibration repetition failure rate above " +
                            format_double(cfg.max_failure_rate) + ": " +
                            std::to_string(failed) + "/" +
                            std::to_string(reps) + " (first: " + first_error +
                            ")";
    if (divergence_seen.load())
      throw std::runtime_error("pipeline diverged: " + msg);
    throw std::runtime_error(msg);
  }

  // Compact to the successful seeds so emitted artifacts never hold an
  // empty report; repetition_ids preserves the original indices.
  std::vector<CalibrationReport> na_kept, naive_kept;
  for (int r = 0; r < reps; ++r) {
    if (!errors[r].empty()) continue;
    result.repetition_ids.push_back(r);
    na_kept.push_back(std::move(result.na_calibrations[r]));
    naive_kept.push_back(std::move(result.naive_calibrations[r]));
    result.rmse_na.push_back(na_kept.back().rmse);
    result.rmse_naive.push_back(naive_kept.back().rmse);
    log << "seed " << r << ": calibration rmse na_dpvi = "
        << format_double(na_kept.back().rmse)
        << ", naive = " << format_double(naive_kept.back().rmse) << "\n";
  }
  result.na_calibrations = std::move(na_kept);
  result.naive_calibrations = std::move(naive_kept);
  log << "calibration total " << format_double(watch.seconds()) << "s\n";
  return result;
}

// Reruns the deterministic first repetition to dump its trace and
// posterior draws; costs one extra pipeline run, only when flagged.
inline void write_flagged_dumps(const ExperimentConfig& cfg, double sigma_dp,
                                ExperimentResult* result) {
  if (!cfg.save_trace && !cfg.save_posterior) return;
  const ModelPtr model = detail::model_for(cfg, 0);
  uint64_t seed = 0;
  Dataset data;
  if (cfg.eval_mode == EvalMode::kTarp) {
    // Replays the first TARP repetition with its harness-derived seeds.
    const uint64_t study_seed = result->manifest.repetition_seeds.at(0);
    Rng rng(derive_seed(study_seed, 0, detail::kTarpRepTag));
    const Vector theta = model->prior_sample(rng);
    data = model->simulate(rng, theta, cfg.data_n);
    seed = derive_seed(study_seed, 0, detail::kTarpPipelineTag);
  } else {
    seed = result->manifest.repetition_seeds.at(0);
    Rng data_rng(derive_seed(seed, 0, detail::kTagCalData));
    const Vector theta = model->prior_sample(data_rng);
    data = model->simulate(data_rng, theta, cfg.data_n);
  }
  const detail::TracePosterior fit =
      detail::fit_both(*model, data, cfg, sigma_dp, seed);
  const std::string base = cfg.out_dir + "/";
  if (cfg.save_trace) {
    write_text_file(base + "trace.csv", trace_csv(fit.trace));
    result->written_files.push_back(base + "trace.csv");
  }
  if (cfg.save_posterior) {
    write_text_file(base + "posterior_samples.csv",
                    posterior_samples_csv(fit.samples, cfg.resolved_burn_in(),
                                          cfg.warmup, seed));
    result->written_files.push_back(base + "posterior_samples.csv");
  }
}

// Full run: accountant calibration, evaluation, artifact emission.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       std::ostream& log) {
  cfg.validate();
  detail::StopWatch total_watch;

  const PrivacyAccountant accountant;
  detail::StopWatch sigma_watch;
  const double sigma_dp = accountant.calibrate_sigma(
      PrivacyBudget{cfg.epsilon, cfg.delta}, cfg.steps, cfg.kappa);
  const double sigma_seconds = sigma_watch.seconds();
  log << "sigma_dp = " << format_double(sigma_dp) << " for epsilon = "
      << format_double(cfg.epsilon) << ", delta = " << format_double(cfg.delta)
      << ", T = " << cfg.steps << ", kappa = " << format_double(cfg.kappa)
      << "\n";

  detail::StopWatch eval_watch;
  ExperimentResult result =
      cfg.eval_mode == EvalMode::kTarp
          ? run_tarp_experiment(cfg, sigma_dp, log)
          : run_calibration_experiment(cfg, sigma_dp, log);
  const double eval_seconds = eval_watch.seconds();

  std::filesystem::create_directories(cfg.out_dir);
  const std::string base = cfg.out_dir + "/";

  // File names carry the original repetition index; the suffix appears
  // whenever the run was configured for more than one pair.
  const bool multi = (cfg.eval_mode == EvalMode::kTarp ? cfg.tarp_repetitions
                                                       : cfg.repetitions) > 1;
  const auto emit_pair = [&](const std::string& stem, int rep_id,
                             const std::string& text) {
    const std::string path =
        multi ? base + stem + "_rep" + std::to_string(rep_id) + ".csv"
              : base + stem + ".csv";
    write_text_file(path, text);
    result.written_files.push_back(path);
  };

  if (cfg.eval_mode == EvalMode::kTarp) {
    for (std::size_t i = 0; i < result.na_reports.size(); ++i) {
      emit_pair("coverage_na_dpvi", result.repetition_ids[i],
                coverage_csv(result.na_reports[i]));
      emit_pair("coverage_naive", result.repetition_ids[i],
                coverage_csv(result.naive_reports[i]));
    }
  } else {
    for (std::size_t i = 0; i < result.na_calibrations.size(); ++i) {
      emit_pair("calibration_na_dpvi", result.repetition_ids[i],
                calibration_csv(result.na_calibrations[i]));
      emit_pair("calibration_naive", result.repetition_ids[i],
                calibration_csv(result.naive_calibrations[i]));
    }
  }

  std::string summary = "rep,rmse_na_dpvi,rmse_naive\n";
  for (std::size_t r = 0; r < result.rmse_na.size(); ++r)
    summary += std::to_string(result.repetition_ids[r]) + "," +
               format_double(result.rmse_na[r]) + "," +
               format_double(result.rmse_naive[r]) + "\n";
  write_text_file(base + "summary.csv", summary);
  result.written_files.push_back(base + "summary.csv");

  write_flagged_dumps(cfg, sigma_dp, &result);

  write_text_file(base + "manifest.txt", result.manifest.to_text());
  result.written_files.push_back(base + "manifest.txt");

  // Timings sit outside the manifest so reruns stay byte-identical.
  std::string timings = "sigma_calibration_seconds = " +
                        format_double(sigma_seconds) + "\n";
  timings += "evaluation_seconds = " + format_double(eval_seconds) + "\n";
  timings += "total_seconds = " + format_double(total_watch.seconds()) + "\n";
  write_text_file(base + "timings.txt", timings);

  return result;
}

// Exit codes for the command-line runner. Zero is success; distinct codes
// separate bad configs, optimizer divergence, evaluation breaches, and I/O.
enum ExitCode {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitDivergence = 3,
  kExitEvaluationFailure = 4,
  kExitIoError = 5,
};

struct CliOverrides {
  std::string out_dir;  // empty = keep config value
  int workers = 0;      // 0 = keep config value
  bool seed_set = false;
  uint64_t seed = 0;
};

inline int run_experiment_command(const std::string& config_path,
                                  const CliOverrides& overrides,
                                  std::ostream& log, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    ParsedConfig parsed = ParsedConfig::from_file(config_path);
    if (!overrides.out_dir.empty()) parsed.set("output.dir", overrides.out_dir);
    if (overrides.workers > 0)
      parsed.set("run.workers", std::to_string(overrides.workers));
    if (overrides.seed_set) parsed.set("run.seed", std::to_string(overrides.seed));
    cfg = experiment_config_from(parsed);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
  try {
    run_experiment(cfg, log);
    return kExitOk;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    err << "run failed: " << what << "\n";
    if (what.find("diverged") != std::string::npos) return kExitDivergence;
    if (what.find("cannot open") != std::string::npos ||
        what.find("write failed") != std::string::npos)
      return kExitIoError;
    return kExitEvaluationFailure;
  }
}

}  // namespace nadpvi

#endif  // NADPVI_EXPERIMENT_HPP_
