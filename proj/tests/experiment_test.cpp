// Copyright 2026 The nadpvi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nadpvi/experiment.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <string>

namespace nadpvi {
namespace {

ExperimentConfig config_from_text(const std::string& text) {
  return experiment_config_from(ParsedConfig::from_text(text));
}

template <typename Fn>
void expect_config_error(Fn fn, const std::string& fragment) {
  try {
    fn();
    FAIL() << "expected ConfigError containing '" << fragment << "'";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos)
        << e.what();
  }
}

const char kMinimalM1[] =
    "[experiment]\nkind = expfam_m1\n"
    "[privacy]\nepsilon = 0.1\n"
    "[data]\nn = 1000\n"
    "[dp_sgd]\nsteps = 2000\nclip_norm = 2\n";

TEST(ExperimentConfigFrom, MinimalConfigFillsDocumentedDefaults) {
  const ExperimentConfig cfg = config_from_text(kMinimalM1);
  EXPECT_EQ(cfg.kind, ExperimentKind::kExpfamM1);
  EXPECT_DOUBLE_EQ(cfg.epsilon, 0.1);
  EXPECT_DOUBLE_EQ(cfg.delta, 1e-5);
  EXPECT_EQ(cfg.data_n, 1000);
  EXPECT_EQ(cfg.steps, 2000);
  EXPECT_DOUBLE_EQ(cfg.kappa, 0.1);
  EXPECT_DOUBLE_EQ(cfg.beta_u, 10.0);
  EXPECT_DOUBLE_EQ(cfg.lambda_c, 1.0);
  EXPECT_EQ(cfg.n_vi, 10);
  EXPECT_EQ(cfg.method, PostMethod::kLaplace);
  EXPECT_EQ(cfg.eval_mode, EvalMode::kTarp);
  EXPECT_EQ(cfg.burn_in, 0);
  EXPECT_EQ(cfg.resolved_burn_in(), 1000);
  EXPECT_EQ(cfg.repetitions, 100);
  EXPECT_EQ(cfg.seed, 0u);
  EXPECT_EQ(cfg.workers, 1);
}

TEST(ExperimentConfigFrom, CustomKindDefaultsToCalibration) {
  const ExperimentConfig cfg = config_from_text(
      "[experiment]\nkind = custom\n"
      "[model]\nfeatures = 3\nbias = false\n"
      "[privacy]\nepsilon = 1\n"
      "[data]\nn = 200\n"
      "[dp_sgd]\nsteps = 100\nclip_norm = 1\n");
  EXPECT_EQ(cfg.kind, ExperimentKind::kCustom);
  EXPECT_EQ(cfg.features, 3);
  EXPECT_FALSE(cfg.bias);
  EXPECT_EQ(cfg.eval_mode, EvalMode::kCalibration);
}

TEST(ExperimentConfigFrom, MissingRequiredKeysAreNamed) {
  expect_config_error(
      [] {
        config_from_text("[experiment]\nkind = expfam_m1\n[data]\nn = 10\n"
                         "[dp_sgd]\nsteps = 10\nclip_norm = 1\n");
      },
      "privacy.epsilon");
  expect_config_error(
      [] {
        config_from_text("[experiment]\nkind = expfam_m1\n"
                         "[privacy]\nepsilon = 1\n"
                         "[dp_sgd]\nsteps = 10\nclip_norm = 1\n");
      },
      "data.n");
}

TEST(ExperimentConfigFrom, UnknownAndMisplacedKeysAreRejected) {
  expect_config_error(
      [] { config_from_text(std::string(kMinimalM1) + "[dp_sgd2]\nx = 1\n"); },
      "dp_sgd2.x");
  // model.* keys belong to the custom kind only.
  expect_config_error(
      [] {
        config_from_text(std::string(kMinimalM1) + "[model]\nfeatures = 5\n");
      },
      "model.features");
}

TEST(ExperimentConfigFrom, BadEnumValuesListTheAlternatives) {
  expect_config_error(
      [] {
        config_from_text(std::string(kMinimalM1) + "[post]\nmethod = mcmc\n");
      },
      "laplace or hmc");
  expect_config_error(
      [] {
        config_from_text(std::string(kMinimalM1) +
                         "[evaluation]\nmode = coverage\n");
      },
      "tarp or calibration");
  expect_config_error(
      [] {
        config_from_text(
            "[experiment]\nkind = expfam_m9\n[privacy]\nepsilon = 1\n"
            "[data]\nn = 10\n[dp_sgd]\nsteps = 10\nclip_norm = 1\n");
      },
      "expfam_m1|expfam_m2|expfam_m3|linreg10d|adult_logreg|custom");
}

TEST(ExperimentConfigFrom, ValidationRejectsOutOfRangeValues) {
  expect_config_error(
      [] {
        config_from_text(std::string(kMinimalM1) +
                         "[evaluation]\nmax_failure_rate = 1.5\n");
      },
      "max_failure_rate");
  expect_config_error(
      [] {
        config_from_text(std::string(kMinimalM1) +
                         "[post]\nburn_in = 2000\n");
      },
      "burn_in");
  ExperimentConfig bad = config_from_text(kMinimalM1);
  bad.kappa = 1.5;
  expect_config_error([&] { bad.validate(); }, "kappa");
}

TEST(ExperimentConfigFrom, AdultKindNeedsPathsAndCalibration) {
  expect_config_error(
      [] {
        config_from_text(
            "[experiment]\nkind = adult_logreg\n[privacy]\nepsilon = 1\n"
            "[dp_sgd]\nsteps = 10\nclip_norm = 1\n");
      },
      "data.train_path");
  const char* with_paths =
      "[experiment]\nkind = adult_logreg\n[privacy]\nepsilon = 1\n"
      "[data]\ntrain_path = a.csv\ntest_path = b.csv\n"
      "[dp_sgd]\nsteps = 10\nclip_norm = 1\n";
  expect_config_error(
      [&] {
        config_from_text(std::string(with_paths) +
                         "[evaluation]\nmode = tarp\n");
      },
      "calibration");
  expect_config_error(
      [&] {
        config_from_text(std::string(with_paths) +
                         "[output]\nsave_trace = true\n");
      },
      "adult_logreg");
  const ExperimentConfig cfg = config_from_text(with_paths);
  EXPECT_EQ(cfg.eval_mode, EvalMode::kCalibration);
  EXPECT_EQ(cfg.train_path, "a.csv");
}

TEST(ExperimentConfigReference, MentionsEveryConfigKey) {
  const std::string ref = experiment_config_reference();
  for (const char* key :
       {"experiment.kind", "model.features", "privacy.epsilon",
        "privacy.delta", "data.n", "data.train_path", "dp_sgd.steps",
        "dp_sgd.kappa", "dp_sgd.clip_norm", "dp_sgd.beta_u",
        "dp_sgd.lambda_c", "dp_sgd.n_vi", "post.method", "post.warmup",
        "post.draws", "post.burn_in", "evaluation.mode",
        "evaluation.tarp_repetitions", "evaluation.repetitions",
        "evaluation.posterior_samples", "evaluation.test_size",
        "evaluation.bins", "evaluation.predictive_draws",
        "evaluation.max_failure_rate", "output.dir", "output.save_trace",
        "output.save_posterior", "run.seed", "run.workers"}) {
    EXPECT_NE(ref.find(key), std::string::npos) << key;
  }
}

TEST(RunManifest, TextIsValidConfigAndEchoesTheRun) {
  RunManifest manifest;
  manifest.config = config_from_text(kMinimalM1);
  manifest.sigma_dp = 152.04410476684569;
  manifest.effective_lr_base = 0.25;
  manifest.repetition_seeds = {11, 22};
  const std::string text = manifest.to_text();

  auto parsed = ParsedConfig::from_text(text);
  EXPECT_EQ(parsed.get_string("experiment.kind"), "expfam_m1");
  EXPECT_EQ(parsed.get_double("run_info.sigma_dp"), 152.04410476684569);
  EXPECT_EQ(parsed.get_double("run_info.effective_lr_base"), 0.25);
  EXPECT_EQ(parsed.get_int("run_info.resolved_burn_in"), 1000);
  EXPECT_EQ(parsed.get_string("run_info.library_version"),
            NADPVI_VERSION_STRING);
  EXPECT_EQ(parsed.get_string("run_info.timings_file"), "timings.txt");
  EXPECT_EQ(parsed.get_uint("seeds.rep_0", 0), 11u);
  EXPECT_EQ(parsed.get_uint("seeds.rep_1", 0), 22u);

  // The config echo itself parses back to the identical configuration.
  const std::string echo = text.substr(0, text.find("[run_info]"));
  const ExperimentConfig back = config_from_text(echo);
  EXPECT_EQ(back.kind, manifest.config.kind);
  EXPECT_EQ(back.epsilon, manifest.config.epsilon);
  EXPECT_EQ(back.delta, manifest.config.delta);
  EXPECT_EQ(back.data_n, manifest.config.data_n);
  EXPECT_EQ(back.steps, manifest.config.steps);
  EXPECT_EQ(back.kappa, manifest.config.kappa);
  EXPECT_EQ(back.clip_norm, manifest.config.clip_norm);
  EXPECT_EQ(back.beta_u, manifest.config.beta_u);
  EXPECT_EQ(back.lambda_c, manifest.config.lambda_c);
  EXPECT_EQ(back.n_vi, manifest.config.n_vi);
  EXPECT_EQ(back.method, manifest.config.method);
  EXPECT_EQ(back.eval_mode, manifest.config.eval_mode);
  EXPECT_EQ(back.repetitions, manifest.config.repetitions);
  EXPECT_EQ(back.seed, manifest.config.seed);
}

// Small but real end-to-end runs. One coverage study over a handful of
// TARP repetitions keeps the whole pipeline under a second.
ExperimentConfig tiny_tarp_config(const std::string& out_dir) {
  ExperimentConfig cfg = config_from_text(
      "[experiment]\nkind = expfam_m1\n"
      "[privacy]\nepsilon = 1\n"
      "[data]\nn = 40\n"
      "[dp_sgd]\nsteps = 40\nkappa = 0.2\nclip_norm = 2\nn_vi = 5\n"
      "[post]\ndraws = 15\n"
      "[evaluation]\nrepetitions = 5\nposterior_samples = 60\n"
      "max_failure_rate = 0\n"
      "[run]\nseed = 7\n");
  cfg.out_dir = out_dir;
  return cfg;
}

std::string slurp(const std::string& path) { return read_text_file(path); }

TEST(RunExperiment, TarpModeWritesTheDocumentedArtifacts) {
  const std::string dir = ::testing::TempDir() + "nadpvi_exp_tarp";
  std::filesystem::remove_all(dir);
  std::ostringstream log;
  const ExperimentResult result =
      run_experiment(tiny_tarp_config(dir), log);

  ASSERT_EQ(result.na_reports.size(), 1u);
  ASSERT_EQ(result.naive_reports.size(), 1u);
  EXPECT_EQ(result.na_reports[0].repetitions, 5);
  EXPECT_EQ(result.na_reports[0].failures, 0);
  EXPECT_EQ(result.repetition_ids, std::vector<int>{0});
  ASSERT_EQ(result.rmse_na.size(), 1u);

  for (const char* name : {"coverage_na_dpvi.csv", "coverage_naive.csv",
                           "summary.csv", "manifest.txt", "timings.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir + "/" + name)) << name;
  }
  // The two curves come from the identical traces, so both parse against
  // the same grid.
  const CoverageReport na = parse_coverage_csv(slurp(dir + "/coverage_na_dpvi.csv"));
  const CoverageReport naive = parse_coverage_csv(slurp(dir + "/coverage_naive.csv"));
  EXPECT_EQ(na.alpha, naive.alpha);
  EXPECT_EQ(na.rmse, result.rmse_na[0]);
  EXPECT_EQ(naive.rmse, result.rmse_naive[0]);
  // The manifest echoes sigma_dp and the per-study seed.
  auto manifest = ParsedConfig::from_text(slurp(dir + "/manifest.txt"));
  EXPECT_GT(manifest.get_double("run_info.sigma_dp"), 0.0);
  EXPECT_TRUE(manifest.has("seeds.rep_0"));
  EXPECT_NE(log.str().find("sigma_dp = "), std::string::npos);
}

TEST(RunExperiment, RerunWithTheSameSeedIsByteIdentical) {
  const std::string dir_a = ::testing::TempDir() + "nadpvi_exp_rerun_a";
  const std::string dir_b = ::testing::TempDir() + "nadpvi_exp_rerun_b";
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
  std::ostringstream log_a, log_b;
  ExperimentConfig cfg_a = tiny_tarp_config(dir_a);
  ExperimentConfig cfg_b = tiny_tarp_config(dir_b);
  run_experiment(cfg_a, log_a);
  run_experiment(cfg_b, log_b);
  for (const char* name :
       {"coverage_na_dpvi.csv", "coverage_naive.csv", "summary.csv"}) {
    EXPECT_EQ(slurp(dir_a + "/" + name), slurp(dir_b + "/" + name)) << name;
  }
  // Manifests differ only in the artifact directory they name.
  std::string manifest_a = slurp(dir_a + "/manifest.txt");
  const std::string manifest_b = slurp(dir_b + "/manifest.txt");
  manifest_a.replace(manifest_a.find(dir_a), dir_a.size(), dir_b);
  EXPECT_EQ(manifest_a, manifest_b);
}

TEST(RunExperiment, FlaggedDumpsReproduceTheFirstRepetition) {
  const std::string dir = ::testing::TempDir() + "nadpvi_exp_dumps";
  std::filesystem::remove_all(dir);
  ExperimentConfig cfg = tiny_tarp_config(dir);
  cfg.save_trace = true;
  cfg.save_posterior = true;
  std::ostringstream log;
  run_experiment(cfg, log);

  const DpSgdTrace trace = parse_trace_csv(slurp(dir + "/trace.csv"));
  EXPECT_EQ(trace.params.rows(), cfg.steps + 1);
  EXPECT_EQ(trace.params.cols(), 2);  // (mu, u) for the 1-d model
  const std::string post = slurp(dir + "/posterior_samples.csv");
  EXPECT_NE(post.find("# method = laplace\n"), std::string::npos);
  std::vector<std::string> names;
  const Matrix draws = parse_matrix_csv(post, &names);
  EXPECT_EQ(draws.rows(), cfg.draws);
  ASSERT_EQ(names.size(), 5u);  // draw, phi_star x2, v x2
  EXPECT_EQ(names[1], "phi_star_0");
  EXPECT_EQ(names[4], "v_1");
}

ExperimentConfig tiny_calibration_config(const std::string& out_dir) {
  ExperimentConfig cfg = config_from_text(
      "[experiment]\nkind = custom\n"
      "[model]\nfeatures = 2\n"
      "[privacy]\nepsilon = 1\n"
      "[data]\nn = 50\n"
      "[dp_sgd]\nsteps = 30\nkappa = 0.3\nclip_norm = 1\nn_vi = 4\n"
      "[post]\ndraws = 10\n"
      "[evaluation]\nrepetitions = 3\ntest_size = 40\nbins = 5\n"
      "predictive_draws = 30\nmax_failure_rate = 0\n"
      "[run]\nseed = 3\n");
  cfg.out_dir = out_dir;
  return cfg;
}

TEST(RunExperiment, CalibrationModeWritesPerSeedReports) {
  const std::string dir = ::testing::TempDir() + "nadpvi_exp_cal";
  std::filesystem::remove_all(dir);
  std::ostringstream log;
  const ExperimentResult result =
      run_experiment(tiny_calibration_config(dir), log);

  ASSERT_EQ(result.na_calibrations.size(), 3u);
  EXPECT_EQ(result.repetition_ids, (std::vector<int>{0, 1, 2}));
  for (int r = 0; r < 3; ++r) {
    const std::string na_path =
        dir + "/calibration_na_dpvi_rep" + std::to_string(r) + ".csv";
    const CalibrationReport na = parse_calibration_csv(slurp(na_path));
    EXPECT_EQ(na.count.size(), 5u);
    EXPECT_TRUE(std::filesystem::exists(
        dir + "/calibration_naive_rep" + std::to_string(r) + ".csv"));
  }
  // Every rmse is a probability-scale Brier root: finite, in [0, 1].
  for (const double r : result.rmse_na) {
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(RunExperiment, WorkerCountDoesNotChangeArtifacts) {
  const std::string dir_a = ::testing::TempDir() + "nadpvi_exp_w1";
  const std::string dir_b = ::testing::TempDir() + "nadpvi_exp_w3";
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
  std::ostringstream log_a, log_b;
  ExperimentConfig cfg_a = tiny_calibration_config(dir_a);
  ExperimentConfig cfg_b = tiny_calibration_config(dir_b);
  cfg_b.workers = 3;
  run_experiment(cfg_a, log_a);
  run_experiment(cfg_b, log_b);
  for (int r = 0; r < 3; ++r) {
    const std::string name =
        "calibration_na_dpvi_rep" + std::to_string(r) + ".csv";
    EXPECT_EQ(slurp(dir_a + "/" + name), slurp(dir_b + "/" + name)) << name;
  }
  EXPECT_EQ(slurp(dir_a + "/summary.csv"), slurp(dir_b + "/summary.csv"));
}

TEST(RunExperimentCommand, MissingAndMalformedConfigsExitWithConfigError) {
  std::ostringstream log, err;
  EXPECT_EQ(run_experiment_command("/nonexistent/exp.cfg", {}, log, err),
            kExitConfigError);
  EXPECT_NE(err.str().find("config error"), std::string::npos);

  const std::string path = ::testing::TempDir() + "nadpvi_bad.cfg";
  write_text_file(path, "[experiment]\nkind expfam_m1\n");
  std::ostringstream err2;
  EXPECT_EQ(run_experiment_command(path, {}, log, err2), kExitConfigError);
  EXPECT_NE(err2.str().find(":2"), std::string::npos) << err2.str();
}

TEST(RunExperimentCommand, UnknownKeyIsAConfigErrorNamingTheKey) {
  const std::string path = ::testing::TempDir() + "nadpvi_typo.cfg";
  write_text_file(path, std::string(kMinimalM1) + "[dp_sgd]\nstepz = 1\n");
  std::ostringstream log, err;
  EXPECT_EQ(run_experiment_command(path, {}, log, err), kExitConfigError);
  EXPECT_NE(err.str().find("dp_sgd.stepz"), std::string::npos) << err.str();
}

TEST(RunExperimentCommand, OverridesReplaceConfigValues) {
  const std::string dir = ::testing::TempDir() + "nadpvi_exp_override";
  std::filesystem::remove_all(dir);
  const std::string path = ::testing::TempDir() + "nadpvi_override.cfg";
  ExperimentConfig cfg = tiny_tarp_config("ignored_dir");
  RunManifest manifest;
  manifest.config = cfg;
  const std::string text =
      manifest.to_text().substr(0, manifest.to_text().find("[run_info]"));
  write_text_file(path, text);

  CliOverrides overrides;
  overrides.out_dir = dir;
  overrides.seed_set = true;
  overrides.seed = 123;
  overrides.workers = 2;
  std::ostringstream log, err;
  EXPECT_EQ(run_experiment_command(path, overrides, log, err), kExitOk)
      << err.str();
  auto written = ParsedConfig::from_text(slurp(dir + "/manifest.txt"));
  EXPECT_EQ(written.get_string("output.dir"), dir);
  EXPECT_EQ(written.get_uint("run.seed", 0), 123u);
  EXPECT_EQ(written.get_int("run.workers"), 2);
}

TEST(RunExperimentCommand, DivergentOptimizationExitsWithDivergence) {
  const std::string dir = ::testing::TempDir() + "nadpvi_exp_diverge";
  std::filesystem::remove_all(dir);
  const std::string path = ::testing::TempDir() + "nadpvi_diverge.cfg";
  write_text_file(path,
                  "[experiment]\nkind = expfam_m1\n"
                  "[privacy]\nepsilon = 1\n"
                  "[data]\nn = 100\n"
                  "[dp_sgd]\nsteps = 10\nkappa = 0.2\nclip_norm = 1\n"
                  "lambda_c = 1e308\nn_vi = 2\n"
                  "[post]\ndraws = 5\n"
                  "[evaluation]\nrepetitions = 2\nposterior_samples = 20\n"
                  "max_failure_rate = 0\n"
                  "[output]\ndir = " + dir + "\n"
                  "[run]\nseed = 1\n");
  std::ostringstream log, err;
  EXPECT_EQ(run_experiment_command(path, {}, log, err), kExitDivergence);
  EXPECT_NE(err.str().find("diverged"), std::string::npos) << err.str();
}

TEST(RunExperimentCommand, MissingAdultSplitsExitWithIoError) {
  const std::string path = ::testing::TempDir() + "nadpvi_adult_missing.cfg";
  write_text_file(path,
                  "[experiment]\nkind = adult_logreg\n"
                  "[privacy]\nepsilon = 1\n"
                  "[data]\ntrain_path = /nonexistent/train.csv\n"
                  "test_path = /nonexistent/test.csv\n"
                  "[dp_sgd]\nsteps = 10\nclip_norm = 1\n");
  std::ostringstream log, err;
  EXPECT_EQ(run_experiment_command(path, {}, log, err), kExitIoError);
  EXPECT_NE(err.str().find("/nonexistent/train.csv"), std::string::npos)
      << err.str();
}

}  // namespace
}  // namespace nadpvi
