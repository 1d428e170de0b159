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
// Command-line front end: `run` drives a config through the full pipeline,
// `ingest-adult` prepares the UCI Adult dataset, `accountant` prints the
// calibrated noise multiplier, `config-reference` documents every key.

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "nadpvi/accountant.hpp"
#include "nadpvi/adult.hpp"
#include "nadpvi/experiment.hpp"
#include "nadpvi/version.hpp"

namespace {

int run_ingest_adult(const std::string& raw_path, const std::string& out_path) {
  try {
    const nadpvi::AdultIngestResult result =
        nadpvi::ingest_adult_file(raw_path);
    std::vector<std::string> columns = result.feature_names;
    columns.push_back("label");
    nadpvi::write_text_file(out_path,
                            nadpvi::matrix_csv(result.data, columns));
    const std::string manifest_path = out_path + ".manifest";
    nadpvi::write_text_file(manifest_path, result.manifest_text());
    std::cout << "kept " << result.kept_rows << " rows, dropped "
              << result.dropped_rows << " unparseable rows\n";
    std::cout << result.feature_dim() << " features -> " << out_path
              << " (manifest: " << manifest_path << ")\n";
    return nadpvi::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "ingest failed: " << e.what() << "\n";
    return nadpvi::kExitIoError;
  }
}

int run_accountant(double eps, double delta, int64_t steps, double kappa) {
  try {
    const nadpvi::PrivacyAccountant accountant;
    const double sigma = accountant.calibrate_sigma(
        nadpvi::PrivacyBudget{eps, delta}, steps, kappa);
    std::cout << nadpvi::format_double(sigma) << "\n";
    return nadpvi::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "accountant error: " << e.what() << "\n";
    return nadpvi::kExitConfigError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noise-aware differentially private variational inference"};
  app.set_version_flag("--version", std::string("nadpvi ") +
                                        NADPVI_VERSION_STRING);
  app.require_subcommand(1);

  // run <config>
  std::string config_path;
  nadpvi::CliOverrides overrides;
  int workers_flag = 0;
  uint64_t seed_flag = 0;
  CLI::App* run = app.add_subcommand(
      "run", "run an experiment described by a config file");
  run->add_option("config", config_path, "path to the experiment config")
      ->required();
  run->add_option("--workers", workers_flag,
                  "repetition worker threads (overrides run.workers)");
  run->add_option("--out-dir", overrides.out_dir,
                  "artifact directory (overrides output.dir)");
  CLI::Option* seed_opt = run->add_option(
      "--seed", seed_flag, "master seed (overrides run.seed)");

  // ingest-adult <raw> <out>
  std::string raw_path, out_path;
  CLI::App* ingest = app.add_subcommand(
      "ingest-adult", "convert a raw UCI Adult file into a normalized CSV");
  ingest->add_option("raw", raw_path, "raw UCI Adult data file")->required();
  ingest->add_option("out", out_path, "output CSV path")->required();

  // accountant --eps --delta --steps --kappa
  double eps = 0.0, delta = 1e-5, kappa = 0.1;
  int64_t steps = 0;
  CLI::App* accountant = app.add_subcommand(
      "accountant",
      "print the noise multiplier sigma_dp for a privacy budget");
  accountant->add_option("--eps", eps, "epsilon budget")->required();
  accountant->add_option("--delta", delta, "delta budget")->required();
  accountant->add_option("--steps", steps, "composition steps T")->required();
  accountant->add_option("--kappa", kappa, "subsampling rate")->required();

  CLI::App* reference = app.add_subcommand(
      "config-reference", "print the documented configuration keys");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    overrides.workers = workers_flag;
    if (*seed_opt) {
      overrides.seed_set = true;
      overrides.seed = seed_flag;
    }
    return nadpvi::run_experiment_command(config_path, overrides, std::cout,
                                          std::cerr);
  }
  if (ingest->parsed()) return run_ingest_adult(raw_path, out_path);
  if (accountant->parsed()) return run_accountant(eps, delta, steps, kappa);
  if (reference->parsed()) {
    std::cout << nadpvi::experiment_config_reference();
    return nadpvi::kExitOk;
  }
  return nadpvi::kExitOk;
}
