#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "hnca/cli_commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"HNCA contextual-bandit training and verification toolkit"};
  app.require_subcommand(1);

  hnca::cli::RunOptions run;
  run.parallel =
      std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HNCA_DATA_DIR")) run.data_dir = env;
  std::uint64_t seed_value = 0;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--experiment", run.experiment_path, "experiment JSON")
        ->required();
    cmd->add_option("--out", run.out_dir, "output directory");
    cmd->add_option("--parallel", run.parallel, "worker threads");
    cmd->add_option("--seed", seed_value, "override the experiment seed")
        ->each([&](const std::string&) { run.seed_override = seed_value; });
    cmd->add_option("--data-dir", run.data_dir,
                    "dataset root (default $HNCA_DATA_DIR)");
  };

  CLI::App* train_cmd =
      app.add_subcommand("train", "run one training configuration");
  add_run_flags(train_cmd);

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "run a learning-rate sweep");
  add_run_flags(sweep_cmd);

  hnca::cli::VerifyOptions verify;
  CLI::App* verify_cmd = app.add_subcommand(
      "verify", "exact verification of estimator properties on random nets");
  verify_cmd->add_option("--shape", verify.shape,
                         "net shape, e.g. 3-2-2 or 4-3-3-3");
  verify_cmd->add_option("--draws", verify.draws, "number of random nets");
  verify_cmd->add_option("--seed", verify.seed, "base seed");
  verify_cmd->add_option("--mapping", verify.mapping,
                         "zero_one | plus_minus_one | alternate");
  verify_cmd->add_option("--out", verify.out_dir, "output directory");
  verify_cmd
      ->add_flag("--raw-child-messages", verify.raw_child_messages,
                 "negative control: pass raw counterfactual probabilities")
      ->group("");  // hidden; exists so tests can prove the checks bite

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hnca::cli::kExitConfig;
  }

  if (train_cmd->parsed()) return hnca::cli::cmd_train(run);
  if (sweep_cmd->parsed()) return hnca::cli::cmd_sweep(run);
  if (verify_cmd->parsed()) return hnca::cli::cmd_verify(verify);
  std::cerr << "no subcommand\n";
  return hnca::cli::kExitConfig;
}
