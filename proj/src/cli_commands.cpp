#include "hnca/cli_commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hnca/experiment.hpp"
#include "hnca/oracle.hpp"
#include "hnca/trainer.hpp"

namespace hnca::cli {

namespace {

namespace fs = std::filesystem;

struct LoadedExperiment {
  ExperimentFile exp;
  bandit::Dataset dataset;
  fs::path out;
};

LoadedExperiment load_experiment(const RunOptions& options) {
  LoadedExperiment loaded;
  loaded.exp = ExperimentFile::parse_file(options.experiment_path);
  if (options.seed_override.has_value()) {
    loaded.exp.train.seed = *options.seed_override;
  }
  loaded.dataset = load_dataset(loaded.exp.dataset, options.data_dir);
  const std::string dir =
      !options.out_dir.empty()
          ? options.out_dir
          : (!loaded.exp.out_dir.empty() ? loaded.exp.out_dir : ".");
  loaded.out = fs::path(dir);
  fs::create_directories(loaded.out);
  return loaded;
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw SpecError("cannot write " + path.string());
  out << contents;
}

}  // namespace

int cmd_train(const RunOptions& options) {
  LoadedExperiment loaded;
  try {
    loaded = load_experiment(options);
  } catch (const SpecError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    const trainer::RunMetrics metrics =
        trainer::train(loaded.exp.train, loaded.dataset);
    std::ostringstream csv;
    trainer::write_metrics_csv(csv, metrics);
    write_file(loaded.out / "metrics.csv", csv.str());
    write_file(loaded.out / "config.json", loaded.exp.to_json() + "\n");
    std::cerr << metrics.run_id << ": final_accuracy="
              << metrics.final_accuracy << " wall_ms=" << metrics.wall_ms
              << '\n';
    return kExitOk;
  } catch (const trainer::NanAbortError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DegenerateLikelihoodError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const SpecError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cmd_sweep(const RunOptions& options) {
  LoadedExperiment loaded;
  try {
    loaded = load_experiment(options);
    if (!loaded.exp.sweep.has_value()) {
      throw SpecError("missing key \"sweep\" at $");
    }
  } catch (const SpecError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    const trainer::SweepResult result = trainer::lr_sweep(
        loaded.exp.train, loaded.dataset, loaded.exp.sweep->learning_rates,
        loaded.exp.sweep->seeds, options.parallel);
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
      if (!result.cells[i].ok) continue;
      std::ostringstream csv;
      trainer::write_metrics_csv(csv, result.runs[i]);
      write_file(loaded.out / (result.cells[i].run_id + ".csv"), csv.str());
    }
    write_file(loaded.out / "sweep.json", result.to_json() + "\n");
    write_file(loaded.out / "config.json", loaded.exp.to_json() + "\n");
    std::cerr << "sweep: best_lr=" << result.best_lr << '\n';
    return kExitOk;
  } catch (const SpecError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

namespace {

// "4-3-3-3" -> input 4, hidden {3,3}, 3 classes.
bool parse_shape(const std::string& text, int* input_dim,
                 std::vector<int>* hidden, int* num_classes) {
  std::vector<int> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '-')) {
    try {
      dims.push_back(std::stoi(part));
    } catch (...) {
      return false;
    }
  }
  if (dims.size() < 2) return false;
  *input_dim = dims.front();
  *num_classes = dims.back();
  hidden->assign(dims.begin() + 1, dims.end() - 1);
  return true;
}

}  // namespace

int cmd_verify(const VerifyOptions& options) {
  int input_dim = 0;
  int num_classes = 0;
  std::vector<int> hidden;
  if (!parse_shape(options.shape, &input_dim, &hidden, &num_classes) ||
      input_dim < 1 || num_classes < 2) {
    std::cerr << "config error: bad shape \"" << options.shape << "\"\n";
    return kExitConfig;
  }
  if (options.draws < 1) {
    std::cerr << "config error: draws must be >= 1\n";
    return kExitConfig;
  }
  oracle::MappingPolicy mapping;
  if (options.mapping == "zero_one") {
    mapping = oracle::MappingPolicy::ZeroOne;
  } else if (options.mapping == "plus_minus_one") {
    mapping = oracle::MappingPolicy::PlusMinusOne;
  } else if (options.mapping == "alternate") {
    mapping = oracle::MappingPolicy::Alternate;
  } else {
    std::cerr << "config error: bad mapping \"" << options.mapping << "\"\n";
    return kExitConfig;
  }

  detail::g_raw_child_messages = options.raw_child_messages;
  oracle::VerifySummary summary;
  try {
    summary = oracle::verify_random_nets(input_dim, hidden, num_classes,
                                         options.draws, options.seed, mapping);
  } catch (const oracle::SizeCapError& e) {
    detail::g_raw_child_messages = false;
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  detail::g_raw_child_messages = false;

  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    write_file(fs::path(options.out_dir) / "verify.json",
               summary.to_json() + "\n");
    // Full enumeration report for the first drawn net, for inspection.
    NetworkSpec spec;
    spec.input_dim = input_dim;
    spec.hidden_layers = hidden;
    spec.num_classes = num_classes;
    spec.output_mapping = options.mapping == "plus_minus_one"
                              ? OutputMapping::PlusMinusOne
                              : OutputMapping::ZeroOne;
    spec.seed = options.seed;
    StochasticNet net(spec);
    RngStream ctx_rng(spec.seed, 0xC0);
    Vec context(input_dim);
    for (int i = 0; i < input_dim; ++i) {
      context(i) = ctx_rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    const oracle::OracleReport report = oracle::oracle_report(
        net, context, [](int cls) { return cls == 0 ? 1.0 : 0.0; });
    write_file(fs::path(options.out_dir) / "oracle_report.json",
               report.to_json() + "\n");
  }
  std::cout << summary.to_json() << '\n';
  return summary.ok() ? kExitOk : kExitVerification;
}

}  // namespace hnca::cli
