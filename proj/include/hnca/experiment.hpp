#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hnca/bandit.hpp"
#include "hnca/trainer.hpp"

namespace hnca::cli {

struct DatasetConfig {
  enum class Kind { Idx, XorBits, LinearlySeparable };
  Kind kind = Kind::XorBits;
  // idx
  std::string images;
  std::string labels;
  int limit = 0;  // 0 = whole file
  // synthetic
  int n = 0;
  int d = 0;
  int num_classes = 0;
  std::uint64_t seed = 0;
};

struct SweepConfig {
  std::vector<double> learning_rates;
  std::vector<std::uint64_t> seeds;
};

/// Parsed experiment document. Parsing rejects unknown keys anywhere in the
/// tree, reporting the offending JSON path.
struct ExperimentFile {
  NetworkSpec network;
  trainer::TrainConfig train;
  DatasetConfig dataset;
  std::optional<SweepConfig> sweep;
  std::string out_dir;

  static ExperimentFile parse(const std::string& text);
  static ExperimentFile parse_file(const std::string& path);
  std::string to_json() const;  // resolved snapshot
};

/// Loads the configured dataset; relative IDX paths resolve against
/// data_dir when it is nonempty.
bandit::Dataset load_dataset(const DatasetConfig& config,
                             const std::string& data_dir);

}  // namespace hnca::cli
