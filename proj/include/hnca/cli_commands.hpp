#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace hnca::cli {

// Exit codes: 0 ok, 2 config error, 3 numeric abort, 4 verification failure.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerification = 4;

struct RunOptions {
  std::string experiment_path;
  std::string out_dir;  // overrides the experiment file's out_dir
  int parallel = 1;
  std::optional<std::uint64_t> seed_override;
  std::string data_dir;  // dataset root, usually from HNCA_DATA_DIR
};

int cmd_train(const RunOptions& options);
int cmd_sweep(const RunOptions& options);

struct VerifyOptions {
  std::string shape = "3-2-2";  // input-hidden...-classes
  int draws = 100;
  std::uint64_t seed = 1;
  std::string mapping = "alternate";  // zero_one | plus_minus_one | alternate
  std::string out_dir;
  bool raw_child_messages = false;  // negative-control hook
};

int cmd_verify(const VerifyOptions& options);

}  // namespace hnca::cli
