#pragma once

#include <string>
#include <vector>

#include "hnca/core.hpp"

namespace hnca::bandit {

class IdxError : public SpecError {
 public:
  using SpecError::SpecError;
};
class IdxBadMagicError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxTruncatedError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxCountMismatchError : public IdxError {
 public:
  using IdxError::IdxError;
};

/// Classification dataset viewed as a contextual bandit: features in [0,1],
/// one hidden label per row.
struct Dataset {
  Mat contexts;  // n x d
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  int size() const { return static_cast<int>(contexts.rows()); }
  int dim() const { return static_cast<int>(contexts.cols()); }
  void validate() const;
};

/// Loads a standard big-endian IDX image/label pair. Paths ending in .gz are
/// inflated transparently. Pixels are scaled by 1/255 into [0,1].
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

/// Writes the dataset as an IDX pair (one row of d pixels per image);
/// feature values are quantized back to bytes. Paths ending in .gz are
/// gzip-compressed.
void write_idx(const Dataset& dataset, const std::string& images_path,
               const std::string& labels_path);

Dataset subset(const Dataset& dataset, int n);

/// 1 iff the chosen action equals the hidden label.
inline double reward(int label, int action) {
  return label == action ? 1.0 : 0.0;
}

enum class SyntheticKind { XorBits, LinearlySeparable };

/// Deterministic synthetic fixtures. XorBits labels by the parity of the
/// first two binarized features; LinearlySeparable labels by the argmax of
/// a fixed random linear map, so it is solvable exactly by construction.
/// Features land on the 1/255 grid so IDX round-trips are lossless.
Dataset synthetic_dataset(SyntheticKind kind, int n, int d, int num_classes,
                          RngStream& rng);

/// One epoch of index batches: a fresh shuffle of [0, n) chunked into
/// batch_size groups, final partial batch kept.
std::vector<std::vector<int>> epoch_batches(int n, int batch_size,
                                            RngStream& rng);

}  // namespace hnca::bandit
