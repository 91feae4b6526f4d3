#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hnca {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Structural / validation failure (bad dimensions, bad config values).
class SpecError : public std::runtime_error {
 public:
  explicit SpecError(const std::string& what) : std::runtime_error(what) {}
};

/// The realized configuration has zero likelihood under the model; signals
/// numerical corruption rather than a recoverable state.
class DegenerateLikelihoodError : public std::runtime_error {
 public:
  explicit DegenerateLikelihoodError(const std::string& what)
      : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Scalar math

/// Numerically stable logistic function, saturates for large |l|.
inline double sigmoid(double l) {
  if (l >= 0.0) {
    return 1.0 / (1.0 + std::exp(-l));
  }
  const double e = std::exp(l);
  return e / (1.0 + e);
}

inline double sigmoid_prime(double l) {
  const double s = sigmoid(l);
  return s * (1.0 - s);
}

/// Max-subtracted softmax; entries are nonnegative and sum to 1.
template <typename Derived>
Vec softmax(const Eigen::MatrixBase<Derived>& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

// ---------------------------------------------------------------------------
// Seeded RNG

/// Deterministic random stream. Identical (seed, stream) pairs produce
/// identical draw sequences across runs and thread placements; substreams
/// are derived from the pair, never from generator state, so derivation
/// order does not matter.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  bool bernoulli(double p_true);

  /// Index draw by CDF inversion over an (unnormalized tolerated) pmf.
  int categorical(const Vec& pmf);

  /// Independent stream keyed off this one's identity.
  RngStream substream(std::uint64_t a, std::uint64_t b = 0) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Network description

enum class OutputMapping { ZeroOne, PlusMinusOne };

inline double high_value(OutputMapping) { return 1.0; }
inline double low_value(OutputMapping m) {
  return m == OutputMapping::ZeroOne ? 0.0 : -1.0;
}

std::string to_string(OutputMapping m);
OutputMapping output_mapping_from_string(const std::string& s);

enum class Estimator {
  Hnca,
  Reinforce,
  BackpropTanh,
  BackpropRelu,
  BackpropSigmoid,
};

std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string& s);

/// Layered description of a stochastic network: Bernoulli hidden layers and
/// one softmax head.
struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden_layers;
  int num_classes = 0;
  OutputMapping output_mapping = OutputMapping::ZeroOne;
  std::uint64_t seed = 0;

  void validate() const;

  std::string to_json() const;
  static NetworkSpec from_json(const std::string& text);
};

/// Parameters of one unit or one stacked layer of units. Bernoulli units use
/// a single row and a single bias entry; a softmax unit uses one row per
/// class. All entries must stay finite.
struct UnitParams {
  Mat W;
  Vec b;

  void validate() const;

  // Bernoulli-unit views.
  Eigen::MatrixXd::ConstRowXpr theta() const { return W.row(0); }
  double bias() const { return b(0); }
};

// ---------------------------------------------------------------------------
// Initialization

/// Half-width of the Glorot uniform interval.
inline double glorot_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

/// One Bernoulli unit: weights uniform in [-bound, +bound], bias zero.
UnitParams glorot_init(int fan_in, int fan_out, RngStream& rng);

/// A stacked layer of `rows` units over `fan_in` parents, drawn row-major.
/// The Glorot bound uses (fan_in, fan_out); for a dense layer fan_out is the
/// layer width, which may differ from `rows` only for the softmax head.
UnitParams glorot_init_layer(int rows, int fan_in, int fan_out, RngStream& rng);

}  // namespace hnca
