#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "hnca/bandit.hpp"
#include "hnca/core.hpp"
#include "hnca/dense_net.hpp"
#include "hnca/stochastic_net.hpp"

namespace hnca::trainer {

struct TrainConfig {
  NetworkSpec network;  // shape; output_mapping ignored by backprop baselines
  Estimator estimator = Estimator::Hnca;
  double learning_rate = 0.01;
  int batch_size = 16;
  int epochs = 1;
  std::uint64_t seed = 0;
  int eval_every = 100;    // batches between metric rows
  int eval_subset = 1000;  // greedy-eval rows (prefix of the split)

  void validate() const;
  std::string run_id() const;
};

/// Parameters went non-finite after an update.
class NanAbortError : public std::runtime_error {
 public:
  NanAbortError(int batch_index, const std::string& what)
      : std::runtime_error(what), batch_index(batch_index) {}
  int batch_index;
};

struct EvalPoint {
  std::int64_t step = 0;  // overall batch count at this row
  double epoch = 0.0;     // fractional epochs of samples consumed
  double sampled_acc = 0.0;  // mean reward of the window since the last row
  double greedy_acc = 0.0;   // mean-field argmax accuracy on the eval subset
  double mean_reward = 0.0;
};

struct RunMetrics {
  std::string run_id;
  Estimator estimator = Estimator::Hnca;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<EvalPoint> points;
  double final_accuracy = 0.0;  // mean reward over the last 10% of samples
  Vec final_params;
  double wall_ms = 0.0;  // not part of the deterministic CSV
};

using RewardFn = std::function<double(int label, int action)>;

/// One seeded training run: per batch, per-element forward samples with
/// streams derived from (seed, step, batch index), gradients averaged across
/// the batch, one ascent update. Fully reproducible from the config.
RunMetrics train(const TrainConfig& config, const bandit::Dataset& dataset,
                 const RewardFn& reward_fn = bandit::reward);

/// Deterministic CSV: schema comment, header, one row per eval point.
void write_metrics_csv(std::ostream& out, const RunMetrics& metrics);

struct SweepCell {
  double lr = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  double final_accuracy = 0.0;
  std::string error;
  std::string run_id;
};

struct LrStats {
  double lr = 0.0;
  int successes = 0;
  double mean = 0.0;
  double std_err = 0.0;
  double ci95 = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<RunMetrics> runs;  // aligned with cells; empty for failed ones
  std::vector<LrStats> stats;
  double best_lr = 0.0;
  double best_mean = 0.0;
  double threshold = 0.0;  // best mean minus its standard error

  std::string to_json() const;
};

/// The best-learning-rate rule: the highest lr whose mean final accuracy is
/// no more than one standard error below the highest mean. Returns the
/// selected lr; `threshold` (optional) receives best mean minus its SE.
double select_best_lr(const std::vector<LrStats>& stats,
                      double* threshold = nullptr, double* best_mean = nullptr);

/// Runs every (lr, seed) cell and applies select_best_lr to the per-lr
/// statistics. Cell failures are recorded, not propagated. Cells may run on
/// up to `parallelism` threads; outputs are independent of the thread count.
SweepResult lr_sweep(const TrainConfig& base, const bandit::Dataset& dataset,
                     const std::vector<double>& lrs,
                     const std::vector<std::uint64_t>& seeds, int parallelism,
                     const RewardFn& reward_fn = bandit::reward);

struct ProbeMoments {
  Vec mean;
  Vec var;  // sample variance over all draws
  std::int64_t samples = 0;
};

/// Frozen-parameter resampling of the gradient estimate: per-parameter
/// empirical mean and variance over `samples` fresh traces per context.
ProbeMoments variance_probe(const StochasticNet& net,
                            const std::vector<Vec>& contexts,
                            const std::vector<int>& labels,
                            Estimator estimator, int samples, RngStream& rng,
                            const RewardFn& reward_fn = bandit::reward);

}  // namespace hnca::trainer
