#include "hnca/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>

namespace hnca::trainer {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

bool is_stochastic(Estimator e) {
  return e == Estimator::Hnca || e == Estimator::Reinforce;
}

int argmax(const Vec& v) {
  int best = 0;
  v.maxCoeff(&best);
  return best;
}

}  // namespace

void TrainConfig::validate() const {
  network.validate();
  // The zero rate is allowed so no-op runs can serve as controls.
  if (!(learning_rate >= 0.0)) throw SpecError("learning_rate must be >= 0");
  if (batch_size < 1) throw SpecError("batch_size must be >= 1");
  if (epochs < 1) throw SpecError("epochs must be >= 1");
  if (eval_every < 1) throw SpecError("eval_every must be >= 1");
  if (eval_subset < 1) throw SpecError("eval_subset must be >= 1");
}

std::string TrainConfig::run_id() const {
  return to_string(estimator) + "_lr" + format_double(learning_rate) +
         "_seed" + std::to_string(seed);
}

namespace {

// Everything needed per element, shared between the two model families.
struct StochasticRun {
  StochasticNet net;

  explicit StochasticRun(const TrainConfig& config) : net(config.network) {}

  GradientEstimate element(const TrainConfig& config, const Vec& context,
                           int label, RngStream rng, const RewardFn& reward_fn,
                           double* reward_out) {
    NetworkTrace trace = network_forward(net, context, rng);
    const double r = reward_fn(label, trace.sampled_class());
    *reward_out = r;
    return network_backward(net, trace, r, config.estimator).grad;
  }

  double greedy_accuracy(const bandit::Dataset& data, int subset) const {
    const int n = std::min(subset, data.size());
    int hits = 0;
    for (int i = 0; i < n; ++i) {
      const Vec p = network_mean_field(net, data.contexts.row(i).transpose());
      if (argmax(p) == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / n;
  }
};

struct DenseRun {
  DenseNet net;

  explicit DenseRun(const TrainConfig& config)
      : net(config.network.input_dim, config.network.hidden_layers,
            config.network.num_classes, activation_for(config.estimator),
            config.network.seed) {}

  DenseGradient element(const Vec& context, int label, RngStream rng,
                        const RewardFn& reward_fn, double* reward_out) {
    DenseTrace trace = dense_forward(net, context, rng);
    const double r = reward_fn(label, trace.sampled_class());
    *reward_out = r;
    return dense_policy_gradient(net, trace, r);
  }

  double greedy_accuracy(const bandit::Dataset& data, int subset,
                         RngStream rng) const {
    const int n = std::min(subset, data.size());
    int hits = 0;
    for (int i = 0; i < n; ++i) {
      // Hidden pass is deterministic; greedy means argmax at the head.
      DenseTrace trace =
          dense_forward(net, data.contexts.row(i).transpose(), rng);
      if (argmax(trace.head.p) == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / n;
  }
};

}  // namespace

RunMetrics train(const TrainConfig& config, const bandit::Dataset& dataset,
                 const RewardFn& reward_fn) {
  config.validate();
  dataset.validate();
  if (dataset.dim() != config.network.input_dim) {
    throw SpecError("dataset dimension does not match network input_dim");
  }
  if (dataset.num_classes != config.network.num_classes) {
    throw SpecError("dataset classes do not match network num_classes");
  }
  const auto t0 = std::chrono::steady_clock::now();

  RunMetrics metrics;
  metrics.run_id = config.run_id();
  metrics.estimator = config.estimator;
  metrics.learning_rate = config.learning_rate;
  metrics.seed = config.seed;

  const bool stochastic = is_stochastic(config.estimator);
  std::optional<StochasticRun> srun;
  std::optional<DenseRun> drun;
  if (stochastic) {
    srun.emplace(config);
  } else {
    drun.emplace(config);
  }

  RngStream base(config.seed, 0);
  const int n = dataset.size();
  std::vector<double> rewards;
  rewards.reserve(static_cast<std::size_t>(n) * config.epochs);

  double window_sum = 0.0;
  std::int64_t window_count = 0;
  std::int64_t step = 0;
  const std::int64_t total_batches =
      static_cast<std::int64_t>(config.epochs) *
      ((n + config.batch_size - 1) / config.batch_size);

  auto log_point = [&](std::int64_t at_step) {
    EvalPoint pt;
    pt.step = at_step;
    pt.epoch = static_cast<double>(rewards.size()) / n;
    pt.sampled_acc = window_count > 0 ? window_sum / window_count : 0.0;
    pt.mean_reward = pt.sampled_acc;
    if (stochastic) {
      pt.greedy_acc = srun->greedy_accuracy(dataset, config.eval_subset);
    } else {
      pt.greedy_acc = drun->greedy_accuracy(dataset, config.eval_subset,
                                            base.substream(4, at_step));
    }
    metrics.points.push_back(pt);
    window_sum = 0.0;
    window_count = 0;
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream shuffle_rng = base.substream(3, epoch);
    const auto batches =
        bandit::epoch_batches(n, config.batch_size, shuffle_rng);
    for (const auto& batch : batches) {
      if (stochastic) {
        GradientEstimate sum = GradientEstimate::zeros_like(
            srun->net, config.estimator);
        for (std::size_t idx = 0; idx < batch.size(); ++idx) {
          const int row = batch[idx];
          double r = 0.0;
          sum.accumulate(srun->element(
              config, dataset.contexts.row(row).transpose(),
              dataset.labels[row], base.substream(1000 + step, idx),
              reward_fn, &r));
          rewards.push_back(r);
          window_sum += r;
          ++window_count;
        }
        sum.scale(1.0 / static_cast<double>(batch.size()));
        apply_ascent(srun->net, sum, config.learning_rate);
        if (!srun->net.parameters_finite()) {
          throw NanAbortError(static_cast<int>(step),
                              "non-finite parameters after batch " +
                                  std::to_string(step));
        }
      } else {
        DenseGradient sum = DenseGradient::zeros_like(drun->net);
        for (std::size_t idx = 0; idx < batch.size(); ++idx) {
          const int row = batch[idx];
          double r = 0.0;
          sum.accumulate(drun->element(
              dataset.contexts.row(row).transpose(), dataset.labels[row],
              base.substream(1000 + step, idx), reward_fn, &r));
          rewards.push_back(r);
          window_sum += r;
          ++window_count;
        }
        sum.scale(1.0 / static_cast<double>(batch.size()));
        apply_ascent(drun->net, sum, config.learning_rate);
        if (!drun->net.parameters_finite()) {
          throw NanAbortError(static_cast<int>(step),
                              "non-finite parameters after batch " +
                                  std::to_string(step));
        }
      }
      ++step;
      if (step % config.eval_every == 0 || step == total_batches) {
        log_point(step);
      }
    }
  }

  const std::size_t tail = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(rewards.size() * 0.10)));
  double tail_sum = 0.0;
  for (std::size_t i = rewards.size() - tail; i < rewards.size(); ++i) {
    tail_sum += rewards[i];
  }
  metrics.final_accuracy = tail_sum / static_cast<double>(tail);
  metrics.final_params = stochastic ? srun->net.flatten_parameters()
                                    : drun->net.flatten_parameters();
  metrics.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  return metrics;
}

void write_metrics_csv(std::ostream& out, const RunMetrics& metrics) {
  out << "# hnca-metrics-v1\n";
  out << "run_id,estimator,lr,seed,step,epoch,sampled_acc,greedy_acc,"
         "mean_reward\n";
  for (const auto& pt : metrics.points) {
    out << metrics.run_id << ',' << to_string(metrics.estimator) << ','
        << format_double(metrics.learning_rate) << ',' << metrics.seed << ','
        << pt.step << ',' << format_double(pt.epoch) << ','
        << format_double(pt.sampled_acc) << ','
        << format_double(pt.greedy_acc) << ','
        << format_double(pt.mean_reward) << '\n';
  }
}

SweepResult lr_sweep(const TrainConfig& base, const bandit::Dataset& dataset,
                     const std::vector<double>& lrs,
                     const std::vector<std::uint64_t>& seeds, int parallelism,
                     const RewardFn& reward_fn) {
  if (seeds.size() < 2) throw SpecError("sweep requires at least 2 seeds");
  if (lrs.empty()) throw SpecError("sweep requires at least 1 learning rate");
  for (std::size_t i = 1; i < lrs.size(); ++i) {
    if (lrs[i] <= lrs[i - 1]) {
      throw SpecError("learning rates must be sorted ascending");
    }
  }
  SweepResult result;
  result.cells.resize(lrs.size() * seeds.size());
  result.runs.resize(result.cells.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t cell = next.fetch_add(1);
      if (cell >= result.cells.size()) return;
      const double lr = lrs[cell / seeds.size()];
      const std::uint64_t seed = seeds[cell % seeds.size()];
      TrainConfig config = base;
      config.learning_rate = lr;
      config.seed = seed;
      SweepCell& out = result.cells[cell];
      out.lr = lr;
      out.seed = seed;
      out.run_id = config.run_id();
      try {
        result.runs[cell] = train(config, dataset, reward_fn);
        out.ok = true;
        out.final_accuracy = result.runs[cell].final_accuracy;
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
      }
    }
  };
  const int threads = std::max(1, parallelism);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Per-lr statistics over successful seeds.
  for (std::size_t li = 0; li < lrs.size(); ++li) {
    LrStats stats;
    stats.lr = lrs[li];
    double sum = 0.0;
    std::vector<double> vals;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const SweepCell& cell = result.cells[li * seeds.size() + si];
      if (cell.ok) {
        vals.push_back(cell.final_accuracy);
        sum += cell.final_accuracy;
      }
    }
    stats.successes = static_cast<int>(vals.size());
    if (!vals.empty()) {
      stats.mean = sum / vals.size();
      if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - stats.mean) * (v - stats.mean);
        const double sd = std::sqrt(ss / (vals.size() - 1));
        stats.std_err = sd / std::sqrt(static_cast<double>(vals.size()));
        stats.ci95 = 1.96 * stats.std_err;
      }
    }
    result.stats.push_back(stats);
  }

  result.best_lr =
      select_best_lr(result.stats, &result.threshold, &result.best_mean);
  return result;
}

double select_best_lr(const std::vector<LrStats>& stats, double* threshold,
                      double* best_mean) {
  int best_mean_idx = -1;
  for (std::size_t li = 0; li < stats.size(); ++li) {
    if (stats[li].successes == 0) continue;
    if (best_mean_idx < 0 || stats[li].mean >= stats[best_mean_idx].mean) {
      best_mean_idx = static_cast<int>(li);
    }
  }
  if (best_mean_idx < 0) throw SpecError("every sweep cell failed");
  const double cut =
      stats[best_mean_idx].mean - stats[best_mean_idx].std_err;
  if (threshold != nullptr) *threshold = cut;
  if (best_mean != nullptr) *best_mean = stats[best_mean_idx].mean;
  double selected = stats[best_mean_idx].lr;
  for (const LrStats& s : stats) {
    if (s.successes > 0 && s.mean >= cut) selected = std::max(selected, s.lr);
  }
  return selected;
}

std::string SweepResult::to_json() const {
  nlohmann::json j;
  j["rule"] = "highest lr with mean final accuracy within one standard error "
              "of the best mean";
  j["best_lr"] = best_lr;
  j["best_mean"] = best_mean;
  j["threshold"] = threshold;
  nlohmann::json stats_json = nlohmann::json::array();
  for (const auto& s : stats) {
    stats_json.push_back({{"lr", s.lr},
                          {"successes", s.successes},
                          {"mean", s.mean},
                          {"std_err", s.std_err},
                          {"ci95", s.ci95}});
  }
  j["per_lr"] = stats_json;
  nlohmann::json cells_json = nlohmann::json::array();
  for (const auto& c : cells) {
    cells_json.push_back({{"lr", c.lr},
                          {"seed", c.seed},
                          {"ok", c.ok},
                          {"final_accuracy", c.final_accuracy},
                          {"error", c.error},
                          {"run_id", c.run_id}});
  }
  j["cells"] = cells_json;
  return j.dump(2);
}

ProbeMoments variance_probe(const StochasticNet& net,
                            const std::vector<Vec>& contexts,
                            const std::vector<int>& labels,
                            Estimator estimator, int samples, RngStream& rng,
                            const RewardFn& reward_fn) {
  if (samples < 100) throw SpecError("variance probe requires samples >= 100");
  if (contexts.size() != labels.size() || contexts.empty()) {
    throw SpecError("contexts and labels must align and be nonempty");
  }
  const int n_params = net.parameter_count();
  ProbeMoments out;
  out.mean = Vec::Zero(n_params);
  Vec m2 = Vec::Zero(n_params);
  std::int64_t count = 0;
  for (int s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      RngStream draw = rng.substream(s, i);
      NetworkTrace trace = network_forward(net, contexts[i], draw);
      const double r = reward_fn(labels[i], trace.sampled_class());
      const Vec g = network_backward(net, trace, r, estimator).grad.flatten();
      ++count;
      const Vec delta = g - out.mean;
      out.mean += delta / static_cast<double>(count);
      m2.array() += delta.array() * (g - out.mean).array();
    }
  }
  out.samples = count;
  out.var = m2 / static_cast<double>(count - 1);
  return out;
}

}  // namespace hnca::trainer
