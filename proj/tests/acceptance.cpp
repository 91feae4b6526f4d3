// Acceptance suite: one criterion per invocation (argv[1] in 1..10), one
// [PASS]/[FAIL] line per criterion. Criteria 7-10 run the desk-scale MNIST
// protocol when $HNCA_DATA_DIR holds the IDX files; otherwise they execute
// the identical protocol on the bundled real-digits surrogate and report
// [SKIP] so the as-stated criterion is not claimed.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hnca/oracle.hpp"
#include "hnca/trainer.hpp"

using namespace hnca;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion
            << ": " << detail << std::endl;
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct VerifySets {
  oracle::VerifySummary small;  // 100 nets of 3-2-2
  oracle::VerifySummary deep;   // 20 nets of 4-3-3-3
  double seconds = 0.0;
};

VerifySets run_verify_sets() {
  VerifySets sets;
  const auto t0 = std::chrono::steady_clock::now();
  sets.small = oracle::verify_random_nets(3, {2}, 2, 100, 1000,
                                          oracle::MappingPolicy::Alternate);
  sets.deep = oracle::verify_random_nets(4, {3, 3}, 3, 20, 2000,
                                         oracle::MappingPolicy::Alternate);
  sets.seconds = seconds_since(t0);
  return sets;
}

void criterion1() {
  VerifySets sets = run_verify_sets();
  const int bad = sets.small.count("unbiasedness") +
                  sets.deep.count("unbiasedness");
  std::ostringstream detail;
  detail << "estimator means vs exact gradient on 120 nets, max err "
         << std::max(sets.small.max_unbiased_err, sets.deep.max_unbiased_err)
         << " (tol 1e-6+1e-6rel), " << sets.seconds << " s";
  report(1, bad == 0 && sets.seconds < 30.0, detail.str());
}

void criterion2() {
  VerifySets sets = run_verify_sets();
  const int bad = sets.small.count("theorem1") + sets.deep.count("theorem1");
  std::ostringstream detail;
  detail << "Var(Q_hnca|b) <= Var(Q_re|b) at every (unit, b, phi), max gap "
         << std::max(sets.small.max_theorem1_gap, sets.deep.max_theorem1_gap)
         << " (tol 1e-12), " << sets.seconds << " s";
  report(2, bad == 0 && sets.seconds < 60.0, detail.str());
}

void criterion3() {
  VerifySets sets = run_verify_sets();
  const int bad_cov =
      sets.small.count("covariance") + sets.deep.count("covariance");
  const int bad_var =
      sets.small.count("grad_variance") + sets.deep.count("grad_variance");
  std::ostringstream detail;
  detail << "covariance ordering (max gap "
         << std::max(sets.small.max_cov_gap, sets.deep.max_cov_gap)
         << ") and per-parameter gradient variance ordering (max gap "
         << std::max(sets.small.max_grad_var_gap, sets.deep.max_grad_var_gap)
         << "), tol 1e-12";
  report(3, bad_cov == 0 && bad_var == 0, detail.str());
}

void criterion4() {
  VerifySets sets = run_verify_sets();
  const int bad = sets.small.count("total_variance");
  std::ostringstream detail;
  detail << "Var_re - Var_hnca equals the Markov-blanket variance term, "
            "max err "
         << sets.small.max_total_variance_err << " (tol 1e-10); deep-set err "
         << sets.deep.max_total_variance_err;
  report(4, bad == 0, detail.str());
}

void criterion5() {
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.hidden_layers = {2};
  spec.num_classes = 2;
  spec.output_mapping = OutputMapping::PlusMinusOne;
  spec.seed = 424;
  StochasticNet net(spec);
  Vec ctx(3);
  ctx << 1.0, 0.0, 1.0;
  const auto reward = [](int cls) { return cls == 0 ? 1.0 : 0.0; };
  const int samples = 100000;

  bool ok = true;
  double worst_sigma = 0.0;
  for (Estimator est : {Estimator::Reinforce, Estimator::Hnca}) {
    const oracle::EstimatorMoments exact =
        oracle::exact_estimator_moments(net, ctx, reward, est);
    RngStream rng(99, static_cast<std::uint64_t>(est));
    const trainer::ProbeMoments probe =
        trainer::variance_probe(net, {ctx}, {0}, est, samples, rng);
    for (int i = 0; i < probe.mean.size(); ++i) {
      const double se_mean = std::sqrt(exact.grad.var(i) / samples);
      const double mean_err = std::abs(probe.mean(i) - exact.grad.mean(i));
      if (mean_err > 5.0 * se_mean + 1e-12) ok = false;
      if (se_mean > 0) worst_sigma = std::max(worst_sigma, mean_err / se_mean);

      const double var_var =
          std::max(0.0, exact.grad.m4(i) -
                            exact.grad.var(i) * exact.grad.var(i));
      const double se_var = std::sqrt(var_var / samples);
      const double var_err = std::abs(probe.var(i) - exact.grad.var(i));
      if (var_err > 5.0 * se_var + 1e-12) ok = false;
      if (se_var > 0) worst_sigma = std::max(worst_sigma, var_err / se_var);
    }
  }
  std::ostringstream detail;
  detail << "probe moments at 1e5 samples within 5 standard errors of exact "
            "moments for both estimators (worst deviation "
         << worst_sigma << " se)";
  report(5, ok, detail.str());
}

void criterion6() {
  double min_ratio = 1e300, max_ratio = 0.0;
  std::ostringstream ratios;
  for (int width : {8, 16, 32, 64}) {
    NetworkSpec spec;
    spec.input_dim = 16;
    spec.hidden_layers = {width, width};
    spec.num_classes = 10;
    spec.output_mapping = OutputMapping::PlusMinusOne;
    spec.seed = 6;
    StochasticNet net(spec);
    Vec ctx = Vec::Constant(16, 0.5);
    RngStream rng(7, 0);
    NetworkTrace trace = network_forward(net, ctx, rng);
    OpCounter counter;
    network_backward(net, trace, 1.0, Estimator::Hnca, &counter);
    const double ratio =
        static_cast<double>(counter.madds) / net.parameter_count();
    ratios << " w" << width << "=" << ratio;
    min_ratio = std::min(min_ratio, ratio);
    max_ratio = std::max(max_ratio, ratio);
  }
  std::ostringstream detail;
  detail << "multiply-adds per parameter across widths {8,16,32,64}:"
         << ratios.str() << "; max/min = " << max_ratio / min_ratio
         << " < 2";
  report(6, max_ratio / min_ratio < 2.0, detail.str());
}

// ---------------------------------------------------------------------------
// Desk-scale experiment protocol (criteria 7-10)

struct Protocol {
  bandit::Dataset data;
  NetworkSpec shape;  // mapping set per sweep
  int epochs = 5;
  bool is_mnist = false;
  std::string label;
};

std::optional<std::string> find_file(const std::string& dir,
                                     const std::vector<std::string>& names) {
  for (const auto& name : names) {
    const std::string path = dir + "/" + name;
    if (std::filesystem::exists(path)) return path;
  }
  return std::nullopt;
}

std::optional<Protocol> load_mnist_protocol() {
  const char* env = std::getenv("HNCA_DATA_DIR");
  if (env == nullptr) return std::nullopt;
  const auto images = find_file(
      env, {"train-images-idx3-ubyte", "train-images-idx3-ubyte.gz",
            "train-images.idx3-ubyte", "train-images.idx3-ubyte.gz"});
  const auto labels = find_file(
      env, {"train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz",
            "train-labels.idx1-ubyte", "train-labels.idx1-ubyte.gz"});
  if (!images.has_value() || !labels.has_value()) return std::nullopt;
  Protocol p;
  p.data = bandit::subset(bandit::load_idx(*images, *labels), 10000);
  p.shape.input_dim = p.data.dim();
  p.shape.hidden_layers = {64};
  p.shape.num_classes = 10;
  p.epochs = 5;
  p.is_mnist = true;
  p.label = "mnist-10k";
  return p;
}

Protocol load_surrogate_protocol() {
  const std::string dir = HNCA_TEST_DATA_DIR;
  Protocol p;
  p.data = bandit::load_idx(dir + "/digits-images-idx3-ubyte.gz",
                            dir + "/digits-labels-idx1-ubyte.gz");
  p.shape.input_dim = p.data.dim();
  p.shape.hidden_layers = {64};
  p.shape.num_classes = 10;
  // ~27 epochs of 1797 samples matches the update count of 5 MNIST epochs.
  p.epochs = 27;
  p.is_mnist = false;
  p.label = "digits-surrogate";
  return p;
}

Protocol load_protocol() {
  if (auto p = load_mnist_protocol()) return *p;
  return load_surrogate_protocol();
}

const std::vector<double> kSweepLrs{1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8,
                                    1.0 / 4};
const std::vector<std::uint64_t> kSweepSeeds{1, 2, 3};

trainer::TrainConfig protocol_config(const Protocol& p, Estimator est,
                                     OutputMapping mapping) {
  trainer::TrainConfig config;
  config.network = p.shape;
  config.network.output_mapping = mapping;
  config.network.seed = 97;
  config.estimator = est;
  config.batch_size = 16;
  config.epochs = p.epochs;
  config.eval_every = 50;
  config.eval_subset = 1000;
  return config;
}

trainer::SweepResult run_sweep(const Protocol& p, Estimator est,
                               OutputMapping mapping, int parallelism = 2) {
  return trainer::lr_sweep(protocol_config(p, est, mapping), p.data,
                           kSweepLrs, kSweepSeeds, parallelism);
}

double mean_at_best(const trainer::SweepResult& sweep) {
  for (const auto& s : sweep.stats) {
    if (s.lr == sweep.best_lr) return s.mean;
  }
  return 0.0;
}

// Prints the result or the surrogate-skip line; `pass` reflects the check on
// whichever dataset actually ran.
void report_desk(int criterion, bool is_mnist, bool pass,
                 const std::string& detail) {
  if (is_mnist) {
    report(criterion, pass, detail);
    return;
  }
  if (pass) {
    std::cout << "[SKIP] criterion " << criterion
              << ": MNIST IDX files not present under $HNCA_DATA_DIR; the "
                 "identical protocol on the bundled real-digits surrogate "
                 "passed ("
              << detail << ")" << std::endl;
  } else {
    report(criterion, false, "surrogate protocol failed: " + detail);
  }
}

void criterion7() {
  const Protocol p = load_protocol();
  const auto t0 = std::chrono::steady_clock::now();
  const auto hnca = run_sweep(p, Estimator::Hnca, OutputMapping::PlusMinusOne);
  const auto re =
      run_sweep(p, Estimator::Reinforce, OutputMapping::PlusMinusOne);
  const double secs = seconds_since(t0);

  const double hnca_acc = mean_at_best(hnca);
  const double re_acc = mean_at_best(re);
  const bool acc_ok = hnca_acc >= re_acc - 0.01;
  const bool lr_ok = hnca.best_lr >= re.best_lr;
  const bool time_ok = !p.is_mnist || secs <= 900.0;
  std::ostringstream detail;
  detail << p.label << ": hnca best lr " << hnca.best_lr << " acc " << hnca_acc
         << " vs reinforce best lr " << re.best_lr << " acc " << re_acc
         << ", " << secs << " s";
  report_desk(7, p.is_mnist, acc_ok && lr_ok && time_ok, detail.str());
}

void criterion8() {
  const Protocol p = load_protocol();
  const auto pm = run_sweep(p, Estimator::Hnca, OutputMapping::PlusMinusOne);
  const auto zo = run_sweep(p, Estimator::Hnca, OutputMapping::ZeroOne);
  const double pm_acc = mean_at_best(pm);
  const double zo_acc = mean_at_best(zo);
  std::ostringstream detail;
  detail << p.label << ": plus-minus-one best-lr acc " << pm_acc
         << " vs zero-one " << zo_acc << " (tolerance -0.01)";
  report_desk(8, p.is_mnist, pm_acc >= zo_acc - 0.01, detail.str());
}

void criterion9() {
  // Finite-difference check of the dense policy gradient at 1e-5.
  bool fd_ok = true;
  {
    DenseNet net(4, {2, 2}, 3, Activation::Relu, 77);
    Vec ctx(4);
    ctx << 0.9, 0.1, 0.4, 0.7;
    RngStream rng(8, 0);
    DenseTrace t = dense_forward(net, ctx, rng);
    const Vec grad = dense_policy_gradient(net, t, 1.0).flatten();
    for (int i = 0; i < net.parameter_count(); ++i) {
      DenseNet plus = net, minus = net;
      plus.nudge_parameter(i, 1e-5);
      minus.nudge_parameter(i, -1e-5);
      RngStream r2(0, 0);
      const double lp =
          std::log(dense_forward(plus, ctx, r2).head.p(t.head.phi));
      const double lm =
          std::log(dense_forward(minus, ctx, r2).head.p(t.head.phi));
      const double fd = (lp - lm) / 2e-5;
      if (std::abs(fd - grad(i)) > 1e-5 * (1.0 + std::abs(fd))) fd_ok = false;
    }
  }

  const Protocol p = load_protocol();
  const auto relu =
      run_sweep(p, Estimator::BackpropRelu, OutputMapping::PlusMinusOne);
  const auto tanh_sweep =
      run_sweep(p, Estimator::BackpropTanh, OutputMapping::PlusMinusOne);
  const double relu_acc = mean_at_best(relu);
  const double tanh_acc = mean_at_best(tanh_sweep);
  const bool acc_ok = relu_acc > 0.5 && tanh_acc > 0.5;
  std::ostringstream detail;
  detail << p.label << ": relu best-lr acc " << relu_acc << ", tanh "
         << tanh_acc << " (both > 0.5); dense gradient matches finite "
         << "differences at 1e-5: " << (fd_ok ? "yes" : "no");
  report_desk(9, p.is_mnist, acc_ok && fd_ok, detail.str());
}

std::string sweep_csvs(const trainer::SweepResult& sweep) {
  std::ostringstream all;
  for (std::size_t i = 0; i < sweep.cells.size(); ++i) {
    if (!sweep.cells[i].ok) continue;
    all << "=== " << sweep.cells[i].run_id << "\n";
    trainer::write_metrics_csv(all, sweep.runs[i]);
  }
  return all.str();
}

void criterion10() {
  const Protocol p = load_protocol();
  std::string first;
  bool identical = true;
  for (int parallelism : {1, 3}) {
    const auto hnca =
        run_sweep(p, Estimator::Hnca, OutputMapping::PlusMinusOne,
                  parallelism);
    const auto re =
        run_sweep(p, Estimator::Reinforce, OutputMapping::PlusMinusOne,
                  parallelism);
    const std::string bytes = sweep_csvs(hnca) + sweep_csvs(re);
    if (first.empty()) {
      first = bytes;
    } else if (bytes != first) {
      identical = false;
    }
  }
  std::ostringstream detail;
  detail << p.label
         << ": metric CSVs byte-identical across parallelism degrees {1, 3}";
  report_desk(10, p.is_mnist, identical && !first.empty(), detail.str());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: hnca_acceptance <criterion 1-10>\n";
    return 2;
  }
  const int criterion = std::atoi(argv[1]);
  switch (criterion) {
    case 1: criterion1(); break;
    case 2: criterion2(); break;
    case 3: criterion3(); break;
    case 4: criterion4(); break;
    case 5: criterion5(); break;
    case 6: criterion6(); break;
    case 7: criterion7(); break;
    case 8: criterion8(); break;
    case 9: criterion9(); break;
    case 10: criterion10(); break;
    default:
      std::cerr << "unknown criterion " << criterion << "\n";
      return 2;
  }
  return g_failures == 0 ? 0 : 1;
}
