#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hnca/core.hpp"
#include "hnca/stochastic_net.hpp"

namespace hnca::oracle {

/// Deterministic reward of an emitted class for a fixed context.
using RewardFn = std::function<double(int)>;

/// Hard cap on enumerable hidden units (2^20 configurations).
constexpr int kMaxHiddenUnits = 20;

class SizeCapError : public SpecError {
 public:
  explicit SizeCapError(const std::string& what) : SpecError(what) {}
};

class UnreachableConfigError : public SpecError {
 public:
  explicit UnreachableConfigError(const std::string& what) : SpecError(what) {}
};

/// Exact E[R]: sums P(config) * P(class | config) * R(class) over every
/// hidden configuration and output class.
double enumerate_expected_reward(const StochasticNet& net, const Vec& context,
                                 const RewardFn& reward);

/// Central finite differences of enumerate_expected_reward, one entry per
/// flat parameter.
Vec exact_gradient_fd(const StochasticNet& net, const Vec& context,
                      const RewardFn& reward, double step);

/// Exact Q(phi, b) = E[R | parents = b, unit output = phi] for a hidden unit
/// (phi: 0 = low, 1 = high) or the softmax head (layer == hidden layer
/// count, phi = class). parent_bits packs the parent layer's outputs, bit i
/// = unit i high; it is 0 for first-hidden-layer units, whose parents are
/// the fixed context. Throws UnreachableConfigError when P(b) = 0.
double exact_q(const StochasticNet& net, int layer, int unit,
               std::uint64_t parent_bits, int phi, const Vec& context,
               const RewardFn& reward);

/// Conditional moments of the action-value estimator of one hidden unit
/// given one reachable parent configuration.
struct UnitConfigMoments {
  int layer = 0;
  int unit = 0;
  std::uint64_t parent_bits = 0;
  double prob_b = 0.0;  // P(parents = b)
  double mean_high = 0.0, mean_low = 0.0;
  double var_high = 0.0, var_low = 0.0;
  double cov_high_low = 0.0;
  // E[Var(Q_hat(phi) | children, siblings, R) | b]; the Markov-blanket term
  // of the law-of-total-variance decomposition.
  double mb_expected_var_high = 0.0, mb_expected_var_low = 0.0;
};

struct GradientMoments {
  Vec mean;  // per flat parameter, full joint at the fixed context
  Vec var;
  Vec m4;  // fourth central moment, for standard errors of sample variances
};

struct EstimatorMoments {
  Estimator tag = Estimator::Hnca;
  std::vector<UnitConfigMoments> configs;
  GradientMoments grad;
  double prob_mass = 0.0;  // total enumerated probability, should be 1
};

/// Enumerates every joint outcome and evaluates the chosen estimator with
/// the production backward pass on each forced trace.
EstimatorMoments exact_estimator_moments(const StochasticNet& net,
                                         const Vec& context,
                                         const RewardFn& reward,
                                         Estimator estimator);

struct QEntry {
  int layer = 0;
  int unit = 0;
  std::uint64_t parent_bits = 0;
  int phi = 0;
  double q = 0.0;
};

/// Full enumeration report for one network and context.
struct OracleReport {
  double expected_reward = 0.0;
  Vec exact_grad;
  std::vector<QEntry> q_table;
  EstimatorMoments re;
  EstimatorMoments hnca;

  std::string to_json() const;
};

OracleReport oracle_report(const StochasticNet& net, const Vec& context,
                           const RewardFn& reward, double fd_step = 1e-4);

// ---------------------------------------------------------------------------
// Randomized exact verification over many nets

struct VerifyTolerances {
  double unbiased_abs = 1e-6;
  double unbiased_rel = 1e-6;
  double theorem1 = 1e-12;
  double covariance = 1e-12;
  double grad_var = 1e-12;
  double total_variance = 1e-10;
  double fd_step = 1e-4;
};

struct VerifyViolation {
  std::string check;
  std::uint64_t net_seed = 0;
  std::string where;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct VerifySummary {
  int draws = 0;
  int violation_count = 0;
  std::vector<VerifyViolation> violations;  // first few, for diagnostics
  std::map<std::string, int> by_check;
  double max_unbiased_err = 0.0;
  double max_theorem1_gap = 0.0;
  double max_cov_gap = 0.0;
  double max_grad_var_gap = 0.0;
  double max_total_variance_err = 0.0;

  bool ok() const { return violation_count == 0; }
  int count(const std::string& check_prefix) const;
  std::string to_json() const;
};

enum class MappingPolicy { ZeroOne, PlusMinusOne, Alternate };

/// Runs the unbiasedness, action-value variance ordering, covariance
/// ordering, per-parameter gradient variance ordering, and law-of-total-
/// variance checks on `draws` Glorot-initialized nets with random binary
/// contexts and reward = indicator(class 0).
VerifySummary verify_random_nets(int input_dim,
                                 const std::vector<int>& hidden_layers,
                                 int num_classes, int draws,
                                 std::uint64_t seed, MappingPolicy mapping,
                                 const VerifyTolerances& tol = {});

}  // namespace hnca::oracle
