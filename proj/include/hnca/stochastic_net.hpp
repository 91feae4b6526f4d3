#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hnca/core.hpp"

namespace hnca {

// ---------------------------------------------------------------------------
// Per-unit state and message types

struct BernoulliUnitState {
  Vec x;         // realized parent values
  double logit = 0.0;
  double p = 0.0;      // fire probability
  double phi = 0.0;    // realized output, high_value or low_value of mapping
  OutputMapping mapping = OutputMapping::ZeroOne;

  bool is_high() const { return phi == high_value(mapping); }
};

struct SoftmaxUnitState {
  Vec x;          // realized parent values
  Vec logits;
  Vec p;          // class distribution
  int phi = 0;    // sampled class
  OutputMapping mapping = OutputMapping::ZeroOne;  // mapping of parent units
};

/// Counterfactual likelihood pair for one child->parent edge: the likelihood
/// of the child's realized output had this parent been high (q1) or low (q0).
struct BackwardMessage {
  double q1 = 1.0;
  double q0 = 1.0;
  double reward = 0.0;
};

/// Product-over-children credit terms of one hidden unit. ratio, weight_high
/// and weight_low are the numerically stable forms of (q1-q0)/q_bar, q1/q_bar
/// and q0/q_bar; they stay accurate when the raw products underflow.
struct CreditEstimate {
  double q1_prod = 1.0;
  double q0_prod = 1.0;
  double q_bar = 1.0;
  double ratio = 0.0;
  double weight_high = 1.0;
  double weight_low = 1.0;
};

/// Combines per-child counterfactual likelihoods into the unit's credit.
/// Products switch to log space above 32 children to avoid underflow.
/// Throws DegenerateLikelihoodError when q_bar is zero.
CreditEstimate make_credit(double p, const Vec& q1s, const Vec& q0s);
CreditEstimate make_credit(double p, const std::vector<BackwardMessage>& msgs);

/// Likelihood of the realized output: p_high if the unit fired, else 1-p_high.
inline double realized_likelihood(double p_high, bool fired) {
  return fired ? p_high : 1.0 - p_high;
}

// ---------------------------------------------------------------------------
// Unit-level operations

BernoulliUnitState bernoulli_forward(const UnitParams& params, const Vec& x,
                                     OutputMapping mapping, RngStream& rng);

/// Per-parent fire probabilities had parent j been fixed high (p1) or low
/// (p0). Reuses the forward logit; cost is linear in the parent count.
struct Counterfactuals {
  Vec p1;
  Vec p0;
};
Counterfactuals bernoulli_counterfactuals(const BernoulliUnitState& state,
                                          const UnitParams& params);

struct UnitGradient {
  Vec w;
  double b = 0.0;
};

UnitGradient bernoulli_grad_hnca(const BernoulliUnitState& state,
                                 const CreditEstimate& credit, double reward);
UnitGradient bernoulli_grad_reinforce(const BernoulliUnitState& state,
                                      double reward);

struct BernoulliBackwardResult {
  std::vector<BackwardMessage> parent_messages;
  UnitParams updated;
  UnitGradient grad;
  CreditEstimate credit;
};

/// HNCA backward step of one Bernoulli hidden unit: combines child messages,
/// forms the gradient, emits per-parent counterfactual messages, and applies
/// one ascent step with rate lr to the returned copy of the parameters.
BernoulliBackwardResult bernoulli_backward(
    const BernoulliUnitState& state, const UnitParams& params,
    const std::vector<BackwardMessage>& msgs, double lr);

struct ReinforceBackwardResult {
  UnitParams updated;
  UnitGradient grad;
};

/// Local score-function update for a Bernoulli unit; ignores child messages.
ReinforceBackwardResult reinforce_backward_bernoulli(
    const BernoulliUnitState& state, const UnitParams& params, double reward,
    double lr);

SoftmaxUnitState softmax_forward(const UnitParams& params, const Vec& x,
                                 OutputMapping mapping, RngStream& rng);

struct SoftmaxGradient {
  Mat W;
  Vec b;
};

SoftmaxGradient softmax_grad_reinforce(const SoftmaxUnitState& state,
                                       double reward);

/// Counterfactual likelihood of the realized class per parent: first the
/// parent-high vector, then the parent-low vector.
std::pair<Vec, Vec> softmax_parent_messages(const SoftmaxUnitState& state,
                                            const UnitParams& params);

struct SoftmaxBackwardResult {
  std::vector<BackwardMessage> parent_messages;
  UnitParams updated;
  SoftmaxGradient grad;
};

SoftmaxBackwardResult softmax_backward(const SoftmaxUnitState& state,
                                       const UnitParams& params, double reward,
                                       double lr);

// ---------------------------------------------------------------------------
// Whole-network model

struct BernoulliLayerState {
  Vec x;       // layer input (realized parent values)
  Vec logits;  // one entry per unit
  Vec p;
  Vec phi;     // realized mapped outputs
};

struct NetworkTrace {
  Vec input;
  std::vector<BernoulliLayerState> layers;
  SoftmaxUnitState head;

  int sampled_class() const { return head.phi; }
};

class StochasticNet {
 public:
  StochasticNet() = default;
  /// Glorot-initialized network; all draws derive from spec.seed.
  explicit StochasticNet(const NetworkSpec& spec);

  const NetworkSpec& spec() const { return spec_; }
  int num_hidden_layers() const { return static_cast<int>(hidden_.size()); }
  const UnitParams& hidden_layer(int k) const { return hidden_[k]; }
  UnitParams& hidden_layer(int k) { return hidden_[k]; }
  const UnitParams& head() const { return head_; }
  UnitParams& head() { return head_; }

  int parameter_count() const;
  double parameter(int flat_index) const;
  void nudge_parameter(int flat_index, double delta);
  std::string parameter_name(int flat_index) const;
  bool parameters_finite() const;
  Vec flatten_parameters() const;

 private:
  NetworkSpec spec_;
  std::vector<UnitParams> hidden_;
  UnitParams head_;
};

struct LayerGrad {
  Mat W;
  Vec b;
};

/// Per-parameter gradient accumulator, tagged with the estimator that
/// produced it. Layout mirrors StochasticNet parameters.
struct GradientEstimate {
  Estimator tag = Estimator::Hnca;
  std::vector<LayerGrad> hidden;
  LayerGrad head;

  static GradientEstimate zeros_like(const StochasticNet& net, Estimator tag);
  void accumulate(const GradientEstimate& other);
  void scale(double s);
  Vec flatten() const;  // same order as StochasticNet flat parameter indexing
};

/// Ascent step: params += lr * grad.
void apply_ascent(StochasticNet& net, const GradientEstimate& grad, double lr);

/// Multiply-add tally for the complexity instrumentation.
struct OpCounter {
  std::uint64_t madds = 0;
  void add(std::uint64_t n) { madds += n; }
};

NetworkTrace network_forward(const StochasticNet& net, const Vec& context,
                             RngStream& rng);

/// Builds the trace a forward pass would have produced had sampling yielded
/// exactly the given hidden outputs (mapped values) and class. Used by the
/// enumeration oracle and tests.
NetworkTrace network_forward_forced(const StochasticNet& net,
                                    const Vec& context,
                                    const std::vector<Vec>& hidden_phi,
                                    int class_index);

/// Mean-field pass: hidden units emit their expected output instead of a
/// sample; returns the head class distribution. Used for greedy evaluation.
Vec network_mean_field(const StochasticNet& net, const Vec& context);

struct LayerBackward {
  std::vector<CreditEstimate> credit;  // per unit
  Mat msg_q1;  // messages emitted to parents, units x parents; empty for the
  Mat msg_q0;  // first hidden layer whose parents are raw inputs
};

struct NetworkBackwardResult {
  GradientEstimate grad;
  std::vector<LayerBackward> layers;  // filled only on the HNCA path
  Vec head_msg_q1;  // head->parent messages (HNCA path, per last-layer unit)
  Vec head_msg_q0;
};

/// Full backward pass over one trace. The softmax head always uses the
/// score-function rule; hidden layers consume child messages (Hnca) or run
/// the local score-function update (Reinforce). Gradients are returned, not
/// applied. An OpCounter, when given, tallies multiply-adds.
NetworkBackwardResult network_backward(const StochasticNet& net,
                                       const NetworkTrace& trace,
                                       double reward, Estimator estimator,
                                       OpCounter* counter = nullptr);

/// Debug dump: per-unit forward records plus per-edge backward messages.
std::string trace_to_json(const NetworkTrace& trace,
                          const NetworkBackwardResult* backward = nullptr);

namespace detail {
/// Negative-control hook: when set, hidden units pass raw counterfactual
/// fire probabilities to their parents instead of the likelihood of their
/// realized output. This reproduces a subtly wrong message convention; the
/// verification suite must detect it. Never enable outside tests.
extern bool g_raw_child_messages;
}  // namespace detail

}  // namespace hnca
