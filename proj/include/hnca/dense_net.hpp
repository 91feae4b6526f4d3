#pragma once

#include <vector>

#include "hnca/core.hpp"
#include "hnca/stochastic_net.hpp"

namespace hnca {

enum class Activation { Tanh, Relu, Sigmoid };

Activation activation_for(Estimator e);

/// Deterministic MLP with a stochastic softmax policy head, trained by
/// whole-network score-function updates.
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(int input_dim, const std::vector<int>& hidden_layers,
           int num_classes, Activation activation, std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }
  Activation activation() const { return activation_; }
  int num_hidden_layers() const { return static_cast<int>(layers_.size()); }
  const UnitParams& layer(int k) const { return layers_[k]; }
  UnitParams& layer(int k) { return layers_[k]; }
  const UnitParams& head() const { return head_; }
  UnitParams& head() { return head_; }

  int parameter_count() const;
  void nudge_parameter(int flat_index, double delta);
  bool parameters_finite() const;
  Vec flatten_parameters() const;

 private:
  int input_dim_ = 0;
  int num_classes_ = 0;
  Activation activation_ = Activation::Tanh;
  std::vector<UnitParams> layers_;
  UnitParams head_;
};

struct DenseTrace {
  Vec input;
  std::vector<Vec> activations;  // post-activation, one per hidden layer
  SoftmaxUnitState head;

  int sampled_class() const { return head.phi; }
};

DenseTrace dense_forward(const DenseNet& net, const Vec& context,
                         RngStream& rng);

struct DenseGradient {
  std::vector<LayerGrad> layers;
  LayerGrad head;

  static DenseGradient zeros_like(const DenseNet& net);
  void accumulate(const DenseGradient& other);
  void scale(double s);
  Vec flatten() const;
};

/// Gradient of log pi(sampled class | input) scaled by the reward,
/// backpropagated through every layer. ReLU takes subgradient 0 at 0.
DenseGradient dense_policy_gradient(const DenseNet& net,
                                    const DenseTrace& trace, double reward);

void apply_ascent(DenseNet& net, const DenseGradient& grad, double lr);

}  // namespace hnca
