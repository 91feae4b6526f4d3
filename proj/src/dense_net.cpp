#include "hnca/dense_net.hpp"

#include <cmath>

namespace hnca {

namespace {

double apply_activation(Activation act, double v) {
  switch (act) {
    case Activation::Tanh: return std::tanh(v);
    case Activation::Relu: return v > 0.0 ? v : 0.0;
    case Activation::Sigmoid: return sigmoid(v);
  }
  throw SpecError("unknown activation");
}

// Derivative expressed through the activation value.
double activation_prime_from_value(Activation act, double a) {
  switch (act) {
    case Activation::Tanh: return 1.0 - a * a;
    case Activation::Relu: return a > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return a * (1.0 - a);
  }
  throw SpecError("unknown activation");
}

}  // namespace

Activation activation_for(Estimator e) {
  switch (e) {
    case Estimator::BackpropTanh: return Activation::Tanh;
    case Estimator::BackpropRelu: return Activation::Relu;
    case Estimator::BackpropSigmoid: return Activation::Sigmoid;
    default: throw SpecError("estimator has no deterministic activation");
  }
}

DenseNet::DenseNet(int input_dim, const std::vector<int>& hidden_layers,
                   int num_classes, Activation activation, std::uint64_t seed)
    : input_dim_(input_dim), num_classes_(num_classes),
      activation_(activation) {
  if (input_dim < 1) throw SpecError("input_dim must be >= 1");
  if (num_classes < 2) throw SpecError("num_classes must be >= 2");
  RngStream base(seed, 0);
  int fan_in = input_dim;
  for (std::size_t k = 0; k < hidden_layers.size(); ++k) {
    const int width = hidden_layers[k];
    if (width < 1) throw SpecError("hidden layer width must be >= 1");
    RngStream layer_rng = base.substream(1, k);
    layers_.push_back(glorot_init_layer(width, fan_in, width, layer_rng));
    fan_in = width;
  }
  RngStream head_rng = base.substream(2, 0);
  head_ = glorot_init_layer(num_classes, fan_in, num_classes, head_rng);
}

int DenseNet::parameter_count() const {
  int n = 0;
  for (const auto& layer : layers_) {
    n += static_cast<int>(layer.W.size() + layer.b.size());
  }
  return n + static_cast<int>(head_.W.size() + head_.b.size());
}

void DenseNet::nudge_parameter(int flat_index, double delta) {
  int idx = flat_index;
  auto probe = [&idx, delta](UnitParams& layer) -> bool {
    const int wn = static_cast<int>(layer.W.size());
    const int bn = static_cast<int>(layer.b.size());
    if (idx < wn) {
      layer.W(idx / layer.W.cols(), idx % layer.W.cols()) += delta;
      return true;
    }
    idx -= wn;
    if (idx < bn) {
      layer.b(idx) += delta;
      return true;
    }
    idx -= bn;
    return false;
  };
  for (auto& layer : layers_) {
    if (probe(layer)) return;
  }
  if (probe(head_)) return;
  throw SpecError("parameter index out of range");
}

bool DenseNet::parameters_finite() const {
  for (const auto& layer : layers_) {
    if (!layer.W.allFinite() || !layer.b.allFinite()) return false;
  }
  return head_.W.allFinite() && head_.b.allFinite();
}

Vec DenseNet::flatten_parameters() const {
  Vec out(parameter_count());
  int at = 0;
  auto emit = [&out, &at](const UnitParams& layer) {
    for (int r = 0; r < layer.W.rows(); ++r) {
      for (int c = 0; c < layer.W.cols(); ++c) out(at++) = layer.W(r, c);
    }
    for (int i = 0; i < layer.b.size(); ++i) out(at++) = layer.b(i);
  };
  for (const auto& layer : layers_) emit(layer);
  emit(head_);
  return out;
}

DenseTrace dense_forward(const DenseNet& net, const Vec& context,
                         RngStream& rng) {
  if (context.size() != net.input_dim()) {
    throw SpecError("context length does not match input_dim");
  }
  DenseTrace trace;
  trace.input = context;
  Vec x = context;
  for (int k = 0; k < net.num_hidden_layers(); ++k) {
    const auto& layer = net.layer(k);
    Vec pre = layer.W * x + layer.b;
    x = pre.unaryExpr([act = net.activation()](double v) {
      return apply_activation(act, v);
    });
    trace.activations.push_back(x);
  }
  trace.head = softmax_forward(net.head(), x, OutputMapping::ZeroOne, rng);
  return trace;
}

DenseGradient DenseGradient::zeros_like(const DenseNet& net) {
  DenseGradient g;
  for (int k = 0; k < net.num_hidden_layers(); ++k) {
    const auto& layer = net.layer(k);
    g.layers.push_back(
        {Mat::Zero(layer.W.rows(), layer.W.cols()), Vec::Zero(layer.b.size())});
  }
  g.head = {Mat::Zero(net.head().W.rows(), net.head().W.cols()),
            Vec::Zero(net.head().b.size())};
  return g;
}

void DenseGradient::accumulate(const DenseGradient& other) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].W += other.layers[k].W;
    layers[k].b += other.layers[k].b;
  }
  head.W += other.head.W;
  head.b += other.head.b;
}

void DenseGradient::scale(double s) {
  for (auto& layer : layers) {
    layer.W *= s;
    layer.b *= s;
  }
  head.W *= s;
  head.b *= s;
}

Vec DenseGradient::flatten() const {
  int n = 0;
  for (const auto& layer : layers) {
    n += static_cast<int>(layer.W.size() + layer.b.size());
  }
  n += static_cast<int>(head.W.size() + head.b.size());
  Vec out(n);
  int at = 0;
  auto emit = [&out, &at](const LayerGrad& layer) {
    for (int r = 0; r < layer.W.rows(); ++r) {
      for (int c = 0; c < layer.W.cols(); ++c) out(at++) = layer.W(r, c);
    }
    for (int i = 0; i < layer.b.size(); ++i) out(at++) = layer.b(i);
  };
  for (const auto& layer : layers) emit(layer);
  emit(head);
  return out;
}

DenseGradient dense_policy_gradient(const DenseNet& net,
                                    const DenseTrace& trace, double reward) {
  DenseGradient grad = DenseGradient::zeros_like(net);

  const SoftmaxGradient head_grad = softmax_grad_reinforce(trace.head, reward);
  grad.head.W = head_grad.W;
  grad.head.b = head_grad.b;

  // Backpropagate d log p(a) * R through the hidden stack.
  Vec g = net.head().W.transpose() * head_grad.b;
  for (int k = net.num_hidden_layers() - 1; k >= 0; --k) {
    const Vec& a = trace.activations[k];
    Vec delta(a.size());
    for (int u = 0; u < a.size(); ++u) {
      delta(u) = g(u) * activation_prime_from_value(net.activation(), a(u));
    }
    const Vec& below = k == 0 ? trace.input : trace.activations[k - 1];
    grad.layers[k].W = delta * below.transpose();
    grad.layers[k].b = delta;
    if (k > 0) g = net.layer(k).W.transpose() * delta;
  }
  return grad;
}

void apply_ascent(DenseNet& net, const DenseGradient& grad, double lr) {
  for (int k = 0; k < net.num_hidden_layers(); ++k) {
    net.layer(k).W += lr * grad.layers[k].W;
    net.layer(k).b += lr * grad.layers[k].b;
  }
  net.head().W += lr * grad.head.W;
  net.head().b += lr * grad.head.b;
}

}  // namespace hnca
