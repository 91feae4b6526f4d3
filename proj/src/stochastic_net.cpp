#include "hnca/stochastic_net.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace hnca {

namespace detail {
bool g_raw_child_messages = false;
}  // namespace detail

namespace {

constexpr int kLogSpaceChildThreshold = 32;

void check_dims(const UnitParams& params, const Vec& x) {
  if (params.W.cols() != x.size()) {
    throw SpecError("parent vector length " + std::to_string(x.size()) +
                    " does not match weight columns " +
                    std::to_string(params.W.cols()));
  }
}

double consistent_reward(const std::vector<BackwardMessage>& msgs) {
  if (msgs.empty()) throw SpecError("backward step requires child messages");
  const double r = msgs.front().reward;
  for (const auto& m : msgs) {
    if (m.reward != r) {
      throw SpecError("child messages carry inconsistent rewards");
    }
  }
  return r;
}

}  // namespace

CreditEstimate make_credit(double p, const Vec& q1s, const Vec& q0s) {
  if (q1s.size() != q0s.size()) {
    throw SpecError("mismatched counterfactual likelihood vectors");
  }
  CreditEstimate c;
  const bool has_zero = q1s.size() > 0 &&
                        (q1s.minCoeff() <= 0.0 || q0s.minCoeff() <= 0.0);
  if (q1s.size() > kLogSpaceChildThreshold && !has_zero) {
    const double s1 = q1s.array().log().sum();
    const double s0 = q0s.array().log().sum();
    const double delta = s1 - s0;  // log(q1/q0)
    c.q1_prod = std::exp(s1);
    c.q0_prod = std::exp(s0);
    c.q_bar = p * c.q1_prod + (1.0 - p) * c.q0_prod;
    if (delta > 690.0) {  // exp would overflow; take the r->inf limit
      c.ratio = 1.0 / p;
      c.weight_high = 1.0 / p;
      c.weight_low = 0.0;
    } else if (delta < -690.0) {
      c.ratio = -1.0 / (1.0 - p);
      c.weight_high = 0.0;
      c.weight_low = 1.0 / (1.0 - p);
    } else {
      const double r = std::exp(delta);
      const double denom = p * r + (1.0 - p);  // q_bar / q0_prod
      c.ratio = std::expm1(delta) / denom;
      c.weight_high = r / denom;
      c.weight_low = 1.0 / denom;
    }
    return c;
  }
  c.q1_prod = q1s.prod();
  c.q0_prod = q0s.prod();
  c.q_bar = p * c.q1_prod + (1.0 - p) * c.q0_prod;
  if (!(c.q_bar > 0.0)) {
    throw DegenerateLikelihoodError(
        "q_bar is not positive; realized configuration has zero likelihood");
  }
  c.ratio = (c.q1_prod - c.q0_prod) / c.q_bar;
  c.weight_high = c.q1_prod / c.q_bar;
  c.weight_low = c.q0_prod / c.q_bar;
  return c;
}

CreditEstimate make_credit(double p, const std::vector<BackwardMessage>& msgs) {
  Vec q1s(msgs.size()), q0s(msgs.size());
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    q1s(i) = msgs[i].q1;
    q0s(i) = msgs[i].q0;
  }
  return make_credit(p, q1s, q0s);
}

BernoulliUnitState bernoulli_forward(const UnitParams& params, const Vec& x,
                                     OutputMapping mapping, RngStream& rng) {
  check_dims(params, x);
  BernoulliUnitState s;
  s.x = x;
  s.mapping = mapping;
  s.logit = params.theta().dot(x) + params.bias();
  s.p = sigmoid(s.logit);
  s.phi = rng.bernoulli(s.p) ? high_value(mapping) : low_value(mapping);
  return s;
}

Counterfactuals bernoulli_counterfactuals(const BernoulliUnitState& state,
                                          const UnitParams& params) {
  const double hi = high_value(state.mapping);
  const double lo = low_value(state.mapping);
  const auto theta = params.theta();
  Counterfactuals cf;
  cf.p1.resize(state.x.size());
  cf.p0.resize(state.x.size());
  for (int j = 0; j < state.x.size(); ++j) {
    cf.p1(j) = sigmoid(state.logit + theta(j) * (hi - state.x(j)));
    cf.p0(j) = sigmoid(state.logit + theta(j) * (lo - state.x(j)));
  }
  return cf;
}

UnitGradient bernoulli_grad_hnca(const BernoulliUnitState& state,
                                 const CreditEstimate& credit, double reward) {
  const double s = sigmoid_prime(state.logit) * credit.ratio * reward;
  return {s * state.x, s};
}

UnitGradient bernoulli_grad_reinforce(const BernoulliUnitState& state,
                                      double reward) {
  const double s = ((state.is_high() ? 1.0 : 0.0) - state.p) * reward;
  return {s * state.x, s};
}

BernoulliBackwardResult bernoulli_backward(
    const BernoulliUnitState& state, const UnitParams& params,
    const std::vector<BackwardMessage>& msgs, double lr) {
  const double reward = consistent_reward(msgs);
  BernoulliBackwardResult out;
  out.credit = make_credit(state.p, msgs);
  out.grad = bernoulli_grad_hnca(state, out.credit, reward);

  const Counterfactuals cf = bernoulli_counterfactuals(state, params);
  out.parent_messages.resize(state.x.size());
  const bool fired = state.is_high();
  for (int j = 0; j < state.x.size(); ++j) {
    out.parent_messages[j] = {realized_likelihood(cf.p1(j), fired),
                              realized_likelihood(cf.p0(j), fired), reward};
  }

  out.updated = params;
  out.updated.W.row(0) += lr * out.grad.w.transpose();
  out.updated.b(0) += lr * out.grad.b;
  return out;
}

ReinforceBackwardResult reinforce_backward_bernoulli(
    const BernoulliUnitState& state, const UnitParams& params, double reward,
    double lr) {
  ReinforceBackwardResult out;
  out.grad = bernoulli_grad_reinforce(state, reward);
  out.updated = params;
  out.updated.W.row(0) += lr * out.grad.w.transpose();
  out.updated.b(0) += lr * out.grad.b;
  return out;
}

SoftmaxUnitState softmax_forward(const UnitParams& params, const Vec& x,
                                 OutputMapping mapping, RngStream& rng) {
  check_dims(params, x);
  SoftmaxUnitState s;
  s.x = x;
  s.mapping = mapping;
  s.logits = params.W * x + params.b;
  s.p = softmax(s.logits);
  s.phi = rng.categorical(s.p);
  return s;
}

SoftmaxGradient softmax_grad_reinforce(const SoftmaxUnitState& state,
                                       double reward) {
  Vec delta = -state.p;
  delta(state.phi) += 1.0;
  delta *= reward;
  return {delta * state.x.transpose(), delta};
}

std::pair<Vec, Vec> softmax_parent_messages(const SoftmaxUnitState& state,
                                            const UnitParams& params) {
  const double hi = high_value(state.mapping);
  const double lo = low_value(state.mapping);
  const int n = static_cast<int>(state.x.size());
  Vec q1(n), q0(n);
  Vec logits(state.logits.size());
  for (int j = 0; j < n; ++j) {
    logits = state.logits + params.W.col(j) * (hi - state.x(j));
    q1(j) = softmax(logits)(state.phi);
    logits = state.logits + params.W.col(j) * (lo - state.x(j));
    q0(j) = softmax(logits)(state.phi);
  }
  return {q1, q0};
}

SoftmaxBackwardResult softmax_backward(const SoftmaxUnitState& state,
                                       const UnitParams& params, double reward,
                                       double lr) {
  SoftmaxBackwardResult out;
  out.grad = softmax_grad_reinforce(state, reward);
  auto [q1, q0] = softmax_parent_messages(state, params);
  out.parent_messages.resize(q1.size());
  for (int j = 0; j < q1.size(); ++j) {
    out.parent_messages[j] = {q1(j), q0(j), reward};
  }
  out.updated = params;
  out.updated.W += lr * out.grad.W;
  out.updated.b += lr * out.grad.b;
  return out;
}

// ---------------------------------------------------------------------------
// StochasticNet

StochasticNet::StochasticNet(const NetworkSpec& spec) : spec_(spec) {
  spec.validate();
  RngStream base(spec.seed, 0);
  int fan_in = spec.input_dim;
  for (std::size_t k = 0; k < spec.hidden_layers.size(); ++k) {
    const int width = spec.hidden_layers[k];
    RngStream layer_rng = base.substream(1, k);
    hidden_.push_back(glorot_init_layer(width, fan_in, width, layer_rng));
    fan_in = width;
  }
  RngStream head_rng = base.substream(2, 0);
  head_ = glorot_init_layer(spec.num_classes, fan_in, spec.num_classes,
                            head_rng);
}

int StochasticNet::parameter_count() const {
  int n = 0;
  for (const auto& layer : hidden_) {
    n += static_cast<int>(layer.W.size() + layer.b.size());
  }
  return n + static_cast<int>(head_.W.size() + head_.b.size());
}

// Flat layout: per layer, row-major weights then biases; head last.
double StochasticNet::parameter(int flat_index) const {
  int idx = flat_index;
  auto probe = [&idx](const UnitParams& layer) -> const double* {
    const int wn = static_cast<int>(layer.W.size());
    const int bn = static_cast<int>(layer.b.size());
    if (idx < wn) {
      const int r = idx / static_cast<int>(layer.W.cols());
      const int c = idx % static_cast<int>(layer.W.cols());
      return &layer.W(r, c);
    }
    idx -= wn;
    if (idx < bn) return &layer.b(idx);
    idx -= bn;
    return nullptr;
  };
  for (const auto& layer : hidden_) {
    if (const double* p = probe(layer)) return *p;
  }
  if (const double* p = probe(head_)) return *p;
  throw SpecError("parameter index out of range");
}

void StochasticNet::nudge_parameter(int flat_index, double delta) {
  int idx = flat_index;
  auto probe = [&idx, delta](UnitParams& layer) -> bool {
    const int wn = static_cast<int>(layer.W.size());
    const int bn = static_cast<int>(layer.b.size());
    if (idx < wn) {
      const int r = idx / static_cast<int>(layer.W.cols());
      const int c = idx % static_cast<int>(layer.W.cols());
      layer.W(r, c) += delta;
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
  for (auto& layer : hidden_) {
    if (probe(layer)) return;
  }
  if (probe(head_)) return;
  throw SpecError("parameter index out of range");
}

std::string StochasticNet::parameter_name(int flat_index) const {
  int idx = flat_index;
  auto probe = [&idx](const UnitParams& layer,
                      const std::string& prefix) -> std::string {
    const int wn = static_cast<int>(layer.W.size());
    const int bn = static_cast<int>(layer.b.size());
    if (idx < wn) {
      const int r = idx / static_cast<int>(layer.W.cols());
      const int c = idx % static_cast<int>(layer.W.cols());
      return prefix + ".u" + std::to_string(r) + ".w" + std::to_string(c);
    }
    idx -= wn;
    if (idx < bn) return prefix + ".u" + std::to_string(idx) + ".b";
    idx -= bn;
    return {};
  };
  for (std::size_t k = 0; k < hidden_.size(); ++k) {
    const std::string name = probe(hidden_[k], "h" + std::to_string(k));
    if (!name.empty()) return name;
  }
  const std::string name = probe(head_, "head");
  if (!name.empty()) return name;
  throw SpecError("parameter index out of range");
}

bool StochasticNet::parameters_finite() const {
  for (const auto& layer : hidden_) {
    if (!layer.W.allFinite() || !layer.b.allFinite()) return false;
  }
  return head_.W.allFinite() && head_.b.allFinite();
}

Vec StochasticNet::flatten_parameters() const {
  Vec out(parameter_count());
  int at = 0;
  auto emit = [&out, &at](const UnitParams& layer) {
    for (int r = 0; r < layer.W.rows(); ++r) {
      for (int c = 0; c < layer.W.cols(); ++c) out(at++) = layer.W(r, c);
    }
    for (int i = 0; i < layer.b.size(); ++i) out(at++) = layer.b(i);
  };
  for (const auto& layer : hidden_) emit(layer);
  emit(head_);
  return out;
}

GradientEstimate GradientEstimate::zeros_like(const StochasticNet& net,
                                              Estimator tag) {
  GradientEstimate g;
  g.tag = tag;
  for (int k = 0; k < net.num_hidden_layers(); ++k) {
    const auto& layer = net.hidden_layer(k);
    g.hidden.push_back(
        {Mat::Zero(layer.W.rows(), layer.W.cols()), Vec::Zero(layer.b.size())});
  }
  g.head = {Mat::Zero(net.head().W.rows(), net.head().W.cols()),
            Vec::Zero(net.head().b.size())};
  return g;
}

void GradientEstimate::accumulate(const GradientEstimate& other) {
  for (std::size_t k = 0; k < hidden.size(); ++k) {
    hidden[k].W += other.hidden[k].W;
    hidden[k].b += other.hidden[k].b;
  }
  head.W += other.head.W;
  head.b += other.head.b;
}

void GradientEstimate::scale(double s) {
  for (auto& layer : hidden) {
    layer.W *= s;
    layer.b *= s;
  }
  head.W *= s;
  head.b *= s;
}

Vec GradientEstimate::flatten() const {
  int n = 0;
  for (const auto& layer : hidden) {
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
  for (const auto& layer : hidden) emit(layer);
  emit(head);
  return out;
}

void apply_ascent(StochasticNet& net, const GradientEstimate& grad,
                  double lr) {
  for (int k = 0; k < net.num_hidden_layers(); ++k) {
    net.hidden_layer(k).W += lr * grad.hidden[k].W;
    net.hidden_layer(k).b += lr * grad.hidden[k].b;
  }
  net.head().W += lr * grad.head.W;
  net.head().b += lr * grad.head.b;
}

namespace {

// Shared forward skeleton; `hidden_decider` fixes each layer's outputs given
// its fire probabilities, `head_decider` fixes the class given p.
template <typename HiddenDecider, typename HeadDecider>
NetworkTrace forward_impl(const StochasticNet& net, const Vec& context,
                          HiddenDecider&& hidden_decider,
                          HeadDecider&& head_decider) {
  if (context.size() != net.spec().input_dim) {
    throw SpecError("context length does not match input_dim");
  }
  NetworkTrace trace;
  trace.input = context;
  Vec x = context;
  for (int k = 0; k < net.num_hidden_layers(); ++k) {
    const auto& layer = net.hidden_layer(k);
    BernoulliLayerState s;
    s.x = x;
    s.logits = layer.W * x + layer.b;
    s.p = s.logits.unaryExpr([](double l) { return sigmoid(l); });
    s.phi = hidden_decider(k, s.p);
    x = s.phi;
    trace.layers.push_back(std::move(s));
  }
  trace.head.x = x;
  trace.head.mapping = net.spec().output_mapping;
  trace.head.logits = net.head().W * x + net.head().b;
  trace.head.p = softmax(trace.head.logits);
  trace.head.phi = head_decider(trace.head.p);
  return trace;
}

}  // namespace

NetworkTrace network_forward(const StochasticNet& net, const Vec& context,
                             RngStream& rng) {
  const double hi = high_value(net.spec().output_mapping);
  const double lo = low_value(net.spec().output_mapping);
  return forward_impl(
      net, context,
      [&rng, hi, lo](int, const Vec& p) {
        Vec phi(p.size());
        for (int u = 0; u < p.size(); ++u) {
          phi(u) = rng.bernoulli(p(u)) ? hi : lo;
        }
        return phi;
      },
      [&rng](const Vec& p) { return rng.categorical(p); });
}

NetworkTrace network_forward_forced(const StochasticNet& net,
                                    const Vec& context,
                                    const std::vector<Vec>& hidden_phi,
                                    int class_index) {
  if (static_cast<int>(hidden_phi.size()) != net.num_hidden_layers()) {
    throw SpecError("forced outputs must cover every hidden layer");
  }
  return forward_impl(
      net, context,
      [&hidden_phi](int k, const Vec& p) {
        if (hidden_phi[k].size() != p.size()) {
          throw SpecError("forced layer width mismatch");
        }
        return hidden_phi[k];
      },
      [class_index](const Vec&) { return class_index; });
}

Vec network_mean_field(const StochasticNet& net, const Vec& context) {
  if (context.size() != net.spec().input_dim) {
    throw SpecError("context length does not match input_dim");
  }
  const bool zero_one = net.spec().output_mapping == OutputMapping::ZeroOne;
  Vec x = context;
  for (int k = 0; k < net.num_hidden_layers(); ++k) {
    const auto& layer = net.hidden_layer(k);
    Vec p = (layer.W * x + layer.b)
                .unaryExpr([](double l) { return sigmoid(l); });
    x = zero_one ? p : Vec(2.0 * p.array() - 1.0);
  }
  return softmax(net.head().W * x + net.head().b);
}

namespace {

void backward_hidden_layer(const StochasticNet& net, const NetworkTrace& trace,
                           int k, const Mat& in_q1, const Mat& in_q0,
                           double reward, GradientEstimate& grad,
                           LayerBackward& out, OpCounter* counter) {
  const auto& layer = net.hidden_layer(k);
  const BernoulliLayerState& s = trace.layers[k];
  const int width = static_cast<int>(s.p.size());
  const int fan_in = static_cast<int>(s.x.size());
  const double hi = high_value(net.spec().output_mapping);
  const double lo = low_value(net.spec().output_mapping);
  const bool emit_messages = k > 0;

  out.credit.resize(width);
  if (emit_messages) {
    out.msg_q1.resize(width, fan_in);
    out.msg_q0.resize(width, fan_in);
  }

  for (int u = 0; u < width; ++u) {
    const CreditEstimate credit = make_credit(s.p(u), in_q1.col(u), in_q0.col(u));
    out.credit[u] = credit;
    const double score = sigmoid_prime(s.logits(u)) * credit.ratio * reward;
    grad.hidden[k].W.row(u) = score * s.x.transpose();
    grad.hidden[k].b(u) = score;
    if (counter) counter->add(2 * in_q1.rows() + fan_in + 4);

    if (emit_messages) {
      const bool fired = s.phi(u) == hi;
      for (int j = 0; j < fan_in; ++j) {
        const double w = layer.W(u, j);
        const double p1 = sigmoid(s.logits(u) + w * (hi - s.x(j)));
        const double p0 = sigmoid(s.logits(u) + w * (lo - s.x(j)));
        if (detail::g_raw_child_messages) {
          out.msg_q1(u, j) = p1;
          out.msg_q0(u, j) = p0;
        } else {
          out.msg_q1(u, j) = realized_likelihood(p1, fired);
          out.msg_q0(u, j) = realized_likelihood(p0, fired);
        }
      }
      if (counter) counter->add(4 * static_cast<std::uint64_t>(fan_in));
    }
  }
}

}  // namespace

NetworkBackwardResult network_backward(const StochasticNet& net,
                                       const NetworkTrace& trace,
                                       double reward, Estimator estimator,
                                       OpCounter* counter) {
  if (estimator != Estimator::Hnca && estimator != Estimator::Reinforce) {
    throw SpecError("network_backward expects hnca or reinforce");
  }
  NetworkBackwardResult out;
  out.grad = GradientEstimate::zeros_like(net, estimator);

  // Softmax head: score-function update under both estimators.
  const SoftmaxGradient head_grad = softmax_grad_reinforce(trace.head, reward);
  out.grad.head.W = head_grad.W;
  out.grad.head.b = head_grad.b;
  const int classes = static_cast<int>(trace.head.p.size());
  const int head_fan_in = static_cast<int>(trace.head.x.size());
  if (counter) {
    counter->add(static_cast<std::uint64_t>(classes) * (head_fan_in + 2));
  }

  const int L = net.num_hidden_layers();
  if (estimator == Estimator::Reinforce) {
    for (int k = 0; k < L; ++k) {
      const BernoulliLayerState& s = trace.layers[k];
      const double hi = high_value(net.spec().output_mapping);
      for (int u = 0; u < s.p.size(); ++u) {
        const double score = ((s.phi(u) == hi ? 1.0 : 0.0) - s.p(u)) * reward;
        out.grad.hidden[k].W.row(u) = score * s.x.transpose();
        out.grad.hidden[k].b(u) = score;
      }
    }
    return out;
  }

  out.layers.resize(L);
  if (L == 0) return out;

  auto [head_q1, head_q0] = softmax_parent_messages(trace.head, net.head());
  out.head_msg_q1 = head_q1;
  out.head_msg_q0 = head_q0;
  if (counter) {
    counter->add(
        static_cast<std::uint64_t>(head_fan_in) * (6 * classes + 2));
  }

  // Hidden layers, top down. Layer k receives one message row per child.
  Mat in_q1 = head_q1.transpose();
  Mat in_q0 = head_q0.transpose();
  for (int k = L - 1; k >= 0; --k) {
    backward_hidden_layer(net, trace, k, in_q1, in_q0, reward, out.grad,
                          out.layers[k], counter);
    if (k > 0) {
      in_q1 = out.layers[k].msg_q1;
      in_q0 = out.layers[k].msg_q0;
    }
  }
  return out;
}

std::string trace_to_json(const NetworkTrace& trace,
                          const NetworkBackwardResult* backward) {
  nlohmann::json units = nlohmann::json::array();
  for (std::size_t k = 0; k < trace.layers.size(); ++k) {
    const auto& s = trace.layers[k];
    for (int u = 0; u < s.p.size(); ++u) {
      units.push_back({{"layer", k},
                       {"index", u},
                       {"l", s.logits(u)},
                       {"p", s.p(u)},
                       {"phi", s.phi(u)}});
    }
  }
  nlohmann::json head;
  head["layer"] = trace.layers.size();
  head["index"] = 0;
  head["l"] = std::vector<double>(trace.head.logits.data(),
                                  trace.head.logits.data() +
                                      trace.head.logits.size());
  head["p"] = std::vector<double>(trace.head.p.data(),
                                  trace.head.p.data() + trace.head.p.size());
  head["phi"] = trace.head.phi;
  units.push_back(head);

  nlohmann::json doc;
  doc["units"] = units;
  if (backward != nullptr) {
    nlohmann::json edges = nlohmann::json::array();
    const std::size_t head_layer = trace.layers.size();
    for (int j = 0; j < backward->head_msg_q1.size(); ++j) {
      edges.push_back({{"child_layer", head_layer},
                       {"child_index", 0},
                       {"parent_index", j},
                       {"q1", backward->head_msg_q1(j)},
                       {"q0", backward->head_msg_q0(j)}});
    }
    for (std::size_t k = 0; k < backward->layers.size(); ++k) {
      const auto& lb = backward->layers[k];
      for (int u = 0; u < lb.msg_q1.rows(); ++u) {
        for (int j = 0; j < lb.msg_q1.cols(); ++j) {
          edges.push_back({{"child_layer", k},
                           {"child_index", u},
                           {"parent_index", j},
                           {"q1", lb.msg_q1(u, j)},
                           {"q0", lb.msg_q0(u, j)}});
        }
      }
    }
    doc["edges"] = edges;
  }
  return doc.dump(2);
}

}  // namespace hnca
