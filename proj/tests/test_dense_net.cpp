#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hnca/dense_net.hpp"

using namespace hnca;

namespace {

Vec make_vec(std::initializer_list<double> values) {
  Vec v(static_cast<int>(values.size()));
  int i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

// log p(class a | context) for finite differencing.
double log_policy(const DenseNet& net, const Vec& ctx, int action) {
  RngStream rng(0, 0);
  DenseTrace t = dense_forward(net, ctx, rng);
  return std::log(t.head.p(action));
}

}  // namespace

TEST_CASE("dense forward basics") {
  DenseNet net(3, {4}, 3, Activation::Relu, 1);
  net.layer(0).W.setZero();
  net.layer(0).b.setZero();
  net.head().W.setZero();
  net.head().b.setZero();
  RngStream rng(2, 0);
  DenseTrace t = dense_forward(net, make_vec({0.1, 0.5, 0.9}), rng);
  for (int c = 0; c < 3; ++c) {
    CHECK(t.head.p(c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  // ReLU clips negative preactivations to exactly zero.
  net.layer(0).W.setConstant(-1.0);
  DenseTrace tr = dense_forward(net, make_vec({0.1, 0.5, 0.9}), rng);
  CHECK(tr.activations[0].cwiseEqual(Vec::Zero(4)).all());

  // tanh activations stay inside (-1, 1).
  DenseNet tanh_net(3, {8}, 2, Activation::Tanh, 5);
  tanh_net.layer(0).W.setConstant(3.0);
  DenseTrace tt = dense_forward(tanh_net, make_vec({1.0, 1.0, 1.0}), rng);
  CHECK(tt.activations[0].maxCoeff() < 1.0);
  CHECK(tt.activations[0].minCoeff() > -1.0);

  CHECK_THROWS_AS(dense_forward(net, make_vec({1.0}), rng), SpecError);
}

TEST_CASE("zero reward gives a zero gradient everywhere") {
  DenseNet net(4, {3, 3}, 2, Activation::Tanh, 3);
  RngStream rng(4, 0);
  DenseTrace t = dense_forward(net, make_vec({0.2, 0.4, 0.6, 0.8}), rng);
  DenseGradient g = dense_policy_gradient(net, t, 0.0);
  CHECK(g.flatten().isZero(0.0));
}

TEST_CASE("head gradient is the softmax log-likelihood identity") {
  DenseNet net(2, {3}, 4, Activation::Sigmoid, 7);
  RngStream rng(5, 0);
  DenseTrace t = dense_forward(net, make_vec({0.3, 0.7}), rng);
  DenseGradient g = dense_policy_gradient(net, t, 1.0);
  Vec expected = -t.head.p;
  expected(t.head.phi) += 1.0;
  CHECK(g.head.b.isApprox(expected, 1e-15));
  // shares the formula with the stochastic head
  SoftmaxGradient sg = softmax_grad_reinforce(t.head, 1.0);
  CHECK(g.head.W.cwiseEqual(sg.W).all());
  CHECK(g.head.b.cwiseEqual(sg.b).all());
}

TEST_CASE("policy gradient matches finite differences on a 4-2-2-3 net") {
  const double step = 1e-5;
  for (Activation act :
       {Activation::Tanh, Activation::Relu, Activation::Sigmoid}) {
    DenseNet net(4, {2, 2}, 3, act, 11 + static_cast<int>(act));
    const Vec ctx = make_vec({0.9, 0.1, 0.4, 0.7});
    RngStream rng(6, static_cast<int>(act));
    DenseTrace t = dense_forward(net, ctx, rng);
    const double reward = 1.3;
    const Vec grad = dense_policy_gradient(net, t, reward).flatten();
    for (int i = 0; i < net.parameter_count(); ++i) {
      DenseNet plus = net, minus = net;
      plus.nudge_parameter(i, step);
      minus.nudge_parameter(i, -step);
      const double fd = (log_policy(plus, ctx, t.head.phi) -
                         log_policy(minus, ctx, t.head.phi)) /
                        (2 * step) * reward;
      CHECK(grad(i) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("relu subgradient at zero is zero") {
  DenseNet net(1, {1}, 2, Activation::Relu, 0);
  net.layer(0).W.setZero();  // preactivation exactly 0
  net.layer(0).b.setZero();
  net.head().W.setOnes();
  RngStream rng(7, 0);
  DenseTrace t = dense_forward(net, make_vec({1.0}), rng);
  CHECK(t.activations[0](0) == 0.0);
  DenseGradient g = dense_policy_gradient(net, t, 1.0);
  CHECK(g.layers[0].W(0, 0) == 0.0);
  CHECK(g.layers[0].b(0) == 0.0);
}

TEST_CASE("activation mapping from estimators") {
  CHECK(activation_for(Estimator::BackpropTanh) == Activation::Tanh);
  CHECK(activation_for(Estimator::BackpropRelu) == Activation::Relu);
  CHECK(activation_for(Estimator::BackpropSigmoid) == Activation::Sigmoid);
  CHECK_THROWS_AS(activation_for(Estimator::Hnca), SpecError);
}
