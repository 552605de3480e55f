#include "svrnn/nn.hpp"

#include <doctest.h>

#include "helpers.hpp"

using namespace svrnn;
using testutil::randn;

TEST_CASE("linear: identity weights pass the input through") {
  Parameter w("W", Mat::Identity(2, 2));
  Parameter b("b", 2, 1);
  Tape t;
  Vec x(2);
  x << 3.0, -1.0;
  Var y = t.linear(w, b, t.constant(x));
  CHECK(t.value(y)[0] == doctest::Approx(3.0));
  CHECK(t.value(y)[1] == doctest::Approx(-1.0));
}

TEST_CASE("linear: zero weights yield the bias") {
  Parameter w("W", Mat::Zero(1, 3));
  Parameter b("b", Mat::Constant(1, 1, 5.0));
  Tape t;
  Vec x(3);
  x << 7.0, -2.0, 0.5;
  Var y = t.linear(w, b, t.constant(x));
  CHECK(t.value(y)[0] == doctest::Approx(5.0));
}

TEST_CASE("linear: analytic input gradient matches finite differences") {
  Rng rng(11);
  Parameter w = uniform_init("W", 4, 3, rng);
  Parameter b = uniform_init("b", 4, 1, rng);
  Parameter x("x", randn(3, rng));
  auto loss = [&](bool with_grad) {
    Tape t;
    Var y = t.linear(w, b, t.leaf(x));
    Var l = t.dot(y, y);
    if (with_grad) t.backward(l);
    return t.scalar(l);
  };
  std::vector<Parameter*> params{&w, &b, &x};
  auto report = grad_check(loss, params, 1e-6);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("linear: dimension mismatch is a configuration error") {
  Rng rng(1);
  Parameter w = uniform_init("W", 2, 3, rng);
  Parameter b = uniform_init("b", 2, 1, rng);
  Tape t;
  CHECK_THROWS_AS(t.linear(w, b, t.constant(randn(4, rng))), ConfigError);
}

TEST_CASE("activations: softmax of uniform logits is uniform") {
  Vec v = activation_value(Activation::softmax, Vec::Zero(3));
  for (int i = 0; i < 3; ++i) CHECK(v[i] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("activations: relu clips negatives") {
  Vec x(2);
  x << -2.0, 3.0;
  Vec v = activation_value(Activation::relu, x);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 3.0);
}

TEST_CASE("activations: tanh gradient matches finite differences") {
  Rng rng(7);
  Parameter x("x", randn(5, rng));
  Vec probe = randn(5, rng);
  auto loss = [&](bool with_grad) {
    Tape t;
    Var l = t.dot(t.tanh(t.leaf(x)), t.constant(probe));
    if (with_grad) t.backward(l);
    return t.scalar(l);
  };
  std::vector<Parameter*> params{&x};
  CHECK(grad_check(loss, params, 1e-6).max_rel_err < 1e-6);
}

TEST_CASE("activations: non-finite input is rejected") {
  Vec x(1);
  x[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(activation_value(Activation::tanh, x), ConfigError);
}

TEST_CASE("dropout: rate zero and eval mode are the identity") {
  Rng rng(3);
  Vec x = randn(16, rng);
  RngNoise noise(5);
  CHECK((dropout(x, 0.0, true, noise) - x).norm() == 0.0);
  CHECK((dropout(x, 0.1, false, noise) - x).norm() == 0.0);
}

TEST_CASE("dropout: rejects rates outside [0, 1)") {
  RngNoise noise(5);
  Vec x = Vec::Ones(4);
  CHECK_THROWS_AS(dropout(x, 1.0, true, noise), ConfigError);
  CHECK_THROWS_AS(dropout(x, -0.1, true, noise), ConfigError);
}

TEST_CASE("dropout: zeroed fraction and scaling match the rate in the large-n limit") {
  const int n = 100000;
  const double rate = 0.1;
  RngNoise noise(42);
  Vec x = Vec::Ones(n);
  Vec y = dropout(x, rate, true, noise);
  int zeroed = 0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (y[i] == 0.0) ++zeroed;
    sum += y[i];
  }
  double zero_frac = double(zeroed) / n;
  CHECK(zero_frac == doctest::Approx(rate).epsilon(0.1));
  CHECK(std::abs(zero_frac - rate) < 0.01);
  // inverted scaling keeps the expectation at the input
  CHECK(std::abs(sum / n - 1.0) < 0.02);
}

TEST_CASE("lstm: all-zero weights and state give zero outputs") {
  Rng rng(1);
  LstmCell cell("lstm", 3, 4, rng);
  cell.w.value.setZero();
  cell.b.value.setZero();
  RecurrentState s = RecurrentState::zero(4);
  RecurrentState out = cell.step_value(s, randn(3, rng));
  CHECK(out.hidden.norm() == 0.0);
  CHECK(out.cell.norm() == 0.0);
}

TEST_CASE("lstm: saturated forget gate carries the cell through") {
  Rng rng(2);
  LstmCell cell("lstm", 2, 3, rng);
  cell.w.value.setZero();
  cell.b.value.setZero();
  cell.b.value.block(3, 0, 3, 1).setConstant(50.0);  // forget block
  RecurrentState s{Vec::Zero(3), Vec::LinSpaced(3, -1.0, 1.0)};
  RecurrentState out = cell.step_value(s, randn(2, rng));
  CHECK((out.cell - s.cell).norm() < 1e-9);
}

TEST_CASE("lstm: weight gradients match finite differences") {
  Rng rng(21);
  LstmCell cell("lstm", 3, 4, rng);
  Vec x0 = randn(3, rng), x1 = randn(3, rng);
  Vec probe = randn(4, rng);
  auto loss = [&](bool with_grad) {
    Tape t;
    auto s = cell.start(t, RecurrentState::zero(4));
    s = cell.step(t, s, t.constant(x0));
    s = cell.step(t, s, t.constant(x1));
    Var l = t.dot(s.hidden, t.constant(probe));
    if (with_grad) t.backward(l);
    return t.scalar(l);
  };
  auto params = cell.params();
  CHECK(grad_check(loss, params, 1e-5).max_rel_err < 1e-4);
}

TEST_CASE("lstm: bitwise deterministic") {
  Rng rng(4);
  LstmCell cell("lstm", 2, 3, rng);
  RecurrentState s{randn(3, rng), randn(3, rng)};
  Vec x = randn(2, rng);
  RecurrentState a = cell.step_value(s, x);
  RecurrentState b = cell.step_value(s, x);
  CHECK(a.hidden == b.hidden);
  CHECK(a.cell == b.cell);
}

TEST_CASE("adagrad: first step moves by about lr in the gradient's direction") {
  Parameter p("p", Mat::Zero(2, 1));
  p.grad << 3.0, -0.5;
  adagrad_update(p, 0.01, 1e-10);
  CHECK(p.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p.value(1, 0) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p.grad.norm() == 0.0);  // zeroed afterwards
  CHECK(p.accum.minCoeff() >= 0.0);
}

TEST_CASE("adagrad: zero gradient leaves the value unchanged") {
  Parameter p("p", Mat::Constant(2, 2, 1.5));
  adagrad_update(p, 0.1);
  CHECK((p.value.array() == 1.5).all());
}

TEST_CASE("adagrad: second equal-gradient step shrinks by sqrt(2)") {
  Parameter p("p", Mat::Zero(1, 1));
  p.grad(0, 0) = 2.0;
  adagrad_update(p, 0.1, 1e-12);
  double first = -p.value(0, 0);
  p.grad(0, 0) = 2.0;
  double before = p.value(0, 0);
  adagrad_update(p, 0.1, 1e-12);
  double second = before - p.value(0, 0);
  CHECK(first == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(second == doctest::Approx(0.1 / std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("adagrad: learning rate zero is the identity on the value") {
  Rng rng(9);
  Parameter p("p", randn(4, rng));
  Mat before = p.value;
  p.grad = randn(4, rng);
  adagrad_update(p, 0.0);
  CHECK((p.value - before).norm() == 0.0);
}

TEST_CASE("adagrad: non-finite gradient aborts the step") {
  Parameter p("p", Mat::Zero(1, 1));
  p.grad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adagrad_update(p, 0.1), NumericError);
  CHECK(p.value(0, 0) == 0.0);
}

TEST_CASE("grad_check: exact gradients of a quadratic score below 1e-7") {
  Rng rng(31);
  Parameter w = uniform_init("W", 3, 3, rng);
  Vec x = randn(3, rng);
  auto loss = [&](bool with_grad) {
    Tape t;
    Parameter b("b", 3, 1);
    Var y = t.linear(w, b, t.constant(x));
    Var l = t.dot(y, y);
    if (with_grad) t.backward(l);
    return t.scalar(l);
  };
  std::vector<Parameter*> params{&w};
  CHECK(grad_check(loss, params, 1e-5).max_rel_err < 1e-7);
}

TEST_CASE("grad_check: a corrupted gradient is flagged at the right magnitude") {
  Rng rng(33);
  Parameter w = uniform_init("W", 2, 2, rng);
  Parameter v = uniform_init("V", 2, 2, rng);
  Vec x = randn(2, rng);
  auto loss = [&](bool with_grad) {
    Tape t;
    Parameter bw("bw", 2, 1), bv("bv", 2, 1);
    Var y = t.linear(w, bw, t.constant(x));
    Var y2 = t.linear(v, bv, y);
    Var l = t.dot(y2, y2);
    if (with_grad) {
      t.backward(l);
      w.grad *= 1.01;  // injected fault
    }
    return t.scalar(l);
  };
  std::vector<Parameter*> params{&w, &v};
  auto report = grad_check(loss, params, 1e-5);
  REQUIRE(report.params.size() == 2);
  CHECK(report.params[0].param == "W");
  CHECK(report.params[0].max_rel_err == doctest::Approx(0.01).epsilon(0.05));
  CHECK(report.params[1].max_rel_err < 1e-6);
  CHECK(report.max_rel_err > 1e-3);
}

TEST_CASE("clip_grad_norm: rescales only above the threshold") {
  Parameter a("a", Mat::Zero(2, 1)), b("b", Mat::Zero(2, 1));
  a.grad << 3.0, 0.0;
  b.grad << 0.0, 4.0;
  std::vector<Parameter*> params{&a, &b};
  CHECK(global_grad_norm(params) == doctest::Approx(5.0));
  clip_grad_norm(params, 10.0);
  CHECK(global_grad_norm(params) == doctest::Approx(5.0));
  clip_grad_norm(params, 2.5);
  CHECK(global_grad_norm(params) == doctest::Approx(2.5));
}

TEST_CASE("mlp: tape forward and value forward agree") {
  Rng rng(17);
  Mlp net("net", 3, {5, 4}, 2, rng);
  Vec x = randn(3, rng);
  Tape t;
  Var y = net.forward(t, t.constant(x), 0.0, false, nullptr);
  CHECK((t.value(y) - net.value(x)).norm() == 0.0);
}
