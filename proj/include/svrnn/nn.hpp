#pragma once

#include "svrnn/common.hpp"

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace svrnn {

// A named tensor with its gradient accumulator and the Adagrad second-moment
// accumulator. Vectors are stored as n-by-1 matrices.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat accum;

  Parameter(std::string name_, int rows, int cols)
      : name(std::move(name_)),
        value(Mat::Zero(rows, cols)),
        grad(Mat::Zero(rows, cols)),
        accum(Mat::Zero(rows, cols)) {}

  Parameter(std::string name_, Mat value_)
      : name(std::move(name_)),
        value(std::move(value_)),
        grad(Mat::Zero(value.rows(), value.cols())),
        accum(Mat::Zero(value.rows(), value.cols())) {}

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
  void zero_grad() { grad.setZero(); }
};

// Weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), fan_in = cols.
Parameter uniform_init(std::string name, int rows, int cols, Rng& rng);

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamic reverse-mode tape over vector-valued nodes. A tape is built per
// loss evaluation; backward() accumulates into each touched Parameter's grad.
// Node creation order is a topological order, so backward runs the nodes in
// reverse. Not copyable or movable: backward closures capture `this`.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Vec v);
  Var constant(double s);
  // Column-vector parameter as a leaf node; backward adds into p.grad.
  Var leaf(Parameter& p);

  // W*x + b. Backward: dW += g x^T, db += g, dx += W^T g.
  Var linear(Parameter& w, Parameter& b, Var x);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  Var scale_by(Var x, Var s);  // s is 1-dim; result s[0]*x
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts);
  Var slice(Var a, int offset, int len);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var softmax(Var a);
  Var log_softmax(Var a);
  // Hard clamp; gradient passes only where the input was strictly inside.
  Var clamp(Var a, double lo, double hi);
  Var sum(Var a);          // 1-dim
  Var dot(Var a, Var b);   // 1-dim

  // Seeds d(root)/d(root) = 1 and runs all backward closures in reverse
  // creation order. root must be scalar (dim 1).
  void backward(Var root);

  const Vec& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  // Gradient of the last backward() root w.r.t. this node (zero if untouched).
  Vec grad(Var v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Vec value;
    Vec grad;  // lazily allocated during backward
    std::function<void()> back;
  };
  std::vector<Node> nodes_;

  Var push(Vec v, std::function<void()> back = {});
  Vec& gref(int id);  // allocate-on-demand gradient accumulator
  void check(Var v) const;
};

// --- plain (value-path) primitives ----------------------------------------

enum class Activation { tanh, relu, softmax, sigmoid };

Vec activation_value(Activation kind, const Vec& x);

// Inverted dropout: entries are 0 with probability rate, else 1/(1-rate).
Vec dropout_mask(int dim, double rate, NoiseSource& noise);
// Training mode applies a fresh mask; eval mode is the identity.
Vec dropout(const Vec& x, double rate, bool training, NoiseSource& noise);

struct RecurrentState {
  Vec hidden;
  Vec cell;
  static RecurrentState zero(int dim) {
    return {Vec::Zero(dim), Vec::Zero(dim)};
  }
};

// Standard LSTM cell, gates stacked [input, forget, candidate, output] in one
// weight matrix over [input, hidden]. Forget-gate bias starts at 1.
class LstmCell {
 public:
  LstmCell(const std::string& name, int input_dim, int state_dim, Rng& rng);

  struct StateVar {
    Var hidden;
    Var cell;
  };

  StateVar start(Tape& t, const RecurrentState& s) const;
  StateVar step(Tape& t, const StateVar& prev, Var input);
  RecurrentState state_value(const Tape& t, const StateVar& s) const;

  // Forward without a tape; bitwise deterministic.
  RecurrentState step_value(const RecurrentState& prev, const Vec& input) const;

  std::vector<Parameter*> params() { return {&w, &b}; }
  int input_dim() const { return input_dim_; }
  int state_dim() const { return state_dim_; }

  Parameter w;
  Parameter b;

 private:
  int input_dim_;
  int state_dim_;
};

// Fully connected net: tanh hidden layers (with optional inverted dropout on
// the hidden activations) and a linear output layer. Distribution parameters
// and decoder outputs are produced by the linear output, which never gets
// dropout.
class Mlp {
 public:
  Mlp(const std::string& name, int in_dim, const std::vector<int>& hidden,
      int out_dim, Rng& rng);

  Var forward(Tape& t, Var x, double dropout_rate, bool training,
              NoiseSource* noise);
  Vec value(const Vec& x) const;

  std::vector<Parameter*> params();
  int in_dim() const { return in_; }
  int out_dim() const { return out_; }

 private:
  std::vector<Parameter> w_;
  std::vector<Parameter> b_;
  int in_ = 0;
  int out_ = 0;
};

// --- optimizer --------------------------------------------------------------

// accum += grad^2; value -= lr * grad / (sqrt(accum) + eps); grad zeroed.
// Throws NumericError on non-finite gradients, leaving value untouched.
void adagrad_update(Parameter& p, double learning_rate, double epsilon = 1e-8);

double global_grad_norm(std::span<Parameter* const> params);
void clip_grad_norm(std::span<Parameter* const> params, double max_norm);

// --- finite-difference gradient checking ------------------------------------

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> params;
};

// loss(true) must compute the loss and accumulate analytic gradients into the
// given parameters; loss(false) must only return the loss value. The loss
// must be deterministic across calls (fixed noise). Every partial derivative
// is compared against central differences (f(x+eps)-f(x-eps))/(2 eps).
GradCheckReport grad_check(const std::function<double(bool)>& loss,
                           std::span<Parameter* const> params,
                           double eps = 1e-5);

}  // namespace svrnn
