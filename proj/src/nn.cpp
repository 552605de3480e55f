#include "svrnn/nn.hpp"

#include <algorithm>
#include <cmath>

namespace svrnn {

Parameter uniform_init(std::string name, int rows, int cols, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return Parameter(std::move(name), std::move(m));
}

// --- Tape -------------------------------------------------------------------

Var Tape::push(Vec v, std::function<void()> back) {
  nodes_.push_back(Node{std::move(v), Vec(), std::move(back)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Vec& Tape::gref(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Vec::Zero(n.value.size());
  return n.grad;
}

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw ConfigError("tape: invalid node reference");
}

Var Tape::constant(Vec v) { return push(std::move(v)); }

Var Tape::constant(double s) {
  Vec v(1);
  v[0] = s;
  return push(std::move(v));
}

Var Tape::leaf(Parameter& p) {
  if (p.cols() != 1) throw ConfigError("tape: leaf expects a column vector parameter");
  Var out = push(p.value.col(0));
  nodes_[out.id].back = [this, out, pp = &p]() {
    pp->grad.col(0) += nodes_[out.id].grad;
  };
  return out;
}

Var Tape::linear(Parameter& w, Parameter& b, Var x) {
  check(x);
  const Vec& xv = value(x);
  if (w.cols() != xv.size())
    throw ConfigError("linear: weight columns " + std::to_string(w.cols()) +
                      " != input dim " + std::to_string(xv.size()) + " (" +
                      w.name + ")");
  if (b.rows() != w.rows() || b.cols() != 1)
    throw ConfigError("linear: bias shape mismatch (" + b.name + ")");
  Var out = push(w.value * xv + b.value.col(0));
  nodes_[out.id].back = [this, out, x, pw = &w, pb = &b]() {
    const Vec& g = nodes_[out.id].grad;
    pw->grad += g * nodes_[x.id].value.transpose();
    pb->grad.col(0) += g;
    gref(x.id) += pw->value.transpose() * g;
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  if (value(a).size() != value(b).size()) throw ConfigError("add: dim mismatch");
  Var out = push(value(a) + value(b));
  nodes_[out.id].back = [this, out, a, b]() {
    const Vec& g = nodes_[out.id].grad;
    gref(a.id) += g;
    gref(b.id) += g;
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  if (value(a).size() != value(b).size()) throw ConfigError("sub: dim mismatch");
  Var out = push(value(a) - value(b));
  nodes_[out.id].back = [this, out, a, b]() {
    const Vec& g = nodes_[out.id].grad;
    gref(a.id) += g;
    gref(b.id) -= g;
  };
  return out;
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  if (value(a).size() != value(b).size()) throw ConfigError("mul: dim mismatch");
  Var out = push(value(a).cwiseProduct(value(b)));
  nodes_[out.id].back = [this, out, a, b]() {
    const Vec& g = nodes_[out.id].grad;
    gref(a.id) += g.cwiseProduct(nodes_[b.id].value);
    gref(b.id) += g.cwiseProduct(nodes_[a.id].value);
  };
  return out;
}

Var Tape::scale(Var a, double s) {
  check(a);
  Var out = push(value(a) * s);
  nodes_[out.id].back = [this, out, a, s]() {
    gref(a.id) += nodes_[out.id].grad * s;
  };
  return out;
}

Var Tape::scale_by(Var x, Var s) {
  check(x);
  check(s);
  if (value(s).size() != 1) throw ConfigError("scale_by: scale must be 1-dim");
  Var out = push(value(x) * value(s)[0]);
  nodes_[out.id].back = [this, out, x, s]() {
    const Vec& g = nodes_[out.id].grad;
    gref(x.id) += g * nodes_[s.id].value[0];
    gref(s.id)[0] += g.dot(nodes_[x.id].value);
  };
  return out;
}

Var Tape::concat(std::span<const Var> parts) {
  int total = 0;
  for (Var p : parts) {
    check(p);
    total += static_cast<int>(value(p).size());
  }
  Vec v(total);
  int off = 0;
  for (Var p : parts) {
    int len = static_cast<int>(value(p).size());
    v.segment(off, len) = value(p);
    off += len;
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  Var out = push(std::move(v));
  nodes_[out.id].back = [this, out, ps = std::move(ps)]() {
    const Vec& g = nodes_[out.id].grad;
    int o = 0;
    for (Var p : ps) {
      int len = static_cast<int>(nodes_[p.id].value.size());
      gref(p.id) += g.segment(o, len);
      o += len;
    }
  };
  return out;
}

Var Tape::concat(std::initializer_list<Var> parts) {
  std::vector<Var> v(parts);
  return concat(std::span<const Var>(v));
}

Var Tape::slice(Var a, int offset, int len) {
  check(a);
  if (offset < 0 || len < 0 || offset + len > value(a).size())
    throw ConfigError("slice: range out of bounds");
  Var out = push(value(a).segment(offset, len));
  nodes_[out.id].back = [this, out, a, offset, len]() {
    gref(a.id).segment(offset, len) += nodes_[out.id].grad;
  };
  return out;
}

Var Tape::tanh(Var a) {
  check(a);
  Var out = push(value(a).array().tanh());
  nodes_[out.id].back = [this, out, a]() {
    const Vec& y = nodes_[out.id].value;
    gref(a.id).array() +=
        nodes_[out.id].grad.array() * (1.0 - y.array().square());
  };
  return out;
}

Var Tape::sigmoid(Var a) {
  check(a);
  Vec y = (1.0 + (-value(a).array()).exp()).inverse();
  Var out = push(std::move(y));
  nodes_[out.id].back = [this, out, a]() {
    const Vec& y = nodes_[out.id].value;
    gref(a.id).array() +=
        nodes_[out.id].grad.array() * y.array() * (1.0 - y.array());
  };
  return out;
}

Var Tape::relu(Var a) {
  check(a);
  Var out = push(value(a).cwiseMax(0.0));
  nodes_[out.id].back = [this, out, a]() {
    const Vec& x = nodes_[a.id].value;
    Vec& g = gref(a.id);
    for (int i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) g[i] += nodes_[out.id].grad[i];
  };
  return out;
}

Var Tape::exp(Var a) {
  check(a);
  Var out = push(value(a).array().exp());
  nodes_[out.id].back = [this, out, a]() {
    gref(a.id).array() +=
        nodes_[out.id].grad.array() * nodes_[out.id].value.array();
  };
  return out;
}

Var Tape::softmax(Var a) {
  check(a);
  Var out = push(softmax_value(value(a)));
  nodes_[out.id].back = [this, out, a]() {
    const Vec& s = nodes_[out.id].value;
    const Vec& g = nodes_[out.id].grad;
    double gs = g.dot(s);
    gref(a.id).array() += s.array() * (g.array() - gs);
  };
  return out;
}

Var Tape::log_softmax(Var a) {
  check(a);
  Var out = push(log_softmax_value(value(a)));
  nodes_[out.id].back = [this, out, a]() {
    const Vec& g = nodes_[out.id].grad;
    Vec s = nodes_[out.id].value.array().exp();
    gref(a.id) += g - s * g.sum();
  };
  return out;
}

Var Tape::clamp(Var a, double lo, double hi) {
  check(a);
  Var out = push(value(a).cwiseMax(lo).cwiseMin(hi));
  nodes_[out.id].back = [this, out, a, lo, hi]() {
    const Vec& x = nodes_[a.id].value;
    Vec& g = gref(a.id);
    for (int i = 0; i < x.size(); ++i)
      if (x[i] > lo && x[i] < hi) g[i] += nodes_[out.id].grad[i];
  };
  return out;
}

Var Tape::sum(Var a) {
  check(a);
  Vec v(1);
  v[0] = value(a).sum();
  Var out = push(std::move(v));
  nodes_[out.id].back = [this, out, a]() {
    gref(a.id).array() += nodes_[out.id].grad[0];
  };
  return out;
}

Var Tape::dot(Var a, Var b) {
  check(a);
  check(b);
  if (value(a).size() != value(b).size()) throw ConfigError("dot: dim mismatch");
  Vec v(1);
  v[0] = value(a).dot(value(b));
  Var out = push(std::move(v));
  nodes_[out.id].back = [this, out, a, b]() {
    double g = nodes_[out.id].grad[0];
    gref(a.id) += g * nodes_[b.id].value;
    gref(b.id) += g * nodes_[a.id].value;
  };
  return out;
}

double Tape::scalar(Var v) const {
  check(v);
  if (value(v).size() != 1) throw ConfigError("scalar: node is not 1-dim");
  return value(v)[0];
}

Vec Tape::grad(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Vec::Zero(n.value.size());
  return n.grad;
}

void Tape::backward(Var root) {
  check(root);
  if (value(root).size() != 1)
    throw ConfigError("backward: root must be scalar");
  for (Node& n : nodes_) n.grad.resize(0);
  gref(root.id).setOnes();
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.back) continue;
    n.back();
  }
}

// --- plain primitives --------------------------------------------------------

Vec activation_value(Activation kind, const Vec& x) {
  if (!x.allFinite()) throw ConfigError("activation: non-finite input");
  switch (kind) {
    case Activation::tanh:
      return x.array().tanh();
    case Activation::relu:
      return x.cwiseMax(0.0);
    case Activation::sigmoid:
      return (1.0 + (-x.array()).exp()).inverse();
    case Activation::softmax:
      return softmax_value(x);
  }
  throw ConfigError("activation: unknown kind");
}

Vec dropout_mask(int dim, double rate, NoiseSource& noise) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must be in [0, 1)");
  Vec m(dim);
  double keep_scale = 1.0 / (1.0 - rate);
  for (int i = 0; i < dim; ++i)
    m[i] = noise.uniform() < rate ? 0.0 : keep_scale;
  return m;
}

Vec dropout(const Vec& x, double rate, bool training, NoiseSource& noise) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  return x.cwiseProduct(dropout_mask(static_cast<int>(x.size()), rate, noise));
}

// --- LstmCell -----------------------------------------------------------------

LstmCell::LstmCell(const std::string& name, int input_dim, int state_dim,
                   Rng& rng)
    : w(uniform_init(name + ".W", 4 * state_dim, input_dim + state_dim, rng)),
      b(name + ".b", 4 * state_dim, 1),
      input_dim_(input_dim),
      state_dim_(state_dim) {
  // forget-gate block
  b.value.block(state_dim, 0, state_dim, 1).setConstant(1.0);
}

LstmCell::StateVar LstmCell::start(Tape& t, const RecurrentState& s) const {
  return {t.constant(s.hidden), t.constant(s.cell)};
}

LstmCell::StateVar LstmCell::step(Tape& t, const StateVar& prev, Var input) {
  const int d = state_dim_;
  Var pre = t.linear(w, b, t.concat({input, prev.hidden}));
  Var gi = t.sigmoid(t.slice(pre, 0, d));
  Var gf = t.sigmoid(t.slice(pre, d, d));
  Var gg = t.tanh(t.slice(pre, 2 * d, d));
  Var go = t.sigmoid(t.slice(pre, 3 * d, d));
  Var cell = t.add(t.mul(gf, prev.cell), t.mul(gi, gg));
  Var hidden = t.mul(go, t.tanh(cell));
  return {hidden, cell};
}

RecurrentState LstmCell::state_value(const Tape& t, const StateVar& s) const {
  return {t.value(s.hidden), t.value(s.cell)};
}

RecurrentState LstmCell::step_value(const RecurrentState& prev,
                                    const Vec& input) const {
  if (input.size() != input_dim_)
    throw ConfigError("lstm: input dim mismatch");
  const int d = state_dim_;
  Vec in(input_dim_ + d);
  in << input, prev.hidden;
  Vec pre = w.value * in + b.value.col(0);
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  RecurrentState out;
  out.cell.resize(d);
  out.hidden.resize(d);
  for (int i = 0; i < d; ++i) {
    double gi = sig(pre[i]);
    double gf = sig(pre[d + i]);
    double gg = std::tanh(pre[2 * d + i]);
    double go = sig(pre[3 * d + i]);
    out.cell[i] = gf * prev.cell[i] + gi * gg;
    out.hidden[i] = go * std::tanh(out.cell[i]);
  }
  return out;
}

// --- Mlp -----------------------------------------------------------------------

Mlp::Mlp(const std::string& name, int in_dim, const std::vector<int>& hidden,
         int out_dim, Rng& rng)
    : in_(in_dim), out_(out_dim) {
  if (in_dim < 1 || out_dim < 1) throw ConfigError("mlp: dims must be >= 1");
  int prev = in_dim;
  for (size_t i = 0; i < hidden.size(); ++i) {
    std::string l = name + ".l" + std::to_string(i);
    w_.push_back(uniform_init(l + ".W", hidden[i], prev, rng));
    b_.emplace_back(l + ".b", hidden[i], 1);
    prev = hidden[i];
  }
  w_.push_back(uniform_init(name + ".out.W", out_dim, prev, rng));
  b_.emplace_back(name + ".out.b", out_dim, 1);
}

Var Mlp::forward(Tape& t, Var x, double dropout_rate, bool training,
                 NoiseSource* noise) {
  Var h = x;
  for (size_t i = 0; i + 1 < w_.size(); ++i) {
    h = t.tanh(t.linear(w_[i], b_[i], h));
    if (training && dropout_rate > 0.0) {
      if (noise == nullptr) throw ConfigError("mlp: dropout needs a noise source");
      h = t.mul(h, t.constant(dropout_mask(w_[i].rows(), dropout_rate, *noise)));
    }
  }
  return t.linear(w_.back(), b_.back(), h);
}

Vec Mlp::value(const Vec& x) const {
  if (x.size() != in_) throw ConfigError("mlp: input dim mismatch");
  Vec h = x;
  for (size_t i = 0; i + 1 < w_.size(); ++i)
    h = (w_[i].value * h + b_[i].value.col(0)).array().tanh();
  return w_.back().value * h + b_.back().value.col(0);
}

std::vector<Parameter*> Mlp::params() {
  std::vector<Parameter*> out;
  for (size_t i = 0; i < w_.size(); ++i) {
    out.push_back(&w_[i]);
    out.push_back(&b_[i]);
  }
  return out;
}

// --- optimizer --------------------------------------------------------------------

void adagrad_update(Parameter& p, double learning_rate, double epsilon) {
  if (epsilon <= 0.0) throw ConfigError("adagrad: epsilon must be > 0");
  if (!p.grad.allFinite())
    throw NumericError("adagrad: non-finite gradient in " + p.name);
  p.accum.array() += p.grad.array().square();
  p.value.array() -=
      learning_rate * p.grad.array() / (p.accum.array().sqrt() + epsilon);
  p.grad.setZero();
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

void clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  double s = max_norm / norm;
  for (Parameter* p : params) p->grad *= s;
}

// --- gradient checking ---------------------------------------------------------------

GradCheckReport grad_check(const std::function<double(bool)>& loss,
                           std::span<Parameter* const> params, double eps) {
  for (Parameter* p : params) p->zero_grad();
  loss(true);
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    GradCheckEntry entry{p.name, 0.0};
    for (int i = 0; i < p.rows(); ++i) {
      for (int j = 0; j < p.cols(); ++j) {
        double orig = p.value(i, j);
        p.value(i, j) = orig + eps;
        double up = loss(false);
        p.value(i, j) = orig - eps;
        double down = loss(false);
        p.value(i, j) = orig;
        double numeric = (up - down) / (2.0 * eps);
        double a = analytic[k](i, j);
        double denom = std::max(std::abs(a), std::abs(numeric));
        double rel = denom < 1e-8 ? 0.0 : std::abs(a - numeric) / denom;
        entry.max_rel_err = std::max(entry.max_rel_err, rel);
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace svrnn
