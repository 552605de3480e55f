#include "svrnn/distributions.hpp"

#include <cmath>
#include <numbers>

namespace svrnn {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
}

Vec gumbel_from_uniform(const Vec& uniform_noise) {
  Eigen::ArrayXd u = uniform_noise.array().max(1e-20).min(1.0 - 1e-7);
  return (-((-u.log()).log())).matrix();
}

// --- plain operations --------------------------------------------------------

Vec gauss_sample(const GaussianParams& p, const Vec& noise) {
  if (noise.size() != p.mean.size())
    throw ConfigError("gauss_sample: noise dim mismatch");
  return p.mean.array() + (0.5 * p.log_var.array()).exp() * noise.array();
}

double gauss_log_prob(const GaussianParams& p, const Vec& x) {
  if (x.size() != p.mean.size())
    throw ConfigError("gauss_log_prob: dim mismatch");
  Eigen::ArrayXd d = x.array() - p.mean.array();
  return (-0.5 * kLog2Pi - 0.5 * p.log_var.array() -
          0.5 * d.square() * (-p.log_var.array()).exp())
      .sum();
}

double gauss_kl(const GaussianParams& q, const GaussianParams& p) {
  if (q.mean.size() != p.mean.size()) throw ConfigError("gauss_kl: dim mismatch");
  // grouped so identical parameters give exactly zero
  Eigen::ArrayXd dm = q.mean.array() - p.mean.array();
  Eigen::ArrayXd dlv = q.log_var.array() - p.log_var.array();
  return (0.5 * (dlv.exp() - 1.0 - dlv + dm.square() * (-p.log_var.array()).exp()))
      .sum();
}

Vec gumbel_softmax_sample(const CategoricalParams& p, double temperature,
                          const Vec& uniform_noise) {
  if (temperature <= 0.0)
    throw ConfigError("gumbel_softmax: temperature must be > 0");
  if (uniform_noise.size() != p.logits.size())
    throw ConfigError("gumbel_softmax: noise dim mismatch");
  Vec g = gumbel_from_uniform(uniform_noise);
  return softmax_value((p.logits + g) / temperature);
}

double cat_log_prob(const CategoricalParams& p, const Vec& y) {
  if (y.size() != p.logits.size())
    throw ConfigError("cat_log_prob: dim mismatch");
  return y.dot(log_softmax_value(p.logits));
}

double cat_kl(const CategoricalParams& q, const CategoricalParams& p) {
  if (q.logits.size() != p.logits.size())
    throw ConfigError("cat_kl: dim mismatch");
  Vec lq = log_softmax_value(q.logits);
  Vec lp = log_softmax_value(p.logits);
  return (lq.array().exp() * (lq - lp).array()).sum();
}

// --- tape counterparts ---------------------------------------------------------

Var gauss_sample(Tape& t, const GaussianVar& p, const Vec& noise) {
  Var sigma = t.exp(t.scale(p.log_var, 0.5));
  return t.add(p.mean, t.mul(sigma, t.constant(noise)));
}

Var gauss_log_prob(Tape& t, const GaussianVar& p, const Vec& x) {
  int d = static_cast<int>(x.size());
  Var diff = t.sub(t.constant(x), p.mean);
  Var quad = t.mul(t.mul(diff, diff), t.exp(t.scale(p.log_var, -1.0)));
  Var s = t.add(t.scale(t.sum(p.log_var), -0.5), t.scale(t.sum(quad), -0.5));
  return t.add(s, t.constant(-0.5 * kLog2Pi * d));
}

Var gauss_kl(Tape& t, const GaussianVar& q, const GaussianVar& p) {
  int d = static_cast<int>(t.value(q.mean).size());
  Var dm = t.sub(q.mean, p.mean);
  Var inner = t.add(t.exp(q.log_var), t.mul(dm, dm));
  Var ratio = t.mul(inner, t.exp(t.scale(p.log_var, -1.0)));
  Var terms = t.add(t.sub(p.log_var, q.log_var), ratio);
  return t.add(t.scale(t.sum(terms), 0.5), t.constant(-0.5 * d));
}

Var gumbel_softmax_sample(Tape& t, const CategoricalVar& p, double temperature,
                          const Vec& uniform_noise) {
  if (temperature <= 0.0)
    throw ConfigError("gumbel_softmax: temperature must be > 0");
  Vec g = gumbel_from_uniform(uniform_noise);
  Var shifted = t.add(p.logits, t.constant(g));
  return t.softmax(t.scale(shifted, 1.0 / temperature));
}

Var cat_log_prob(Tape& t, const CategoricalVar& p, const Vec& y) {
  return t.dot(t.constant(y), t.log_softmax(p.logits));
}

Var cat_kl(Tape& t, const CategoricalVar& q, const CategoricalVar& p) {
  Var lq = t.log_softmax(q.logits);
  Var lp = t.log_softmax(p.logits);
  return t.sum(t.mul(t.softmax(q.logits), t.sub(lq, lp)));
}

}  // namespace svrnn
