#pragma once

#include "svrnn/nn.hpp"

namespace svrnn {

// log-variances are clamped to this band everywhere they are produced, to
// keep exp() and its inverse well behaved.
inline constexpr double kLogVarClamp = 10.0;

// Diagonal Gaussian, parameterized by mean and per-dimension log-variance.
struct GaussianParams {
  Vec mean;
  Vec log_var;

  GaussianParams() = default;
  GaussianParams(Vec mean_, Vec log_var_)
      : mean(std::move(mean_)),
        log_var(log_var_.cwiseMax(-kLogVarClamp).cwiseMin(kLogVarClamp)) {}
};

struct CategoricalParams {
  Vec logits;
  Vec probs() const { return softmax_value(logits); }
};

// --- plain (value-path) operations -----------------------------------------

// mean + exp(log_var / 2) .* noise
Vec gauss_sample(const GaussianParams& p, const Vec& noise);

double gauss_log_prob(const GaussianParams& p, const Vec& x);

// KL(q || p) between diagonal Gaussians, analytic.
double gauss_kl(const GaussianParams& q, const GaussianParams& p);

// softmax((logits + g) / temperature), g_i = -log(-log u_i). The uniform
// noise is clamped into [1e-20, 1 - 1e-7] before the logs.
Vec gumbel_softmax_sample(const CategoricalParams& p, double temperature,
                          const Vec& uniform_noise);

// sum_i y_i * log softmax(logits)_i; y may be one-hot or any simplex point.
double cat_log_prob(const CategoricalParams& p, const Vec& y);

// KL(q || p) between the categorical distributions implied by the logits.
double cat_kl(const CategoricalParams& q, const CategoricalParams& p);

// --- tape (differentiable) counterparts -------------------------------------
//
// Same math built from tape primitives, so gradients come from the tape.
// Noise is always an explicit constant, never drawn internally.

struct GaussianVar {
  Var mean;
  Var log_var;
};

struct CategoricalVar {
  Var logits;
};

Var gauss_sample(Tape& t, const GaussianVar& p, const Vec& noise);
Var gauss_log_prob(Tape& t, const GaussianVar& p, const Vec& x);
Var gauss_kl(Tape& t, const GaussianVar& q, const GaussianVar& p);
Var gumbel_softmax_sample(Tape& t, const CategoricalVar& p, double temperature,
                          const Vec& uniform_noise);
Var cat_log_prob(Tape& t, const CategoricalVar& p, const Vec& y);
Var cat_kl(Tape& t, const CategoricalVar& q, const CategoricalVar& p);

// Gumbel noise vector from uniform draws (shared by both paths).
Vec gumbel_from_uniform(const Vec& uniform_noise);

}  // namespace svrnn
