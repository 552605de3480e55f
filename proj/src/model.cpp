#include "svrnn/model.hpp"

#include <cmath>

namespace svrnn {

void ModelSpec::validate() const {
  if (feature_dim < 1 || num_classes < 1 || latent_dim < 1 || state_dim < 1)
    throw ConfigError("model spec: dims must be >= 1");
  if (ctx_feature_dim < 0 || ctx_state_dim < 0)
    throw ConfigError("model spec: context dims must be >= 0");
  for (int h : hidden_sizes)
    if (h < 1) throw ConfigError("model spec: hidden sizes must be >= 1");
}

SvrnnModel::SvrnnModel(ModelSpec spec, const std::string& name, Rng& rng)
    : spec_(std::move(spec)),
      name_(name),
      prior_label_net_(name + ".prior_label",
                       spec_.state_dim + spec_.ctx_state_dim,
                       spec_.hidden_sizes, spec_.num_classes, rng),
      prior_latent_net_(name + ".prior_latent",
                        spec_.num_classes + spec_.state_dim + spec_.ctx_state_dim,
                        spec_.hidden_sizes, 2 * spec_.latent_dim, rng),
      recog_label_net_(name + ".recog_label",
                       spec_.feature_dim + spec_.ctx_feature_dim +
                           spec_.state_dim + spec_.ctx_state_dim,
                       spec_.hidden_sizes, spec_.num_classes, rng),
      recog_latent_net_(name + ".recog_latent",
                        spec_.feature_dim + spec_.ctx_feature_dim +
                            spec_.num_classes + spec_.state_dim +
                            spec_.ctx_state_dim,
                        spec_.hidden_sizes, 2 * spec_.latent_dim, rng),
      decoder_net_(name + ".decoder",
                   spec_.num_classes + spec_.latent_dim + spec_.state_dim +
                       spec_.ctx_state_dim,
                   spec_.hidden_sizes, 2 * spec_.feature_dim, rng),
      recurrence_(name + ".lstm",
                  spec_.feature_dim + spec_.num_classes + spec_.latent_dim,
                  spec_.state_dim, rng) {
  spec_.validate();
}

std::vector<Parameter*> SvrnnModel::parameters() {
  std::vector<Parameter*> out;
  for (Mlp* net : {&prior_label_net_, &prior_latent_net_, &recog_label_net_,
                   &recog_latent_net_, &decoder_net_}) {
    auto p = net->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  auto p = recurrence_.params();
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

// --- conditioning assembly ---------------------------------------------------

Var SvrnnModel::cat_ctx(Tape& t, Var self, Var ctx, int expected,
                        const char* what) const {
  if (expected == 0) {
    if (ctx.valid() && t.value(ctx).size() != 0)
      throw ConfigError(std::string(what) + ": model has no context channel");
    return self;
  }
  if (!ctx.valid())
    throw ConfigError(std::string(what) + ": context input required");
  if (t.value(ctx).size() != expected)
    throw ConfigError(std::string(what) + ": context dim mismatch");
  return t.concat({self, ctx});
}

Vec SvrnnModel::cat_ctx_value(const Vec& self, const Vec& ctx, int expected,
                              const char* what) const {
  if (expected == 0) {
    if (ctx.size() != 0)
      throw ConfigError(std::string(what) + ": model has no context channel");
    return self;
  }
  if (ctx.size() != expected)
    throw ConfigError(std::string(what) + ": context dim mismatch");
  Vec out(self.size() + ctx.size());
  out << self, ctx;
  return out;
}

GaussianVar SvrnnModel::split_gaussian(Tape& t, Var raw, int dim) const {
  return {t.slice(raw, 0, dim),
          t.clamp(t.slice(raw, dim, dim), -kLogVarClamp, kLogVarClamp)};
}

GaussianParams SvrnnModel::split_gaussian_value(const Vec& raw, int dim) const {
  return GaussianParams(raw.head(dim), raw.tail(dim));
}

// --- tape building blocks ------------------------------------------------------

CategoricalVar SvrnnModel::prior_label(Tape& t, Var h, const Ctx& ctx,
                                       const LossConfig& cfg,
                                       NoiseSource* noise) {
  Var in = cat_ctx(t, h, ctx.h, spec_.ctx_state_dim, "prior_label");
  return {prior_label_net_.forward(t, in, cfg.dropout, cfg.training, noise)};
}

GaussianVar SvrnnModel::prior_latent(Tape& t, Var y, Var h, const Ctx& ctx,
                                     const LossConfig& cfg,
                                     NoiseSource* noise) {
  Var hc = cat_ctx(t, h, ctx.h, spec_.ctx_state_dim, "prior_latent");
  Var raw = prior_latent_net_.forward(t, t.concat({y, hc}), cfg.dropout,
                                      cfg.training, noise);
  return split_gaussian(t, raw, spec_.latent_dim);
}

CategoricalVar SvrnnModel::recog_label(Tape& t, Var x, Var h, const Ctx& ctx,
                                       const LossConfig& cfg,
                                       NoiseSource* noise) {
  Var xc = cat_ctx(t, x, ctx.x, spec_.ctx_feature_dim, "recog_label");
  Var hc = cat_ctx(t, h, ctx.h, spec_.ctx_state_dim, "recog_label");
  Var raw = recog_label_net_.forward(t, t.concat({xc, hc}), cfg.dropout,
                                     cfg.training, noise);
  return {raw};
}

GaussianVar SvrnnModel::recog_latent(Tape& t, Var x, Var y, Var h,
                                     const Ctx& ctx, const LossConfig& cfg,
                                     NoiseSource* noise) {
  Var xc = cat_ctx(t, x, ctx.x, spec_.ctx_feature_dim, "recog_latent");
  Var hc = cat_ctx(t, h, ctx.h, spec_.ctx_state_dim, "recog_latent");
  Var raw = recog_latent_net_.forward(t, t.concat({xc, y, hc}), cfg.dropout,
                                      cfg.training, noise);
  return split_gaussian(t, raw, spec_.latent_dim);
}

GaussianVar SvrnnModel::decode(Tape& t, Var y, Var z, Var h, const Ctx& ctx,
                               const LossConfig& cfg, NoiseSource* noise) {
  Var hc = cat_ctx(t, h, ctx.h, spec_.ctx_state_dim, "decode");
  Var raw = decoder_net_.forward(t, t.concat({y, z, hc}), cfg.dropout,
                                 cfg.training, noise);
  return split_gaussian(t, raw, spec_.feature_dim);
}

LstmCell::StateVar SvrnnModel::advance(Tape& t, const LstmCell::StateVar& state,
                                       Var x, Var y, Var z) {
  return recurrence_.step(t, state, t.concat({x, y, z}));
}

LstmCell::StateVar SvrnnModel::start_state(Tape& t) const {
  return recurrence_.start(t, zero_state());
}

// --- step losses -----------------------------------------------------------------

SvrnnModel::StepOut SvrnnModel::step_labeled(Tape& t,
                                             const LstmCell::StateVar& state,
                                             const Vec& x, int label,
                                             NoiseSource& noise,
                                             const LossConfig& cfg,
                                             const Ctx& ctx) {
  const int n = spec_.num_classes;
  if (label < 0 || label >= n)
    throw ConfigError("step_labeled: label out of range");
  if (x.size() != spec_.feature_dim)
    throw ConfigError("step_labeled: feature dim mismatch");
  Vec y_hot = one_hot(label, n);
  Var xv = t.constant(x);
  Var yv = t.constant(y_hot);
  Var h = state.hidden;

  CategoricalVar p_y = prior_label(t, h, ctx, cfg, &noise);
  CategoricalVar q_y = recog_label(t, xv, h, ctx, cfg, &noise);
  GaussianVar q_z = recog_latent(t, xv, yv, h, ctx, cfg, &noise);
  Vec eps = noise.normal_vec(spec_.latent_dim);
  Var z = gauss_sample(t, q_z, eps);
  GaussianVar p_z = prior_latent(t, yv, h, ctx, cfg, &noise);
  GaussianVar p_x = decode(t, yv, z, h, ctx, cfg, &noise);

  Var recon = gauss_log_prob(t, p_x, x);
  Var kl_z = gauss_kl(t, q_z, p_z);
  // fixed uniform label prior: a constant, kept in the reported loss
  double log_py = -std::log(static_cast<double>(n));
  Var classifier = t.scale(
      t.add(cat_log_prob(t, p_y, y_hot), cat_log_prob(t, q_y, y_hot)), -1.0);

  Var total = t.add(t.scale(recon, -1.0), kl_z);
  total = t.add(total, t.constant(-log_py));
  total = t.add(total, t.scale(classifier, cfg.alpha));

  StepOut out{total,
              StepLoss{t.scalar(recon), t.scalar(kl_z), log_py,
                       t.scalar(classifier), t.scalar(total)},
              advance(t, state, xv, yv, z)};
  return out;
}

SvrnnModel::StepOut SvrnnModel::step_unlabeled(Tape& t,
                                               const LstmCell::StateVar& state,
                                               const Vec& x, NoiseSource& noise,
                                               const LossConfig& cfg,
                                               const Ctx& ctx) {
  const int n = spec_.num_classes;
  if (x.size() != spec_.feature_dim)
    throw ConfigError("step_unlabeled: feature dim mismatch");
  Var xv = t.constant(x);
  Var h = state.hidden;

  CategoricalVar p_y = prior_label(t, h, ctx, cfg, &noise);
  CategoricalVar q_y = recog_label(t, xv, h, ctx, cfg, &noise);
  Var q_probs = t.softmax(q_y.logits);
  Vec eps = noise.normal_vec(spec_.latent_dim);  // shared across classes

  // exact marginalization over the label: sum_c q(c) * (recon_c - kl_c)
  Var bound_mix{};
  Var z_mix{};
  double recon_mix = 0.0, kl_mix = 0.0;
  const Vec q_vals = t.value(q_probs);
  for (int c = 0; c < n; ++c) {
    Var yc = t.constant(one_hot(c, n));
    GaussianVar q_z = recog_latent(t, xv, yc, h, ctx, cfg, &noise);
    Var zc = gauss_sample(t, q_z, eps);
    GaussianVar p_z = prior_latent(t, yc, h, ctx, cfg, &noise);
    GaussianVar p_x = decode(t, yc, zc, h, ctx, cfg, &noise);
    Var recon_c = gauss_log_prob(t, p_x, x);
    Var kl_c = gauss_kl(t, q_z, p_z);
    Var w = t.slice(q_probs, c, 1);
    Var weighted = t.scale_by(t.sub(recon_c, kl_c), w);
    Var z_part = t.scale_by(zc, w);
    bound_mix = c == 0 ? weighted : t.add(bound_mix, weighted);
    z_mix = c == 0 ? z_part : t.add(z_mix, z_part);
    recon_mix += q_vals[c] * t.scalar(recon_c);
    kl_mix += q_vals[c] * t.scalar(kl_c);
  }
  Var kl_y = cat_kl(t, q_y, p_y);
  Var total = t.add(t.scale(bound_mix, -1.0), kl_y);

  Var y_state = q_probs;
  if (cfg.sample_state_label) {
    Vec u = noise.uniform_vec(n);
    y_state = gumbel_softmax_sample(t, q_y, cfg.gumbel_temp, u);
  }

  StepOut out{total,
              StepLoss{recon_mix, kl_mix, t.scalar(kl_y), 0.0, t.scalar(total)},
              advance(t, state, xv, y_state, z_mix)};
  return out;
}

SvrnnModel::SequenceOut SvrnnModel::sequence_loss(
    Tape& t, std::span<const SequenceStep> steps, NoiseSource& noise,
    const LossConfig& cfg) {
  if (steps.empty()) throw DataError("sequence_loss: empty sequence");
  LstmCell::StateVar state = start_state(t);
  SequenceOut out;
  Var total{};
  for (size_t i = 0; i < steps.size(); ++i) {
    const SequenceStep& s = steps[i];
    StepOut so = s.observed
                     ? step_labeled(t, state, s.x, *s.label, noise, cfg)
                     : step_unlabeled(t, state, s.x, noise, cfg);
    if (!std::isfinite(so.loss.total))
      throw NumericError("sequence_loss: non-finite loss at step " +
                         std::to_string(i));
    total = i == 0 ? so.total : t.add(total, so.total);
    out.steps.push_back(so.loss);
    state = so.state;
  }
  out.total = total;
  out.total_value = t.scalar(total);
  out.state = state;
  return out;
}

// --- value-path networks ------------------------------------------------------------

CategoricalParams SvrnnModel::prior_label_value(const Vec& h,
                                                const CtxVals& ctx) const {
  return {prior_label_net_.value(
      cat_ctx_value(h, ctx.h, spec_.ctx_state_dim, "prior_label"))};
}

GaussianParams SvrnnModel::prior_latent_value(const Vec& y, const Vec& h,
                                              const CtxVals& ctx) const {
  Vec hc = cat_ctx_value(h, ctx.h, spec_.ctx_state_dim, "prior_latent");
  Vec in(y.size() + hc.size());
  in << y, hc;
  return split_gaussian_value(prior_latent_net_.value(in), spec_.latent_dim);
}

CategoricalParams SvrnnModel::recog_label_value(const Vec& x, const Vec& h,
                                                const CtxVals& ctx) const {
  Vec xc = cat_ctx_value(x, ctx.x, spec_.ctx_feature_dim, "recog_label");
  Vec hc = cat_ctx_value(h, ctx.h, spec_.ctx_state_dim, "recog_label");
  Vec in(xc.size() + hc.size());
  in << xc, hc;
  return {recog_label_net_.value(in)};
}

GaussianParams SvrnnModel::recog_latent_value(const Vec& x, const Vec& y,
                                              const Vec& h,
                                              const CtxVals& ctx) const {
  Vec xc = cat_ctx_value(x, ctx.x, spec_.ctx_feature_dim, "recog_latent");
  Vec hc = cat_ctx_value(h, ctx.h, spec_.ctx_state_dim, "recog_latent");
  Vec in(xc.size() + y.size() + hc.size());
  in << xc, y, hc;
  return split_gaussian_value(recog_latent_net_.value(in), spec_.latent_dim);
}

GaussianParams SvrnnModel::decoder_value(const Vec& y, const Vec& z,
                                         const Vec& h,
                                         const CtxVals& ctx) const {
  Vec hc = cat_ctx_value(h, ctx.h, spec_.ctx_state_dim, "decode");
  Vec in(y.size() + z.size() + hc.size());
  in << y, z, hc;
  return split_gaussian_value(decoder_net_.value(in), spec_.feature_dim);
}

RecurrentState SvrnnModel::advance_value(const RecurrentState& state,
                                         const Vec& x, const Vec& y,
                                         const Vec& z) const {
  Vec in(x.size() + y.size() + z.size());
  in << x, y, z;
  return recurrence_.step_value(state, in);
}

// --- inference -----------------------------------------------------------------------

SvrnnModel::InferStep SvrnnModel::infer_step(const RecurrentState& state,
                                             const SequenceStep& step,
                                             const Vec& eps,
                                             const CtxVals& ctx) const {
  CategoricalParams q = recog_label_value(step.x, state.hidden, ctx);
  InferStep out;
  out.predicted = argmax(q.logits);
  out.label_probs = q.probs();
  Vec y_state;
  Vec z;
  if (step.observed) {
    y_state = one_hot(*step.label, spec_.num_classes);
    GaussianParams g = recog_latent_value(step.x, y_state, state.hidden, ctx);
    z = g.mean.array() + (0.5 * g.log_var.array()).exp() * eps.array();
  } else {
    y_state = out.label_probs;
    z = Vec::Zero(spec_.latent_dim);
    for (int c = 0; c < spec_.num_classes; ++c) {
      GaussianParams g = recog_latent_value(step.x, one_hot(c, spec_.num_classes),
                                            state.hidden, ctx);
      z.array() += y_state[c] * (g.mean.array() +
                                 (0.5 * g.log_var.array()).exp() * eps.array());
    }
  }
  out.next = advance_value(state, step.x, y_state, z);
  return out;
}

std::vector<int> SvrnnModel::detect(std::span<const SequenceStep> steps,
                                    NoiseSource* posterior_noise) const {
  std::vector<int> preds;
  RecurrentState state = zero_state();
  for (const SequenceStep& s : steps) {
    Vec eps = posterior_noise != nullptr
                  ? posterior_noise->normal_vec(spec_.latent_dim)
                  : Vec::Zero(spec_.latent_dim);
    InferStep is = infer_step(state, s, eps);
    preds.push_back(is.predicted);
    state = is.next;
  }
  return preds;
}

CategoricalParams SvrnnModel::anticipate(const RecurrentState& state,
                                         const CtxVals& ctx) const {
  return prior_label_value(state.hidden, ctx);
}

SvrnnModel::Rollout SvrnnModel::generate(std::span<const SequenceStep> seed_steps,
                                         int horizon, NoiseSource& noise,
                                         const GenConfig& cfg) const {
  if (horizon < 0) throw ConfigError("generate: horizon must be >= 0");
  RecurrentState state = zero_state();
  for (const SequenceStep& s : seed_steps) {
    InferStep is = infer_step(state, s, Vec::Zero(spec_.latent_dim));
    state = is.next;
  }
  Rollout out;
  for (int k = 0; k < horizon; ++k) {
    CategoricalParams p_y = prior_label_value(state.hidden);
    Vec y_soft = gumbel_softmax_sample(p_y, cfg.temperature,
                                       noise.uniform_vec(spec_.num_classes));
    GaussianParams p_z = prior_latent_value(y_soft, state.hidden);
    Vec z = gauss_sample(p_z, noise.normal_vec(spec_.latent_dim));
    GaussianParams p_x = decoder_value(y_soft, z, state.hidden);
    Vec x_hat = cfg.sample_features
                    ? gauss_sample(p_x, noise.normal_vec(spec_.feature_dim))
                    : p_x.mean;
    out.labels.push_back(argmax(y_soft));
    out.features.push_back(x_hat);
    state = advance_value(state, x_hat, y_soft, z);
  }
  return out;
}

}  // namespace svrnn
