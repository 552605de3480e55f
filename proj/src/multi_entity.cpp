#include "svrnn/multi_entity.hpp"

#include <cmath>

namespace svrnn {

std::vector<Parameter*> MultiEntityModels::parameters() {
  std::vector<Parameter*> out = human.parameters();
  if (object.has_value()) {
    auto p = object->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

MeSpecs make_specs(const DatasetMeta& meta, int latent_dim, int state_dim,
                   const std::vector<int>& hidden_sizes, bool coupled) {
  MeSpecs specs;
  specs.human.feature_dim = meta.human_feature_dim;
  specs.human.num_classes = meta.human_classes;
  specs.human.latent_dim = latent_dim;
  specs.human.state_dim = state_dim;
  specs.human.hidden_sizes = hidden_sizes;
  bool has_objects = meta.object_feature_dim > 0;
  if (coupled && has_objects) {
    specs.human.ctx_feature_dim = meta.object_feature_dim;
    specs.human.ctx_state_dim = state_dim;
  }
  if (has_objects) {
    ModelSpec obj;
    obj.feature_dim = meta.object_feature_dim;
    obj.num_classes = meta.object_classes;
    obj.latent_dim = latent_dim;
    obj.state_dim = state_dim;
    obj.hidden_sizes = hidden_sizes;
    if (coupled) {
      obj.ctx_feature_dim = meta.human_feature_dim;
      obj.ctx_state_dim = state_dim;
    }
    specs.object = obj;
  }
  return specs;
}

MultiEntityModels build_models(const MeSpecs& specs, Rng& rng) {
  MultiEntityModels m{SvrnnModel(specs.human, "human", rng), std::nullopt};
  if (specs.object.has_value())
    m.object.emplace(*specs.object, "object", rng);
  return m;
}

Vec aggregate(std::span<const Vec> items, int dim) {
  Vec out = Vec::Zero(dim);
  for (const Vec& v : items) {
    if (v.size() != dim) throw DataError("aggregate: dim mismatch");
    out += v;
  }
  return out;
}

Var aggregate(Tape& t, std::span<const Var> items, int dim) {
  if (items.empty()) return t.constant(Vec::Zero(dim));
  Var acc = items[0];
  if (t.value(acc).size() != dim) throw DataError("aggregate: dim mismatch");
  for (size_t i = 1; i < items.size(); ++i) {
    if (t.value(items[i]).size() != dim)
      throw DataError("aggregate: dim mismatch");
    acc = t.add(acc, items[i]);
  }
  return acc;
}

namespace {

void validate_record(const MultiEntityModels& models,
                     const MultiEntityRecord& rec) {
  if (rec.length() == 0) throw DataError("record " + rec.id + " is empty");
  for (const auto& obj : rec.objects)
    if (static_cast<int>(obj.size()) != rec.length())
      throw DataError("record " + rec.id + ": stream lengths differ");
  if (rec.num_objects() > 0 && !models.object.has_value())
    throw ConfigError("record " + rec.id +
                      " has object streams but no object model was built");
}

// Human context at step t: summed current object observations and summed
// previous object histories. Only the channels the model declares.
SvrnnModel::CtxVals human_ctx(const MultiEntityModels& models,
                              const MultiEntityRecord& rec, int t,
                              std::span<const RecurrentState> object_states) {
  SvrnnModel::CtxVals ctx;
  const ModelSpec& spec = models.human.spec();
  if (spec.ctx_feature_dim > 0) {
    ctx.x = Vec::Zero(spec.ctx_feature_dim);
    for (const auto& obj : rec.objects) ctx.x += obj[t].x;
  }
  if (spec.ctx_state_dim > 0) {
    ctx.h = Vec::Zero(spec.ctx_state_dim);
    for (const auto& s : object_states) ctx.h += s.hidden;
  }
  return ctx;
}

// Object context: the human observation (current by default) and the
// previous-step human history.
SvrnnModel::CtxVals object_ctx(const MultiEntityModels& models,
                               const Vec& human_x,
                               const RecurrentState& human_state) {
  SvrnnModel::CtxVals ctx;
  const ModelSpec& spec = models.object->spec();
  if (spec.ctx_feature_dim > 0) ctx.x = human_x;
  if (spec.ctx_state_dim > 0) ctx.h = human_state.hidden;
  return ctx;
}

}  // namespace

MeStateVar me_start_state(Tape& t, const MultiEntityModels& models,
                          const MultiEntityRecord& rec) {
  MeStateVar s;
  s.human = models.human.start_state(t);
  for (int o = 0; o < rec.num_objects(); ++o)
    s.objects.push_back(models.object->start_state(t));
  s.prev_human_x = Vec::Zero(models.human.spec().feature_dim);
  return s;
}

MeStepOut me_step(Tape& t, MultiEntityModels& models, const MeStateVar& state,
                  const MultiEntityRecord& rec, int step_index,
                  NoiseSource& noise, const LossConfig& cfg,
                  const MeConfig& me_cfg) {
  validate_record(models, rec);
  const int no = rec.num_objects();
  const SequenceStep& hstep = rec.human[step_index];
  bool observed = hstep.observed;
  for (const auto& obj : rec.objects)
    if (obj[step_index].observed != observed)
      throw DataError("record " + rec.id + " step " +
                      std::to_string(step_index) +
                      ": labels must be observed for all entities or none");

  // human step under the aggregated object context
  SvrnnModel::Ctx hctx;
  const ModelSpec& hspec = models.human.spec();
  if (hspec.ctx_feature_dim > 0) {
    Vec xo = Vec::Zero(hspec.ctx_feature_dim);
    for (const auto& obj : rec.objects) xo += obj[step_index].x;
    hctx.x = t.constant(xo);
  }
  if (hspec.ctx_state_dim > 0) {
    std::vector<Var> hiddens;
    for (const auto& s : state.objects) hiddens.push_back(s.hidden);
    hctx.h = aggregate(t, hiddens, hspec.ctx_state_dim);
  }
  SvrnnModel::StepOut hout =
      observed ? models.human.step_labeled(t, state.human, hstep.x,
                                           *hstep.label, noise, cfg, hctx)
               : models.human.step_unlabeled(t, state.human, hstep.x, noise,
                                             cfg, hctx);

  MeStepOut out;
  out.total = hout.total;
  out.loss.human = hout.loss;
  out.state.human = hout.state;
  out.state.prev_human_x = hstep.x;

  // object steps, conditioned on the previous-step human history
  for (int o = 0; o < no; ++o) {
    const SequenceStep& ostep = rec.objects[o][step_index];
    SvrnnModel::Ctx octx;
    const ModelSpec& ospec = models.object->spec();
    if (ospec.ctx_feature_dim > 0)
      octx.x = t.constant(me_cfg.objects_use_previous_human_obs
                              ? state.prev_human_x
                              : hstep.x);
    if (ospec.ctx_state_dim > 0) octx.h = state.human.hidden;
    SvrnnModel::StepOut oout =
        observed ? models.object->step_labeled(t, state.objects[o], ostep.x,
                                               *ostep.label, noise, cfg, octx)
                 : models.object->step_unlabeled(t, state.objects[o], ostep.x,
                                                 noise, cfg, octx);
    out.total = t.add(out.total, oout.total);
    out.loss.objects.push_back(oout.loss);
    out.state.objects.push_back(oout.state);
  }
  out.loss.total = t.scalar(out.total);
  return out;
}

MeSequenceOut me_sequence_loss(Tape& t, MultiEntityModels& models,
                               const MultiEntityRecord& rec, NoiseSource& noise,
                               const LossConfig& cfg, const MeConfig& me_cfg) {
  validate_record(models, rec);
  MeStateVar state = me_start_state(t, models, rec);
  MeSequenceOut out;
  Var total{};
  for (int i = 0; i < rec.length(); ++i) {
    MeStepOut so = me_step(t, models, state, rec, i, noise, cfg, me_cfg);
    if (!std::isfinite(so.loss.total))
      throw NumericError("record " + rec.id + ": non-finite loss at step " +
                         std::to_string(i));
    total = i == 0 ? so.total : t.add(total, so.total);
    out.steps.push_back(std::move(so.loss));
    state = so.state;
  }
  out.total = total;
  out.total_value = t.scalar(total);
  out.state = state;
  return out;
}

// --- inference -------------------------------------------------------------------

namespace {

struct MeValueState {
  RecurrentState human;
  std::vector<RecurrentState> objects;
  Vec prev_human_x;
};

MeValueState me_value_start(const MultiEntityModels& models,
                            const MultiEntityRecord& rec) {
  MeValueState s;
  s.human = models.human.zero_state();
  if (models.object.has_value())
    s.objects.assign(rec.num_objects(), models.object->zero_state());
  s.prev_human_x = Vec::Zero(models.human.spec().feature_dim);
  return s;
}

// Advances every entity one step, reporting per-entity label predictions.
// Noise draws per step: one latent vector for the human, then one per object.
MeValueState me_value_step(const MultiEntityModels& models,
                           const MultiEntityRecord& rec, int t,
                           const MeValueState& state, const MeConfig& me_cfg,
                           NoiseSource* noise, int* human_pred,
                           std::vector<int>* object_preds) {
  MeValueState next = state;
  const int dz_h = models.human.spec().latent_dim;
  Vec eps = noise != nullptr ? noise->normal_vec(dz_h) : Vec::Zero(dz_h);
  auto hc = human_ctx(models, rec, t, state.objects);
  auto his = models.human.infer_step(state.human, rec.human[t], eps, hc);
  if (human_pred != nullptr) *human_pred = his.predicted;
  next.human = his.next;
  for (int o = 0; o < rec.num_objects(); ++o) {
    const int dz_o = models.object->spec().latent_dim;
    Vec eps_o = noise != nullptr ? noise->normal_vec(dz_o) : Vec::Zero(dz_o);
    auto oc = object_ctx(models,
                         me_cfg.objects_use_previous_human_obs
                             ? state.prev_human_x
                             : rec.human[t].x,
                         state.human);
    auto ois =
        models.object->infer_step(state.objects[o], rec.objects[o][t], eps_o, oc);
    if (object_preds != nullptr) (*object_preds)[o] = ois.predicted;
    next.objects[o] = ois.next;
  }
  next.prev_human_x = rec.human[t].x;
  return next;
}

}  // namespace

MeLabelSequences me_detect(const MultiEntityModels& models,
                           const MultiEntityRecord& rec, const MeConfig& me_cfg,
                           NoiseSource* posterior_noise) {
  validate_record(models, rec);
  MeLabelSequences out;
  out.objects.resize(rec.num_objects());
  MeValueState state = me_value_start(models, rec);
  std::vector<int> opreds(rec.num_objects());
  for (int t = 0; t < rec.length(); ++t) {
    int hpred = 0;
    state = me_value_step(models, rec, t, state, me_cfg, posterior_noise,
                          &hpred, &opreds);
    out.human.push_back(hpred);
    for (int o = 0; o < rec.num_objects(); ++o)
      out.objects[o].push_back(opreds[o]);
  }
  return out;
}

MeLabelSequences me_anticipate(const MultiEntityModels& models,
                               const MultiEntityRecord& rec,
                               const MeConfig& me_cfg,
                               NoiseSource* posterior_noise) {
  validate_record(models, rec);
  MeLabelSequences out;
  out.objects.resize(rec.num_objects());
  MeValueState state = me_value_start(models, rec);
  for (int t = 0; t < rec.length(); ++t) {
    state = me_value_step(models, rec, t, state, me_cfg, posterior_noise,
                          nullptr, nullptr);
    if (t + 1 >= rec.length()) break;
    // anticipate step t+1 from the freshly advanced states
    SvrnnModel::CtxVals hc;
    if (models.human.spec().ctx_state_dim > 0) {
      hc.h = Vec::Zero(models.human.spec().ctx_state_dim);
      for (const auto& s : state.objects) hc.h += s.hidden;
    }
    out.human.push_back(argmax(models.human.anticipate(state.human, hc).logits));
    for (int o = 0; o < rec.num_objects(); ++o) {
      SvrnnModel::CtxVals oc;
      if (models.object->spec().ctx_state_dim > 0) oc.h = state.human.hidden;
      out.objects[o].push_back(
          argmax(models.object->anticipate(state.objects[o], oc).logits));
    }
  }
  return out;
}

MeRollout me_generate(const MultiEntityModels& models,
                      const MultiEntityRecord& seed_record, int seed_steps,
                      int horizon, NoiseSource& noise, const GenConfig& cfg,
                      const MeConfig& me_cfg) {
  validate_record(models, seed_record);
  if (horizon < 0) throw ConfigError("me_generate: horizon must be >= 0");
  if (seed_steps < 0 || seed_steps > seed_record.length())
    throw ConfigError("me_generate: seed steps out of range");
  const int no = seed_record.num_objects();
  MeValueState state = me_value_start(models, seed_record);
  for (int t = 0; t < seed_steps; ++t)
    state = me_value_step(models, seed_record, t, state, me_cfg, nullptr,
                          nullptr, nullptr);

  MeRollout out;
  out.objects.resize(no);
  Vec prev_hx = state.prev_human_x;
  for (int k = 0; k < horizon; ++k) {
    MeValueState snap = state;

    // human samples first; its priors see the pre-update object histories
    SvrnnModel::CtxVals hc;
    if (models.human.spec().ctx_state_dim > 0) {
      hc.h = Vec::Zero(models.human.spec().ctx_state_dim);
      for (const auto& s : snap.objects) hc.h += s.hidden;
    }
    const SvrnnModel& hm = models.human;
    CategoricalParams p_y = hm.prior_label_value(snap.human.hidden, hc);
    Vec y_soft = gumbel_softmax_sample(
        p_y, cfg.temperature, noise.uniform_vec(hm.spec().num_classes));
    GaussianParams p_z =
        hm.prior_latent_value(y_soft, snap.human.hidden, hc);
    Vec z = gauss_sample(p_z, noise.normal_vec(hm.spec().latent_dim));
    GaussianParams p_x = hm.decoder_value(y_soft, z, snap.human.hidden, hc);
    Vec x_hat = cfg.sample_features
                    ? gauss_sample(p_x, noise.normal_vec(hm.spec().feature_dim))
                    : p_x.mean;
    out.human.labels.push_back(argmax(y_soft));
    out.human.features.push_back(x_hat);
    state.human = hm.advance_value(snap.human, x_hat, y_soft, z);

    for (int o = 0; o < no; ++o) {
      const SvrnnModel& om = *models.object;
      SvrnnModel::CtxVals oc;
      if (om.spec().ctx_state_dim > 0) oc.h = snap.human.hidden;
      CategoricalParams po_y = om.prior_label_value(snap.objects[o].hidden, oc);
      Vec yo = gumbel_softmax_sample(
          po_y, cfg.temperature, noise.uniform_vec(om.spec().num_classes));
      GaussianParams po_z =
          om.prior_latent_value(yo, snap.objects[o].hidden, oc);
      Vec zo = gauss_sample(po_z, noise.normal_vec(om.spec().latent_dim));
      GaussianParams po_x = om.decoder_value(yo, zo, snap.objects[o].hidden, oc);
      Vec xo = cfg.sample_features
                   ? gauss_sample(po_x, noise.normal_vec(om.spec().feature_dim))
                   : po_x.mean;
      out.objects[o].labels.push_back(argmax(yo));
      out.objects[o].features.push_back(xo);
      state.objects[o] = om.advance_value(snap.objects[o], xo, yo, zo);
    }
    prev_hx = x_hat;
    state.prev_human_x = prev_hx;
  }
  return out;
}

// --- importance sampling -------------------------------------------------------

namespace {

int pick_class(const Vec& probs, double u) {
  double acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

// K-particle estimate of log p(x | h) with y and z drawn from the posterior.
double entity_step_is(const SvrnnModel& m, const Vec& x,
                      const SvrnnModel::CtxVals& ctx,
                      const RecurrentState& state, int particles,
                      NoiseSource& noise) {
  const int n = m.spec().num_classes;
  const int dz = m.spec().latent_dim;
  CategoricalParams q_y = m.recog_label_value(x, state.hidden, ctx);
  CategoricalParams p_y = m.prior_label_value(state.hidden, ctx);
  Vec q_probs = q_y.probs();
  Vec lq = log_softmax_value(q_y.logits);
  Vec lp = log_softmax_value(p_y.logits);
  std::vector<GaussianParams> q_z(n), p_z(n);
  for (int c = 0; c < n; ++c) {
    Vec yc = one_hot(c, n);
    q_z[c] = m.recog_latent_value(x, yc, state.hidden, ctx);
    p_z[c] = m.prior_latent_value(yc, state.hidden, ctx);
  }
  Vec logw(particles);
  for (int k = 0; k < particles; ++k) {
    int c = pick_class(q_probs, noise.uniform());
    Vec eps = noise.normal_vec(dz);
    Vec z = gauss_sample(q_z[c], eps);
    GaussianParams p_x = m.decoder_value(one_hot(c, n), z, state.hidden, ctx);
    logw[k] = lp[c] - lq[c] + gauss_log_prob(p_z[c], z) -
              gauss_log_prob(q_z[c], z) + gauss_log_prob(p_x, x);
  }
  return logsumexp(logw) - std::log(static_cast<double>(particles));
}

}  // namespace

double importance_log_likelihood(const MultiEntityModels& models,
                                 const MultiEntityRecord& rec, int particles,
                                 std::uint64_t seed, const MeConfig& me_cfg) {
  validate_record(models, rec);
  if (particles < 1)
    throw ConfigError("importance_log_likelihood: particles must be >= 1");
  // The trajectory stream mirrors the draw order of the sequence bound on a
  // fully unlabeled record, so the recurrent path matches the bound seeded
  // with the same value.
  RngNoise trajectory(seed);
  RngNoise particle_noise(mix_seed(seed, 0x1517ULL));
  MeValueState state = me_value_start(models, rec);
  double total = 0.0;
  for (int t = 0; t < rec.length(); ++t) {
    MeValueState snap = state;
    {
      auto hc = human_ctx(models, rec, t, snap.objects);
      Vec eps = trajectory.normal_vec(models.human.spec().latent_dim);
      total += entity_step_is(models.human, rec.human[t].x, hc, snap.human,
                              particles, particle_noise);
      SequenceStep s = rec.human[t];
      s.observed = false;
      s.label.reset();
      state.human = models.human.infer_step(snap.human, s, eps, hc).next;
    }
    for (int o = 0; o < rec.num_objects(); ++o) {
      auto oc = object_ctx(models,
                           me_cfg.objects_use_previous_human_obs
                               ? snap.prev_human_x
                               : rec.human[t].x,
                           snap.human);
      Vec eps = trajectory.normal_vec(models.object->spec().latent_dim);
      total += entity_step_is(*models.object, rec.objects[o][t].x, oc,
                              snap.objects[o], particles, particle_noise);
      SequenceStep s = rec.objects[o][t];
      s.observed = false;
      s.label.reset();
      state.objects[o] =
          models.object->infer_step(snap.objects[o], s, eps, oc).next;
    }
    state.prev_human_x = rec.human[t].x;
  }
  return total;
}

}  // namespace svrnn
