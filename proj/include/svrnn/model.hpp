#pragma once

#include "svrnn/data.hpp"
#include "svrnn/distributions.hpp"
#include "svrnn/nn.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svrnn {

enum class DecoderLikelihood { gaussian_learned_var };

// Architecture of one entity model. The ctx_* dims describe the summed
// other-entity channels this model conditions on; both are zero for a
// stand-alone single-entity model.
struct ModelSpec {
  int feature_dim = 0;  // observation dim
  int num_classes = 0;  // label vocabulary
  int latent_dim = 8;
  int state_dim = 32;
  int ctx_feature_dim = 0;
  int ctx_state_dim = 0;
  std::vector<int> hidden_sizes = {32};
  DecoderLikelihood decoder_likelihood = DecoderLikelihood::gaussian_learned_var;

  void validate() const;
};

struct LossConfig {
  double alpha = 1.0;   // weight of the label-supervision term
  double dropout = 0.0;
  bool training = false;
  // Unlabeled steps normally feed the recurrence the posterior label
  // probabilities; this switches to a concrete relaxed sample instead.
  bool sample_state_label = false;
  double gumbel_temp = 0.5;
};

struct GenConfig {
  double temperature = 0.1;  // relaxation temperature for sampled labels
  bool sample_features = false;  // default: feed the decoder mean back in
};

// Per-step loss decomposition. kl_y_or_log_py holds log p(y) (a constant,
// negative) on labeled steps and KL(q(y|.) || p(y|.)) (>= 0) on unlabeled
// ones. classifier is the label-supervision contribution, present only on
// labeled steps. total is the minimization objective for this step.
struct StepLoss {
  double recon = 0.0;
  double kl_z = 0.0;
  double kl_y_or_log_py = 0.0;
  double classifier = 0.0;
  double total = 0.0;
};

// One entity's generative/inference networks:
//   p(y_t | h_{t-1})            prior over labels
//   p(z_t | y_t, h_{t-1})       prior over latents
//   q(y_t | x_t, h_{t-1})       label posterior (the classifier)
//   q(z_t | x_t, y_t, h_{t-1})  latent posterior
//   p(x_t | y_t, z_t, h_{t-1})  decoder
// plus the LSTM recurrence h_t = f(x_t, y_t, z_t, h_{t-1}). Each network's
// h-conditioning (and the posteriors' x-conditioning) is extended by the
// context channels when ctx dims are nonzero.
class SvrnnModel {
 public:
  SvrnnModel(ModelSpec spec, const std::string& name, Rng& rng);

  const ModelSpec& spec() const { return spec_; }
  const std::string& name() const { return name_; }
  std::vector<Parameter*> parameters();

  RecurrentState zero_state() const {
    return RecurrentState::zero(spec_.state_dim);
  }

  // Context inputs on the tape; invalid Vars when the model has no context.
  struct Ctx {
    Var x;
    Var h;
  };
  // Context inputs for the value path; zero-size vectors when absent.
  struct CtxVals {
    Vec x;
    Vec h;
  };

  // --- training surface (tape) ---------------------------------------------
  //
  // Noise draw order per step, shared by both variants: each network draws
  // its dropout masks at call time (training with dropout > 0 only), and one
  // latent noise vector of latent_dim is drawn right after the label
  // networks, shared across classes on unlabeled steps. Network call order:
  // prior_label, recog_label, [latent noise], then per-class or single
  // recog_latent, prior_latent, decoder, and finally the recurrence.

  struct StepOut {
    Var total;
    StepLoss loss;
    LstmCell::StateVar state;
  };

  StepOut step_labeled(Tape& t, const LstmCell::StateVar& state, const Vec& x,
                       int label, NoiseSource& noise, const LossConfig& cfg,
                       const Ctx& ctx = {});
  StepOut step_unlabeled(Tape& t, const LstmCell::StateVar& state, const Vec& x,
                         NoiseSource& noise, const LossConfig& cfg,
                         const Ctx& ctx = {});

  struct SequenceOut {
    Var total;
    double total_value = 0.0;
    std::vector<StepLoss> steps;
    LstmCell::StateVar state;
  };
  // Negated evidence bound over the sequence (a minimization objective),
  // dispatching on each step's observed flag. Context-free surface; the
  // multi-entity orchestration drives the step functions directly.
  SequenceOut sequence_loss(Tape& t, std::span<const SequenceStep> steps,
                            NoiseSource& noise, const LossConfig& cfg);

  // --- tape building blocks --------------------------------------------------

  CategoricalVar prior_label(Tape& t, Var h, const Ctx& ctx,
                             const LossConfig& cfg, NoiseSource* noise);
  GaussianVar prior_latent(Tape& t, Var y, Var h, const Ctx& ctx,
                           const LossConfig& cfg, NoiseSource* noise);
  CategoricalVar recog_label(Tape& t, Var x, Var h, const Ctx& ctx,
                             const LossConfig& cfg, NoiseSource* noise);
  GaussianVar recog_latent(Tape& t, Var x, Var y, Var h, const Ctx& ctx,
                           const LossConfig& cfg, NoiseSource* noise);
  GaussianVar decode(Tape& t, Var y, Var z, Var h, const Ctx& ctx,
                     const LossConfig& cfg, NoiseSource* noise);
  LstmCell::StateVar advance(Tape& t, const LstmCell::StateVar& state, Var x,
                             Var y, Var z);
  LstmCell::StateVar start_state(Tape& t) const;

  // --- inference surface (value path, no tape) -------------------------------

  CategoricalParams prior_label_value(const Vec& h, const CtxVals& ctx = {}) const;
  GaussianParams prior_latent_value(const Vec& y, const Vec& h,
                                    const CtxVals& ctx = {}) const;
  CategoricalParams recog_label_value(const Vec& x, const Vec& h,
                                      const CtxVals& ctx = {}) const;
  GaussianParams recog_latent_value(const Vec& x, const Vec& y, const Vec& h,
                                    const CtxVals& ctx = {}) const;
  GaussianParams decoder_value(const Vec& y, const Vec& z, const Vec& h,
                               const CtxVals& ctx = {}) const;
  RecurrentState advance_value(const RecurrentState& state, const Vec& x,
                               const Vec& y, const Vec& z) const;

  // One deterministic filtering step: the label posterior's argmax plus the
  // state advanced with the observed label (or the posterior probabilities)
  // and the posterior latent mean, shifted by eps scaled with the posterior
  // deviation when eps is nonzero.
  struct InferStep {
    int predicted = 0;
    Vec label_probs;
    RecurrentState next;
  };
  InferStep infer_step(const RecurrentState& state, const SequenceStep& step,
                       const Vec& eps, const CtxVals& ctx = {}) const;

  // argmax of q(y_t | x_t, h_{t-1}) at every step, advancing on ground truth
  // where observed. Deterministic when posterior_noise is null.
  std::vector<int> detect(std::span<const SequenceStep> steps,
                          NoiseSource* posterior_noise = nullptr) const;

  // p(y_{t+1} | h_t): the temporal label prior at the given state.
  CategoricalParams anticipate(const RecurrentState& state,
                               const CtxVals& ctx = {}) const;

  struct Rollout {
    std::vector<int> labels;
    std::vector<Vec> features;
  };
  // Processes the seed deterministically, then rolls the priors forward:
  // y from a relaxed categorical sample, z from p(z|y,h), the feature from
  // the decoder (mean by default), which becomes the next input.
  Rollout generate(std::span<const SequenceStep> seed_steps, int horizon,
                   NoiseSource& noise, const GenConfig& cfg = {}) const;

 private:
  Var cat_ctx(Tape& t, Var self, Var ctx, int expected, const char* what) const;
  Vec cat_ctx_value(const Vec& self, const Vec& ctx, int expected,
                    const char* what) const;
  GaussianVar split_gaussian(Tape& t, Var raw, int dim) const;
  GaussianParams split_gaussian_value(const Vec& raw, int dim) const;

  ModelSpec spec_;
  std::string name_;
  Mlp prior_label_net_;
  Mlp prior_latent_net_;
  Mlp recog_label_net_;
  Mlp recog_latent_net_;
  Mlp decoder_net_;
  LstmCell recurrence_;
};

}  // namespace svrnn
