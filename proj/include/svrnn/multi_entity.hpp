#pragma once

#include "svrnn/model.hpp"

#include <optional>

namespace svrnn {

// One human model plus one object model whose parameters are shared by every
// object stream in a record.
struct MultiEntityModels {
  SvrnnModel human;
  std::optional<SvrnnModel> object;

  std::vector<Parameter*> parameters();
};

struct MeConfig {
  // Objects see the human's current observation by default; this switches
  // them to the previous step's observation.
  bool objects_use_previous_human_obs = false;
};

struct MeSpecs {
  ModelSpec human;
  std::optional<ModelSpec> object;
};

// Specs for a dataset. `coupled` wires the cross-entity channels: the human
// conditions on the summed object observations and histories, each object on
// the human's observation and history. Uncoupled entities evolve
// independently (plain single-entity models).
MeSpecs make_specs(const DatasetMeta& meta, int latent_dim, int state_dim,
                   const std::vector<int>& hidden_sizes, bool coupled);

MultiEntityModels build_models(const MeSpecs& specs, Rng& rng);

// Elementwise sum; the zero vector of the given dim for an empty list.
Vec aggregate(std::span<const Vec> items, int dim);
Var aggregate(Tape& t, std::span<const Var> items, int dim);

// --- training --------------------------------------------------------------

struct MeStateVar {
  LstmCell::StateVar human;
  std::vector<LstmCell::StateVar> objects;
  Vec prev_human_x;  // previous-step human observation, zeros at t = 0
};

struct MeStepLoss {
  StepLoss human;
  std::vector<StepLoss> objects;
  double total = 0.0;
};

struct MeStepOut {
  Var total;
  MeStepLoss loss;
  MeStateVar state;
};

// One joint timestep: the human step under the aggregated object context,
// then each object step conditioned on the previous-step human history (and
// the current human observation). Losses are summed across entities; all
// object steps share the object model's parameters. Labels must be observed
// for all entities or none at a given timestep.
MeStepOut me_step(Tape& t, MultiEntityModels& models, const MeStateVar& state,
                  const MultiEntityRecord& rec, int step_index,
                  NoiseSource& noise, const LossConfig& cfg,
                  const MeConfig& me_cfg = {});

MeStateVar me_start_state(Tape& t, const MultiEntityModels& models,
                          const MultiEntityRecord& rec);

struct MeSequenceOut {
  Var total;
  double total_value = 0.0;
  std::vector<MeStepLoss> steps;
  MeStateVar state;
};

MeSequenceOut me_sequence_loss(Tape& t, MultiEntityModels& models,
                               const MultiEntityRecord& rec, NoiseSource& noise,
                               const LossConfig& cfg,
                               const MeConfig& me_cfg = {});

// --- inference ----------------------------------------------------------------

struct MeLabelSequences {
  std::vector<int> human;
  std::vector<std::vector<int>> objects;
};

// Per-step label posterior argmax for every entity, advancing each state on
// ground truth where observed. Deterministic when posterior_noise is null.
MeLabelSequences me_detect(const MultiEntityModels& models,
                           const MultiEntityRecord& rec,
                           const MeConfig& me_cfg = {},
                           NoiseSource* posterior_noise = nullptr);

// Entry [t] anticipates step t+1 from the state after processing step t, so
// the sequences are one shorter than the record.
MeLabelSequences me_anticipate(const MultiEntityModels& models,
                               const MultiEntityRecord& rec,
                               const MeConfig& me_cfg = {},
                               NoiseSource* posterior_noise = nullptr);

struct MeRollout {
  SvrnnModel::Rollout human;
  std::vector<SvrnnModel::Rollout> objects;
};

// Joint rollout: all entities sample from their priors each step, each
// consuming the others' generated summaries.
MeRollout me_generate(const MultiEntityModels& models,
                      const MultiEntityRecord& seed_record, int seed_steps,
                      int horizon, NoiseSource& noise, const GenConfig& cfg = {},
                      const MeConfig& me_cfg = {});

// Importance-sampling estimate of the record's feature log-likelihood under
// the model, with labels and latents treated as unobserved. The recurrent
// trajectory follows the same posterior-driven update rule as the training
// bound (seeded identically for an apples-to-apples comparison); each step's
// conditional likelihood is estimated with `particles` draws from the
// posterior. The result upper-bounds the unlabeled sequence bound in
// expectation.
double importance_log_likelihood(const MultiEntityModels& models,
                                 const MultiEntityRecord& rec, int particles,
                                 std::uint64_t seed,
                                 const MeConfig& me_cfg = {});

}  // namespace svrnn
