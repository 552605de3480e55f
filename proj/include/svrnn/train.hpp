#pragma once

#include "svrnn/multi_entity.hpp"

#include <string>
#include <vector>

namespace svrnn {

// Training and architecture hyperparameters. Parsed from a flat
// "key = value" text file; unknown keys are hard errors.
struct TrainConfig {
  std::string model = "svrnn";  // svrnn | me_svrnn
  double learning_rate = 0.001;
  int batch_size = 10;
  double dropout = 0.1;
  double mask_fraction = 0.25;
  double alpha = 1.0;  // scaled per batch by the inverse labeled fraction
  double gumbel_temp = 0.5;
  double gen_temp = 0.1;
  int epochs = 10;
  std::uint64_t seed = 0;
  int eval_samples = 20;
  double grad_clip = 5.0;
  int latent_dim = 8;
  int state_dim = 32;
  std::vector<int> hidden_sizes = {32};
  bool sample_state_label = false;
  bool objects_use_previous_human_obs = false;

  void validate() const;
  MeConfig me_config() const { return {objects_use_previous_human_obs}; }

  static TrainConfig from_file(const std::string& path);
  static const std::vector<std::string>& valid_keys();
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double labeled_fraction = 0.0;
  double grad_norm = 0.0;  // mean pre-clip global norm over batches
};

struct TrainOutcome {
  MultiEntityModels models;
  MeSpecs specs;
  Normalization norm;
  std::vector<EpochLog> log;
  // Non-finite loss aborts training; the models then hold the last
  // epoch-end state and abort_reason says what happened.
  bool aborted = false;
  std::string abort_reason;
};

// Trains on every fold except heldout_fold: per-batch label masking at
// cfg.mask_fraction, per-record sequence bounds, gradients averaged over the
// batch, clipped by global norm, applied with Adagrad. Features are
// z-normalized with statistics from the training folds. Deterministic for a
// fixed config and seed.
TrainOutcome train(const Dataset& raw, const std::string& heldout_fold,
                   const TrainConfig& cfg);

}  // namespace svrnn
