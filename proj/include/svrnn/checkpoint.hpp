#pragma once

#include "svrnn/multi_entity.hpp"
#include "svrnn/train.hpp"

#include <json.hpp>

#include <string>

namespace svrnn {

// Container layout: magic "SVRN", little-endian u32 version, little-endian
// u64 header length, UTF-8 JSON header (specs, config, normalization stats,
// parameter names and shapes, summary), then the parameter tensors as
// little-endian IEEE-754 float64, row-major, concatenated in header order.
// save(load(x)) is byte-identical to x.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  std::string mode;  // svrnn | me_svrnn
  MeSpecs specs;
  TrainConfig config;
  Normalization norm;
  nlohmann::json summary;  // training log digest
};

void save_checkpoint(const std::string& path, MultiEntityModels& models,
                     const CheckpointData& data);

struct LoadedCheckpoint {
  MultiEntityModels models;
  CheckpointData data;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace svrnn
