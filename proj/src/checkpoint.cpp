#include "svrnn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace svrnn {

using nlohmann::json;

namespace {

json vec_to_json(const Vec& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Vec vec_from_json(const json& j) {
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

json norm_to_json(const Normalization& n) {
  return {{"human", {{"mean", vec_to_json(n.human.mean)},
                     {"std", vec_to_json(n.human.std)}}},
          {"object", {{"mean", vec_to_json(n.object.mean)},
                      {"std", vec_to_json(n.object.std)}}}};
}

Normalization norm_from_json(const json& j) {
  Normalization n;
  n.human.mean = vec_from_json(j.at("human").at("mean"));
  n.human.std = vec_from_json(j.at("human").at("std"));
  n.object.mean = vec_from_json(j.at("object").at("mean"));
  n.object.std = vec_from_json(j.at("object").at("std"));
  return n;
}

template <typename T>
void write_le(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void write_tensor(std::ostream& os, const Mat& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      os.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
}

void read_tensor(std::istream& is, Mat& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      double v;
      is.read(reinterpret_cast<char*>(&v), sizeof(double));
      m(i, j) = v;
    }
}

}  // namespace

json model_spec_to_json(const ModelSpec& spec) {
  return {{"feature_dim", spec.feature_dim},
          {"num_classes", spec.num_classes},
          {"latent_dim", spec.latent_dim},
          {"state_dim", spec.state_dim},
          {"ctx_feature_dim", spec.ctx_feature_dim},
          {"ctx_state_dim", spec.ctx_state_dim},
          {"hidden_sizes", spec.hidden_sizes},
          {"decoder_likelihood", "gaussian_learned_var"}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  spec.feature_dim = j.at("feature_dim").get<int>();
  spec.num_classes = j.at("num_classes").get<int>();
  spec.latent_dim = j.at("latent_dim").get<int>();
  spec.state_dim = j.at("state_dim").get<int>();
  spec.ctx_feature_dim = j.at("ctx_feature_dim").get<int>();
  spec.ctx_state_dim = j.at("ctx_state_dim").get<int>();
  spec.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
  if (j.at("decoder_likelihood").get<std::string>() != "gaussian_learned_var")
    throw DataError("checkpoint: unknown decoder likelihood");
  spec.validate();
  return spec;
}

json train_config_to_json(const TrainConfig& cfg) {
  return {{"model", cfg.model},
          {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"dropout", cfg.dropout},
          {"mask_fraction", cfg.mask_fraction},
          {"alpha", cfg.alpha},
          {"gumbel_temp", cfg.gumbel_temp},
          {"gen_temp", cfg.gen_temp},
          {"epochs", cfg.epochs},
          {"seed", cfg.seed},
          {"eval_samples", cfg.eval_samples},
          {"grad_clip", cfg.grad_clip},
          {"latent_dim", cfg.latent_dim},
          {"state_dim", cfg.state_dim},
          {"hidden_sizes", cfg.hidden_sizes},
          {"sample_state_label", cfg.sample_state_label},
          {"objects_use_previous_human_obs", cfg.objects_use_previous_human_obs}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.model = j.at("model").get<std::string>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.mask_fraction = j.at("mask_fraction").get<double>();
  cfg.alpha = j.at("alpha").get<double>();
  cfg.gumbel_temp = j.at("gumbel_temp").get<double>();
  cfg.gen_temp = j.at("gen_temp").get<double>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.eval_samples = j.at("eval_samples").get<int>();
  cfg.grad_clip = j.at("grad_clip").get<double>();
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.state_dim = j.at("state_dim").get<int>();
  cfg.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
  cfg.sample_state_label = j.at("sample_state_label").get<bool>();
  cfg.objects_use_previous_human_obs =
      j.at("objects_use_previous_human_obs").get<bool>();
  return cfg;
}

void save_checkpoint(const std::string& path, MultiEntityModels& models,
                     const CheckpointData& data) {
  std::vector<Parameter*> params = models.parameters();
  json header;
  header["mode"] = data.mode;
  header["human_spec"] = model_spec_to_json(data.specs.human);
  header["object_spec"] = data.specs.object.has_value()
                              ? model_spec_to_json(*data.specs.object)
                              : json(nullptr);
  header["train_config"] = train_config_to_json(data.config);
  header["normalization"] = norm_to_json(data.norm);
  header["summary"] = data.summary;
  header["dtype"] = "f64";
  json plist = json::array();
  for (Parameter* p : params)
    plist.push_back({{"name", p->name}, {"rows", p->rows()}, {"cols", p->cols()}});
  header["params"] = plist;

  std::string hs = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  os.write("SVRN", 4);
  write_le<std::uint32_t>(os, kCheckpointVersion);
  write_le<std::uint64_t>(os, hs.size());
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (Parameter* p : params) write_tensor(os, p->value);
  if (!os) throw DataError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SVRN", 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::uint32_t version = read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t hlen = read_le<std::uint64_t>(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw DataError("truncated checkpoint header: " + path);
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw DataError("bad checkpoint header: " + std::string(e.what()));
  }
  if (header.at("dtype").get<std::string>() != "f64")
    throw DataError("checkpoint: unsupported dtype");

  CheckpointData data;
  data.mode = header.at("mode").get<std::string>();
  data.specs.human = model_spec_from_json(header.at("human_spec"));
  if (!header.at("object_spec").is_null())
    data.specs.object = model_spec_from_json(header.at("object_spec"));
  data.config = train_config_from_json(header.at("train_config"));
  data.norm = norm_from_json(header.at("normalization"));
  data.summary = header.at("summary");

  Rng dummy(0);
  LoadedCheckpoint out{build_models(data.specs, dummy), std::move(data)};
  std::vector<Parameter*> params = out.models.parameters();
  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : params) {
    if (!by_name.emplace(p->name, p).second)
      throw DataError("checkpoint: duplicate parameter name " + p->name);
  }
  size_t loaded = 0;
  for (const auto& jp : header.at("params")) {
    std::string name = jp.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint: unknown parameter " + name);
    Parameter* p = it->second;
    if (p->rows() != jp.at("rows").get<int>() ||
        p->cols() != jp.at("cols").get<int>())
      throw DataError("checkpoint: shape mismatch for " + name);
    read_tensor(is, p->value);
    ++loaded;
  }
  if (loaded != params.size())
    throw DataError("checkpoint: parameter list incomplete");
  if (!is) throw DataError("truncated checkpoint tensors: " + path);
  return out;
}

}  // namespace svrnn
