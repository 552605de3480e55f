#include "svrnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace svrnn {

void TrainConfig::validate() const {
  if (model != "svrnn" && model != "me_svrnn")
    throw ConfigError("model must be svrnn or me_svrnn");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout must be in [0, 1)");
  if (mask_fraction < 0.0 || mask_fraction > 1.0)
    throw ConfigError("mask_fraction must be in [0, 1]");
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (gumbel_temp <= 0.0 || gen_temp <= 0.0)
    throw ConfigError("temperatures must be > 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
  if (grad_clip <= 0.0) throw ConfigError("grad_clip must be > 0");
  if (latent_dim < 1 || state_dim < 1)
    throw ConfigError("latent_dim and state_dim must be >= 1");
  for (int h : hidden_sizes)
    if (h < 1) throw ConfigError("hidden_sizes entries must be >= 1");
}

const std::vector<std::string>& TrainConfig::valid_keys() {
  static const std::vector<std::string> keys = {
      "model",         "learning_rate",
      "batch_size",    "dropout",
      "mask_fraction", "alpha",
      "gumbel_temp",   "gen_temp",
      "epochs",        "seed",
      "eval_samples",  "grad_clip",
      "latent_dim",    "state_dim",
      "hidden_sizes",  "sample_state_label",
      "objects_use_previous_human_obs"};
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(trim(item)));
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected comma-separated integers, got '" + v +
                        "'");
    }
  }
  return out;
}

}  // namespace

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + " line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    try {
      if (key == "model") cfg.model = val;
      else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
      else if (key == "batch_size") cfg.batch_size = std::stoi(val);
      else if (key == "dropout") cfg.dropout = std::stod(val);
      else if (key == "mask_fraction") cfg.mask_fraction = std::stod(val);
      else if (key == "alpha") cfg.alpha = std::stod(val);
      else if (key == "gumbel_temp") cfg.gumbel_temp = std::stod(val);
      else if (key == "gen_temp") cfg.gen_temp = std::stod(val);
      else if (key == "epochs") cfg.epochs = std::stoi(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "eval_samples") cfg.eval_samples = std::stoi(val);
      else if (key == "grad_clip") cfg.grad_clip = std::stod(val);
      else if (key == "latent_dim") cfg.latent_dim = std::stoi(val);
      else if (key == "state_dim") cfg.state_dim = std::stoi(val);
      else if (key == "hidden_sizes") cfg.hidden_sizes = parse_int_list(val, key);
      else if (key == "sample_state_label")
        cfg.sample_state_label = parse_bool(val, key);
      else if (key == "objects_use_previous_human_obs")
        cfg.objects_use_previous_human_obs = parse_bool(val, key);
      else {
        std::string keys;
        for (const auto& k : valid_keys()) keys += (keys.empty() ? "" : ", ") + k;
        throw ConfigError(path + " line " + std::to_string(lineno) +
                          ": unknown key '" + key + "' (valid keys: " + keys +
                          ")");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(path + " line " + std::to_string(lineno) +
                        ": bad value '" + val + "' for key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

namespace {

// Counts observed entity-steps vs all entity-steps in a set of records.
std::pair<long, long> labeled_counts(const std::vector<MultiEntityRecord>& recs) {
  long labeled = 0, total = 0;
  for (const auto& r : recs) {
    for (const auto& s : r.human) {
      ++total;
      labeled += s.observed ? 1 : 0;
    }
    for (const auto& obj : r.objects)
      for (const auto& s : obj) {
        ++total;
        labeled += s.observed ? 1 : 0;
      }
  }
  return {labeled, total};
}

std::vector<Mat> snapshot_values(std::span<Parameter* const> params) {
  std::vector<Mat> out;
  out.reserve(params.size());
  for (Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore_values(std::span<Parameter* const> params,
                    const std::vector<Mat>& values) {
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

MultiEntityRecord mask_one_record(const MultiEntityRecord& rec, double fraction,
                                  Rng& rng) {
  MultiEntityRecord out = rec;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < out.length(); ++t) {
    bool any = out.human[t].observed;
    for (const auto& obj : out.objects) any |= obj[t].observed;
    if (!any) continue;
    if (u(rng) < fraction) {
      out.human[t].observed = false;
      for (auto& obj : out.objects) obj[t].observed = false;
    }
  }
  return out;
}

}  // namespace

TrainOutcome train(const Dataset& raw, const std::string& heldout_fold,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (raw.meta.folds.find(heldout_fold) == raw.meta.folds.end())
    throw DataError("unknown fold: " + heldout_fold);
  std::vector<std::string> train_folds;
  for (const auto& [name, _] : raw.meta.folds)
    if (name != heldout_fold) train_folds.push_back(name);
  if (train_folds.empty())
    throw DataError("no training folds left after holding out " + heldout_fold);

  Normalization norm = compute_normalization(raw, train_folds);
  Dataset data = apply_normalization(raw, norm);

  MeSpecs specs = make_specs(data.meta, cfg.latent_dim, cfg.state_dim,
                             cfg.hidden_sizes, cfg.model == "me_svrnn");
  Rng init_rng(mix_seed(cfg.seed, 0xA11CEULL));
  TrainOutcome out{build_models(specs, init_rng), specs, norm, {}, false, ""};
  std::vector<Parameter*> params = out.models.parameters();
  MeConfig me_cfg = cfg.me_config();

  std::vector<Mat> last_good = snapshot_values(params);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = batch_iter(data, train_folds, cfg.batch_size,
                              mix_seed(cfg.seed, 0xE60C + epoch));
    double epoch_loss = 0.0;
    long epoch_records = 0;
    double norm_sum = 0.0;
    double frac_sum = 0.0;
    try {
      for (size_t b = 0; b < batches.size(); ++b) {
        std::vector<MultiEntityRecord> masked;
        Rng mask_rng(mix_seed(cfg.seed, 0xBA5CULL + epoch * 1000003ULL + b));
        for (int ri : batches[b])
          masked.push_back(
              mask_one_record(data.records[ri], cfg.mask_fraction, mask_rng));

        auto [labeled, total_steps] = labeled_counts(masked);
        double frac = total_steps > 0 ? double(labeled) / double(total_steps) : 0.0;
        LossConfig lc;
        lc.alpha = frac > 0.0 ? cfg.alpha / frac : 0.0;
        lc.dropout = cfg.dropout;
        lc.training = true;
        lc.sample_state_label = cfg.sample_state_label;
        lc.gumbel_temp = cfg.gumbel_temp;

        for (Parameter* p : params) p->zero_grad();
        double batch_loss = 0.0;
        for (size_t r = 0; r < masked.size(); ++r) {
          Tape tape;
          RngNoise noise(mix_seed(cfg.seed, 0x5EEDULL + epoch * 1000003ULL +
                                                b * 1009ULL + r));
          auto seq = me_sequence_loss(tape, out.models, masked[r], noise, lc,
                                      me_cfg);
          tape.backward(seq.total);
          batch_loss += seq.total_value;
        }
        double inv = 1.0 / static_cast<double>(masked.size());
        for (Parameter* p : params) p->grad *= inv;
        norm_sum += global_grad_norm(params);
        clip_grad_norm(params, cfg.grad_clip);
        for (Parameter* p : params) adagrad_update(*p, cfg.learning_rate);

        epoch_loss += batch_loss;
        epoch_records += static_cast<long>(masked.size());
        frac_sum += frac;
      }
    } catch (const NumericError& e) {
      restore_values(params, last_good);
      out.aborted = true;
      out.abort_reason = e.what();
      return out;
    }
    out.log.push_back(EpochLog{epoch + 1, epoch_loss / epoch_records,
                               frac_sum / batches.size(),
                               norm_sum / batches.size()});
    last_good = snapshot_values(params);
  }
  return out;
}

}  // namespace svrnn
