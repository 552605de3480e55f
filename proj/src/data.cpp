#include "svrnn/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace svrnn {

using nlohmann::json;

const MultiEntityRecord* Dataset::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

std::vector<int> Dataset::fold_indices(const std::string& fold) const {
  auto it = meta.folds.find(fold);
  if (it == meta.folds.end()) throw DataError("unknown fold: " + fold);
  std::vector<int> out;
  for (const auto& id : it->second) {
    const MultiEntityRecord* r = find(id);
    if (r == nullptr) throw DataError("fold references missing record: " + id);
    out.push_back(static_cast<int>(r - records.data()));
  }
  return out;
}

std::vector<int> Dataset::complement_indices(const std::string& fold) const {
  if (meta.folds.find(fold) == meta.folds.end())
    throw DataError("unknown fold: " + fold);
  std::vector<int> out;
  for (const auto& [name, _] : meta.folds) {
    if (name == fold) continue;
    auto idx = fold_indices(name);
    out.insert(out.end(), idx.begin(), idx.end());
  }
  return out;
}

// --- json helpers ----------------------------------------------------------

namespace {

Vec vec_from_json(const json& j) {
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

json vec_to_json(const Vec& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Mat mat_from_json(const json& j) {
  if (j.empty()) return Mat();
  Mat m(j.size(), j[0].size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != j[0].size()) throw DataError("ragged matrix in json");
    for (size_t k = 0; k < j[i].size(); ++k)
      m(static_cast<int>(i), static_cast<int>(k)) = j[i][k].get<double>();
  }
  return m;
}

json mat_to_json(const Mat& m) {
  json j = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

std::vector<SequenceStep> steps_from_json(const json& j, int feature_dim,
                                          int classes, const std::string& where) {
  std::vector<SequenceStep> steps;
  int t = 0;
  for (const auto& js : j.at("steps")) {
    SequenceStep s;
    s.t = js.contains("t") ? js.at("t").get<int>() : t;
    s.x = vec_from_json(js.at("x"));
    if (s.x.size() != feature_dim)
      throw DataError(where + ": feature dim " + std::to_string(s.x.size()) +
                      " != meta dim " + std::to_string(feature_dim));
    if (!s.x.allFinite()) throw DataError(where + ": non-finite feature");
    if (js.contains("y") && !js.at("y").is_null()) {
      int y = js.at("y").get<int>();
      if (y < 0 || y >= classes)
        throw DataError(where + ": label " + std::to_string(y) +
                        " out of range [0, " + std::to_string(classes) + ")");
      s.label = y;
      s.observed = true;
    }
    steps.push_back(std::move(s));
    ++t;
  }
  return steps;
}

json steps_to_json(const std::vector<SequenceStep>& steps) {
  json arr = json::array();
  for (const auto& s : steps) {
    json js;
    js["t"] = s.t;
    js["x"] = vec_to_json(s.x);
    js["y"] = s.observed ? json(*s.label) : json(nullptr);
    arr.push_back(std::move(js));
  }
  return arr;
}

void validate_folds(const Dataset& ds) {
  std::set<std::string> seen;
  for (const auto& [fold, ids] : ds.meta.folds) {
    for (const auto& id : ids) {
      if (!seen.insert(id).second)
        throw DataError("record " + id + " assigned to more than one fold");
      if (ds.find(id) == nullptr)
        throw DataError("fold " + fold + " references missing record " + id);
    }
  }
  for (const auto& r : ds.records)
    if (seen.find(r.id) == seen.end())
      throw DataError("record " + r.id + " belongs to no fold");
}

}  // namespace

Dataset load_dataset(const std::string& data_path, const std::string& meta_path) {
  std::ifstream mf(meta_path);
  if (!mf) throw DataError("cannot open meta file: " + meta_path);
  json jm;
  try {
    mf >> jm;
  } catch (const json::exception& e) {
    throw DataError("meta parse error in " + meta_path + ": " + e.what());
  }

  Dataset ds;
  ds.meta.human_feature_dim = jm.at("feature_dim").at("human").get<int>();
  ds.meta.human_classes = jm.at("num_classes").at("human").get<int>();
  ds.meta.object_feature_dim = jm.at("feature_dim").value("object", 0);
  ds.meta.object_classes = jm.at("num_classes").value("object", 0);
  if (jm.contains("label_names")) {
    for (const auto& n : jm["label_names"].value("human", json::array()))
      ds.meta.human_label_names.push_back(n.get<std::string>());
    for (const auto& n : jm["label_names"].value("object", json::array()))
      ds.meta.object_label_names.push_back(n.get<std::string>());
  }
  for (const auto& [fold, ids] : jm.at("folds").items())
    for (const auto& id : ids) ds.meta.folds[fold].push_back(id.get<std::string>());

  std::ifstream f(data_path);
  if (!f) throw DataError("cannot open data file: " + data_path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json jr;
    try {
      jr = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(data_path + " line " + std::to_string(lineno) +
                      ": parse error: " + e.what());
    }
    std::string where = data_path + " line " + std::to_string(lineno);
    try {
      MultiEntityRecord rec;
      rec.id = jr.at("id").get<std::string>();
      rec.human = steps_from_json(jr.at("human"), ds.meta.human_feature_dim,
                                  ds.meta.human_classes, where + " (human)");
      for (const auto& jo : jr.value("objects", json::array()))
        rec.objects.push_back(steps_from_json(jo, ds.meta.object_feature_dim,
                                              ds.meta.object_classes,
                                              where + " (object)"));
      for (const auto& obj : rec.objects)
        if (static_cast<int>(obj.size()) != rec.length())
          throw DataError(where + ": entity stream lengths differ");
      ds.records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  validate_folds(ds);
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& data_path,
                   const std::string& meta_path) {
  json jm;
  jm["feature_dim"]["human"] = ds.meta.human_feature_dim;
  jm["feature_dim"]["object"] = ds.meta.object_feature_dim;
  jm["num_classes"]["human"] = ds.meta.human_classes;
  jm["num_classes"]["object"] = ds.meta.object_classes;
  jm["label_names"]["human"] = ds.meta.human_label_names;
  jm["label_names"]["object"] = ds.meta.object_label_names;
  jm["folds"] = json::object();
  for (const auto& [fold, ids] : ds.meta.folds) jm["folds"][fold] = ids;
  std::ofstream mf(meta_path);
  if (!mf) throw DataError("cannot write meta file: " + meta_path);
  mf << jm.dump(2) << "\n";

  std::ofstream f(data_path);
  if (!f) throw DataError("cannot write data file: " + data_path);
  for (const auto& rec : ds.records) {
    json jr;
    jr["id"] = rec.id;
    jr["human"]["steps"] = steps_to_json(rec.human);
    jr["objects"] = json::array();
    for (const auto& obj : rec.objects) {
      json jo;
      jo["steps"] = steps_to_json(obj);
      jr["objects"].push_back(std::move(jo));
    }
    f << jr.dump() << "\n";
  }
}

std::string default_meta_path(const std::string& data_path) {
  auto pos = data_path.rfind(".jsonl");
  if (pos != std::string::npos && pos == data_path.size() - 6)
    return data_path.substr(0, pos) + ".meta.json";
  return data_path + ".meta.json";
}

// --- masking ------------------------------------------------------------------

Dataset mask_labels(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ConfigError("mask_labels: fraction must be in [0, 1]");
  Dataset out = ds;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& rec : out.records) {
    for (int t = 0; t < rec.length(); ++t) {
      bool any_observed = rec.human[t].observed;
      for (const auto& obj : rec.objects) any_observed |= obj[t].observed;
      if (!any_observed) continue;
      if (u(rng) < fraction) {
        rec.human[t].observed = false;
        for (auto& obj : rec.objects) obj[t].observed = false;
      }
    }
  }
  return out;
}

// --- batching --------------------------------------------------------------------

std::vector<std::vector<int>> batch_iter(const Dataset& ds,
                                         std::span<const std::string> folds,
                                         int batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch_iter: batch_size must be >= 1");
  std::vector<int> idx;
  for (const auto& fold : folds) {
    auto fi = ds.fold_indices(fold);
    idx.insert(idx.end(), fi.begin(), fi.end());
  }
  if (idx.empty()) throw DataError("batch_iter: no records in given folds");
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<int>> batches;
  for (size_t i = 0; i < idx.size(); i += batch_size) {
    size_t end = std::min(idx.size(), i + batch_size);
    batches.emplace_back(idx.begin() + i, idx.begin() + end);
  }
  return batches;
}

std::vector<std::vector<int>> batch_iter(const Dataset& ds,
                                         const std::string& fold,
                                         int batch_size, std::uint64_t seed) {
  std::vector<std::string> folds{fold};
  return batch_iter(ds, folds, batch_size, seed);
}

// --- normalization ------------------------------------------------------------------

namespace {

NormStats stats_over(const std::vector<const std::vector<SequenceStep>*>& streams,
                     int dim) {
  NormStats st;
  st.mean = Vec::Zero(dim);
  st.std = Vec::Ones(dim);
  if (dim == 0) {
    st.mean.resize(0);
    st.std.resize(0);
    return st;
  }
  long n = 0;
  for (const auto* s : streams)
    for (const auto& step : *s) {
      st.mean += step.x;
      ++n;
    }
  if (n == 0) return st;
  st.mean /= static_cast<double>(n);
  Vec var = Vec::Zero(dim);
  for (const auto* s : streams)
    for (const auto& step : *s) var.array() += (step.x - st.mean).array().square();
  var /= static_cast<double>(n);
  st.std = var.array().sqrt().max(1e-8);
  return st;
}

}  // namespace

Normalization compute_normalization(const Dataset& ds,
                                    std::span<const std::string> folds) {
  std::vector<const std::vector<SequenceStep>*> human, object;
  for (const auto& fold : folds)
    for (int i : ds.fold_indices(fold)) {
      human.push_back(&ds.records[i].human);
      for (const auto& obj : ds.records[i].objects) object.push_back(&obj);
    }
  Normalization norm;
  norm.human = stats_over(human, ds.meta.human_feature_dim);
  norm.object = stats_over(object, ds.meta.object_feature_dim);
  return norm;
}

Dataset apply_normalization(const Dataset& ds, const Normalization& norm) {
  Dataset out = ds;
  for (auto& rec : out.records) {
    for (auto& s : rec.human)
      s.x = ((s.x - norm.human.mean).array() / norm.human.std.array()).matrix();
    for (auto& obj : rec.objects)
      for (auto& s : obj)
        s.x = ((s.x - norm.object.mean).array() / norm.object.std.array()).matrix();
  }
  return out;
}

Vec denormalize(const Vec& x, const NormStats& stats) {
  return (x.array() * stats.std.array() + stats.mean.array()).matrix();
}

// --- synthetic data --------------------------------------------------------------------

Mat SynthSpec::axis_means(int classes, int dim, double separation) {
  Mat m = Mat::Zero(classes, dim);
  for (int c = 0; c < classes; ++c) m(c, c % dim) = separation;
  return m;
}

void SynthSpec::validate() const {
  if (human_classes < 1 || human_feature_dim < 1 || sequence_length < 1 ||
      num_records < 1 || num_folds < 1)
    throw ConfigError("synth: dims and counts must be >= 1");
  if (num_objects > 0 && (object_classes < 1 || object_feature_dim < 1))
    throw ConfigError("synth: object dims required when num_objects > 0");
  auto check_stochastic = [](const Mat& m, const std::string& what) {
    for (int i = 0; i < m.rows(); ++i) {
      double s = m.row(i).sum();
      if (std::abs(s - 1.0) > 1e-9)
        throw ConfigError("synth: " + what + " row " + std::to_string(i) +
                          " sums to " + std::to_string(s));
      if (m.row(i).minCoeff() < 0.0)
        throw ConfigError("synth: " + what + " has negative entries");
    }
  };
  if (human_trans.rows() != human_classes || human_trans.cols() != human_classes)
    throw ConfigError("synth: human_trans shape mismatch");
  check_stochastic(human_trans, "human_trans");
  if (human_means.rows() != human_classes || human_means.cols() != human_feature_dim)
    throw ConfigError("synth: human_means shape mismatch");
  if (human_vars.rows() != human_classes || human_vars.cols() != human_feature_dim ||
      human_vars.minCoeff() <= 0.0)
    throw ConfigError("synth: human_vars must be positive and match dims");
  if (num_objects > 0) {
    if (static_cast<int>(object_trans.size()) != object_classes)
      throw ConfigError("synth: object_trans must have one matrix per object class");
    for (const auto& m : object_trans) {
      if (m.rows() != human_classes || m.cols() != object_classes)
        throw ConfigError("synth: object_trans matrix shape mismatch");
      check_stochastic(m, "object_trans");
    }
    if (object_means.rows() != object_classes ||
        object_means.cols() != object_feature_dim)
      throw ConfigError("synth: object_means shape mismatch");
    if (object_vars.rows() != object_classes ||
        object_vars.cols() != object_feature_dim || object_vars.minCoeff() <= 0.0)
      throw ConfigError("synth: object_vars must be positive and match dims");
  }
}

namespace {

int sample_discrete(const Vec& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  double acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

Vec emit(const Mat& means, const Mat& vars, int label, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec x(means.cols());
  for (int i = 0; i < x.size(); ++i)
    x[i] = means(label, i) + std::sqrt(vars(label, i)) * n(rng);
  return x;
}

}  // namespace

int SynthOracle::bayes(const Vec& x, const Mat& means, const Mat& vars) {
  int best = 0;
  double best_lp = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < means.rows(); ++c) {
    double lp = 0.0;
    for (int i = 0; i < x.size(); ++i) {
      double d = x[i] - means(c, i);
      lp += -0.5 * std::log(vars(c, i)) - 0.5 * d * d / vars(c, i);
    }
    if (lp > best_lp) {
      best_lp = lp;
      best = c;
    }
  }
  return best;
}

int SynthOracle::bayes_human(const Vec& x) const {
  return bayes(x, spec_.human_means, spec_.human_vars);
}

int SynthOracle::bayes_object(const Vec& x) const {
  return bayes(x, spec_.object_means, spec_.object_vars);
}

Vec SynthOracle::human_next_dist(int human_label) const {
  return spec_.human_trans.row(human_label).transpose();
}

Vec SynthOracle::object_next_dist(int object_label, int human_label) const {
  return spec_.object_trans[object_label].row(human_label).transpose();
}

Vec SynthOracle::human_stationary() const {
  Vec pi = Vec::Constant(spec_.human_classes, 1.0 / spec_.human_classes);
  for (int it = 0; it < 1000; ++it) pi = spec_.human_trans.transpose() * pi;
  return pi / pi.sum();
}

std::pair<Dataset, SynthOracle> synth_generate(const SynthSpec& spec,
                                               std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Dataset ds;
  ds.meta.human_feature_dim = spec.human_feature_dim;
  ds.meta.human_classes = spec.human_classes;
  ds.meta.object_feature_dim = spec.num_objects > 0 ? spec.object_feature_dim : 0;
  ds.meta.object_classes = spec.num_objects > 0 ? spec.object_classes : 0;

  std::uniform_int_distribution<int> uh(0, spec.human_classes - 1);
  for (int r = 0; r < spec.num_records; ++r) {
    MultiEntityRecord rec;
    rec.id = "seq" + std::to_string(r);
    int yh = uh(rng);
    std::vector<int> yo(spec.num_objects);
    for (int o = 0; o < spec.num_objects; ++o)
      yo[o] = std::uniform_int_distribution<int>(0, spec.object_classes - 1)(rng);
    rec.objects.resize(spec.num_objects);
    for (int t = 0; t < spec.sequence_length; ++t) {
      if (t > 0) {
        int prev_h = yh;
        yh = sample_discrete(spec.human_trans.row(prev_h).transpose(), rng);
        for (int o = 0; o < spec.num_objects; ++o)
          yo[o] = sample_discrete(
              spec.object_trans[yo[o]].row(prev_h).transpose(), rng);
      }
      SequenceStep hs;
      hs.t = t;
      hs.x = emit(spec.human_means, spec.human_vars, yh, rng);
      hs.label = yh;
      hs.observed = true;
      rec.human.push_back(std::move(hs));
      for (int o = 0; o < spec.num_objects; ++o) {
        SequenceStep os;
        os.t = t;
        os.x = emit(spec.object_means, spec.object_vars, yo[o], rng);
        os.label = yo[o];
        os.observed = true;
        rec.objects[o].push_back(std::move(os));
      }
    }
    std::string fold = "fold" + std::to_string(r % spec.num_folds);
    ds.meta.folds[fold].push_back(rec.id);
    ds.records.push_back(std::move(rec));
  }
  return {std::move(ds), SynthOracle(spec)};
}

// --- synth spec json ----------------------------------------------------------

SynthSpec synth_spec_from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open synth spec: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw DataError("synth spec parse error in " + path + ": " + e.what());
  }
  SynthSpec s;
  s.human_classes = j.at("human_classes").get<int>();
  s.object_classes = j.value("object_classes", 0);
  s.num_objects = j.value("num_objects", 0);
  s.human_feature_dim = j.at("human_feature_dim").get<int>();
  s.object_feature_dim = j.value("object_feature_dim", 0);
  s.sequence_length = j.at("sequence_length").get<int>();
  s.num_records = j.at("num_records").get<int>();
  s.num_folds = j.value("num_folds", 4);
  s.coupling = j.value("coupling", 0.0);
  double sep = j.value("separation", 4.0);

  if (j.contains("human_trans")) {
    s.human_trans = mat_from_json(j["human_trans"]);
  } else {
    s.human_trans = Mat::Constant(s.human_classes, s.human_classes,
                                  1.0 / s.human_classes);
  }
  s.human_means = j.contains("human_means")
                      ? mat_from_json(j["human_means"])
                      : SynthSpec::axis_means(s.human_classes,
                                              s.human_feature_dim, sep);
  s.human_vars = j.contains("human_vars")
                     ? mat_from_json(j["human_vars"])
                     : Mat::Ones(s.human_classes, s.human_feature_dim);
  if (s.num_objects > 0) {
    if (j.contains("object_trans")) {
      for (const auto& jm : j["object_trans"])
        s.object_trans.push_back(mat_from_json(jm));
    } else {
      // blend of a human-independent uniform row and a row pinned to the
      // human label (mapped into the object label space) by `coupling`
      for (int o = 0; o < s.object_classes; ++o) {
        Mat m(s.human_classes, s.object_classes);
        for (int h = 0; h < s.human_classes; ++h) {
          Vec row = Vec::Constant(s.object_classes, 1.0 / s.object_classes);
          Vec pin = one_hot(h % s.object_classes, s.object_classes);
          m.row(h) = ((1.0 - s.coupling) * row + s.coupling * pin).transpose();
        }
        s.object_trans.push_back(std::move(m));
      }
    }
    s.object_means = j.contains("object_means")
                         ? mat_from_json(j["object_means"])
                         : SynthSpec::axis_means(s.object_classes,
                                                 s.object_feature_dim, sep);
    s.object_vars = j.contains("object_vars")
                        ? mat_from_json(j["object_vars"])
                        : Mat::Ones(s.object_classes, s.object_feature_dim);
  }
  s.validate();
  return s;
}

void write_synth_oracle(const SynthOracle& oracle, const std::string& path) {
  const SynthSpec& s = oracle.spec();
  json j;
  j["human_classes"] = s.human_classes;
  j["object_classes"] = s.object_classes;
  j["num_objects"] = s.num_objects;
  j["human_trans"] = mat_to_json(s.human_trans);
  j["human_stationary"] = vec_to_json(oracle.human_stationary());
  j["object_trans"] = json::array();
  for (const auto& m : s.object_trans) j["object_trans"].push_back(mat_to_json(m));
  j["human_means"] = mat_to_json(s.human_means);
  j["human_vars"] = mat_to_json(s.human_vars);
  if (s.num_objects > 0) {
    j["object_means"] = mat_to_json(s.object_means);
    j["object_vars"] = mat_to_json(s.object_vars);
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot write oracle file: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace svrnn
