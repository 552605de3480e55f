#include "svrnn/eval.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace svrnn {

ConfusionMatrix::ConfusionMatrix(int num_classes) : n_(num_classes) {
  if (num_classes < 1) throw ConfigError("confusion: classes must be >= 1");
  counts_.assign(static_cast<size_t>(n_) * n_, 0);
}

void ConfusionMatrix::add(int truth, int pred) {
  if (truth < 0 || truth >= n_ || pred < 0 || pred >= n_)
    throw DataError("confusion: label out of range");
  ++counts_[static_cast<size_t>(truth) * n_ + pred];
  ++total_;
}

long ConfusionMatrix::count(int truth, int pred) const {
  return counts_[static_cast<size_t>(truth) * n_ + pred];
}

double ConfusionMatrix::macro_f1() const {
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < n_; ++c) {
    long tp = count(c, c);
    long fn = 0, fp = 0, truth_total = 0;
    for (int k = 0; k < n_; ++k) {
      truth_total += count(c, k);
      if (k != c) {
        fn += count(c, k);
        fp += count(k, c);
      }
    }
    if (truth_total == 0) continue;  // class absent from the truth
    ++present;
    double precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
    double recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
    double f1 = precision + recall == 0.0
                    ? 0.0
                    : 2.0 * precision * recall / (precision + recall);
    sum += f1;
  }
  return present == 0 ? 0.0 : sum / present;
}

double f1_macro(std::span<const int> preds, std::span<const int> truths,
                int num_classes) {
  if (preds.size() != truths.size())
    throw DataError("f1_macro: prediction/truth length mismatch");
  ConfusionMatrix cm(num_classes);
  for (size_t i = 0; i < preds.size(); ++i) cm.add(truths[i], preds[i]);
  return cm.macro_f1();
}

std::string to_string(EvalTask task) {
  return task == EvalTask::detect ? "detect" : "anticipate";
}

EvalTask eval_task_from_string(const std::string& s) {
  if (s == "detect") return EvalTask::detect;
  if (s == "anticipate") return EvalTask::anticipate;
  throw ConfigError("unknown task '" + s + "' (expected detect|anticipate)");
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << "entity   task         mean_f1   std_f1    reps  scored\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-8s %-12s %8.4f  %8.4f  %4d  %6ld\n",
                  r.entity.c_str(), r.task.c_str(), r.f1_mean, r.f1_std,
                  r.repetitions, r.scored_steps);
    os << buf;
  }
  return os.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"entity", r.entity},
                         {"task", r.task},
                         {"f1_mean", r.f1_mean},
                         {"f1_std", r.f1_std},
                         {"repetitions", r.repetitions},
                         {"scored_steps", r.scored_steps}});
  }
  return {{"rows", rows_json}};
}

namespace {

struct PooledLabels {
  std::vector<int> preds;
  std::vector<int> truths;
};

// Collects (prediction, truth) pairs for one repetition across the fold.
void collect(const MultiEntityModels& models, const Dataset& ds,
             std::span<const int> record_idx, EvalTask task,
             const MeConfig& me_cfg, NoiseSource* noise, PooledLabels* human,
             PooledLabels* object) {
  for (int ri : record_idx) {
    const MultiEntityRecord& rec = ds.records[ri];
    MeLabelSequences seqs = task == EvalTask::detect
                                ? me_detect(models, rec, me_cfg, noise)
                                : me_anticipate(models, rec, me_cfg, noise);
    // detect scores step t against truth t; anticipate scores the prediction
    // made at t against truth t+1
    int offset = task == EvalTask::detect ? 0 : 1;
    for (size_t i = 0; i < seqs.human.size(); ++i) {
      const SequenceStep& truth_step = rec.human[i + offset];
      if (!truth_step.label.has_value()) continue;
      human->preds.push_back(seqs.human[i]);
      human->truths.push_back(*truth_step.label);
    }
    for (int o = 0; o < rec.num_objects(); ++o) {
      for (size_t i = 0; i < seqs.objects[o].size(); ++i) {
        const SequenceStep& truth_step = rec.objects[o][i + offset];
        if (!truth_step.label.has_value()) continue;
        object->preds.push_back(seqs.objects[o][i]);
        object->truths.push_back(*truth_step.label);
      }
    }
  }
}

EvalRow summarize(const std::string& entity, EvalTask task,
                  const std::vector<double>& f1s, long scored) {
  EvalRow row;
  row.entity = entity;
  row.task = to_string(task);
  row.repetitions = static_cast<int>(f1s.size());
  row.scored_steps = scored;
  double mean = 0.0;
  for (double f : f1s) mean += f;
  mean /= f1s.size();
  double var = 0.0;
  for (double f : f1s) var += (f - mean) * (f - mean);
  var /= f1s.size();
  row.f1_mean = mean;
  row.f1_std = std::sqrt(var);
  return row;
}

}  // namespace

EvalReport evaluate(const MultiEntityModels& models, const Dataset& dataset,
                    const std::string& fold, EvalTask task, int n_samples,
                    std::uint64_t seed, const MeConfig& me_cfg) {
  if (n_samples < 1) throw ConfigError("evaluate: n_samples must be >= 1");
  std::vector<int> record_idx = dataset.fold_indices(fold);
  if (record_idx.empty()) throw DataError("evaluate: fold " + fold + " is empty");
  bool has_objects = false;
  for (int ri : record_idx)
    has_objects |= dataset.records[ri].num_objects() > 0;

  std::vector<double> human_f1s, object_f1s;
  long human_scored = 0, object_scored = 0;
  for (int rep = 0; rep < n_samples; ++rep) {
    PooledLabels human, object;
    if (n_samples == 1) {
      collect(models, dataset, record_idx, task, me_cfg, nullptr, &human,
              &object);
    } else {
      RngNoise noise(mix_seed(seed, static_cast<std::uint64_t>(rep)));
      collect(models, dataset, record_idx, task, me_cfg, &noise, &human,
              &object);
    }
    human_f1s.push_back(f1_macro(human.preds, human.truths,
                                 models.human.spec().num_classes));
    human_scored = static_cast<long>(human.truths.size());
    if (has_objects) {
      object_f1s.push_back(f1_macro(object.preds, object.truths,
                                    models.object->spec().num_classes));
      object_scored = static_cast<long>(object.truths.size());
    }
  }

  EvalReport report;
  report.rows.push_back(summarize("human", task, human_f1s, human_scored));
  if (has_objects)
    report.rows.push_back(summarize("object", task, object_f1s, object_scored));
  return report;
}

double score_stream_predictor(const Dataset& dataset, const std::string& fold,
                              bool object_kind, int num_classes,
                              const StreamPredictor& predictor) {
  PooledLabels pooled;
  for (int ri : dataset.fold_indices(fold)) {
    const MultiEntityRecord& rec = dataset.records[ri];
    std::vector<const std::vector<SequenceStep>*> streams;
    if (object_kind) {
      for (const auto& obj : rec.objects) streams.push_back(&obj);
    } else {
      streams.push_back(&rec.human);
    }
    for (const auto* stream : streams) {
      std::vector<int> preds = predictor(*stream);
      if (preds.size() != stream->size())
        throw DataError("predictor returned wrong-length sequence");
      for (size_t i = 0; i < preds.size(); ++i) {
        if (!(*stream)[i].label.has_value()) continue;
        pooled.preds.push_back(preds[i]);
        pooled.truths.push_back(*(*stream)[i].label);
      }
    }
  }
  return f1_macro(pooled.preds, pooled.truths, num_classes);
}

}  // namespace svrnn
