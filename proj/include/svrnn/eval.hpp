#pragma once

#include "svrnn/multi_entity.hpp"

#include <json.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace svrnn {

// Rows are truth, columns are prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);
  void add(int truth, int pred);
  long count(int truth, int pred) const;
  long total() const { return total_; }
  int num_classes() const { return n_; }

  // Unweighted mean of per-class F1, over classes that appear in the truth.
  // A class with zero precision+recall contributes F1 = 0.
  double macro_f1() const;

 private:
  int n_;
  long total_ = 0;
  std::vector<long> counts_;
};

double f1_macro(std::span<const int> preds, std::span<const int> truths,
                int num_classes);

enum class EvalTask { detect, anticipate };

std::string to_string(EvalTask task);
EvalTask eval_task_from_string(const std::string& s);

struct EvalRow {
  std::string entity;  // "human" | "object"
  std::string task;
  double f1_mean = 0.0;
  double f1_std = 0.0;
  int repetitions = 0;
  long scored_steps = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::string table() const;
  nlohmann::json to_json() const;
};

// Scores the trained models on a held-out fold. Predictions come from the
// label posterior (detect) or the temporal label prior one step ahead
// (anticipate); truths are the labels stored in the records. With
// n_samples == 1 the recurrent state advances deterministically on posterior
// means; with more repetitions each one resamples the posterior latents, and
// the report carries the mean and standard deviation over repetitions.
EvalReport evaluate(const MultiEntityModels& models, const Dataset& dataset,
                    const std::string& fold, EvalTask task, int n_samples,
                    std::uint64_t seed, const MeConfig& me_cfg = {});

// Detect-style scoring of an arbitrary per-stream predictor over a fold;
// used to score reference classifiers with the same machinery.
using StreamPredictor =
    std::function<std::vector<int>(const std::vector<SequenceStep>&)>;
double score_stream_predictor(const Dataset& dataset, const std::string& fold,
                              bool object_kind, int num_classes,
                              const StreamPredictor& predictor);

}  // namespace svrnn
