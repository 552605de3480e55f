#pragma once

#include "svrnn/common.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svrnn {

// One timestep of one entity stream: the feature vector and, when observed,
// the label. A masked step keeps its label value in memory (for scoring) but
// is treated as unlabeled by every training path.
struct SequenceStep {
  int t = 0;
  Vec x;
  std::optional<int> label;
  bool observed = false;
};

// One human stream plus zero or more object streams, all time-aligned.
struct MultiEntityRecord {
  std::string id;
  std::vector<SequenceStep> human;
  std::vector<std::vector<SequenceStep>> objects;

  int length() const { return static_cast<int>(human.size()); }
  int num_objects() const { return static_cast<int>(objects.size()); }
};

struct DatasetMeta {
  int human_feature_dim = 0;
  int human_classes = 0;
  int object_feature_dim = 0;  // 0 when the dataset has no object streams
  int object_classes = 0;
  std::vector<std::string> human_label_names;
  std::vector<std::string> object_label_names;
  // fold id -> record ids; folds partition the records
  std::map<std::string, std::vector<std::string>> folds;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<MultiEntityRecord> records;

  const MultiEntityRecord* find(const std::string& id) const;
  // Record indices belonging to the given fold.
  std::vector<int> fold_indices(const std::string& fold) const;
  // Record indices of every fold except the given one.
  std::vector<int> complement_indices(const std::string& fold) const;
};

// --- file formats -------------------------------------------------------------
//
// Data files are line-delimited JSON, one record per line:
//   {"id": "...", "human": {"steps": [{"t": 0, "x": [...], "y": 3}, ...]},
//    "objects": [{"steps": [...]}, ...]}
// "y": null marks an unobserved step. A sidecar meta file (JSON) declares
// feature dims, class counts, label names and fold assignments.

Dataset load_dataset(const std::string& data_path, const std::string& meta_path);
void write_dataset(const Dataset& ds, const std::string& data_path,
                   const std::string& meta_path);

// Conventional sidecar path: "x.jsonl" -> "x.meta.json".
std::string default_meta_path(const std::string& data_path);

// --- label masking --------------------------------------------------------------

// Marks observed labels unobserved with the given probability, jointly across
// entities at each timestep (a timestep is either fully observed or fully
// unobserved across the human and all objects). Label values stay in memory.
Dataset mask_labels(const Dataset& ds, double fraction, std::uint64_t seed);

// --- batching ---------------------------------------------------------------------

// Deterministic shuffle of the given folds' records into batches of whole
// sequences; the last batch may be short. Each batch is a list of record
// indices into ds.records.
std::vector<std::vector<int>> batch_iter(const Dataset& ds,
                                         std::span<const std::string> folds,
                                         int batch_size, std::uint64_t seed);
std::vector<std::vector<int>> batch_iter(const Dataset& ds,
                                         const std::string& fold,
                                         int batch_size, std::uint64_t seed);

// --- normalization ----------------------------------------------------------------

struct NormStats {
  Vec mean;
  Vec std;  // floored at 1e-8
};

struct Normalization {
  NormStats human;
  NormStats object;  // empty vectors when no object streams
};

// Per-dimension statistics over the given folds only.
Normalization compute_normalization(const Dataset& ds,
                                    std::span<const std::string> folds);
// (x - mean) / std applied to every feature vector; returns a copy.
Dataset apply_normalization(const Dataset& ds, const Normalization& norm);
Vec denormalize(const Vec& x, const NormStats& stats);

// --- synthetic data ------------------------------------------------------------------
//
// Coupled hidden Markov chains with Gaussian emissions. The human chain is a
// plain Markov chain; each object's next label is drawn conditionally on its
// own current label and the human's current label. This is the ground-truth
// oracle behind the derived experiments.

struct SynthSpec {
  int human_classes = 0;
  int object_classes = 0;  // 0 -> no object streams
  int num_objects = 0;
  int human_feature_dim = 0;
  int object_feature_dim = 0;
  int sequence_length = 0;
  int num_records = 0;
  int num_folds = 4;
  double coupling = 0.0;  // 0: objects ignore the human; 1: fully driven by it

  Mat human_trans;                  // N_H x N_H, rows sum to 1
  std::vector<Mat> object_trans;    // [current object label] -> N_H x N_O rows
  Mat human_means;                  // N_H x d_H
  Mat human_vars;                   // N_H x d_H, > 0
  Mat object_means;                 // N_O x d_O
  Mat object_vars;                  // N_O x d_O

  void validate() const;

  // Emission means on scaled coordinate axes: class c sits at
  // separation * e_c with unit variance, so classes are well separated when
  // separation is a few sigma.
  static Mat axis_means(int classes, int dim, double separation);
};

class SynthOracle {
 public:
  explicit SynthOracle(SynthSpec spec) : spec_(std::move(spec)) {}

  const SynthSpec& spec() const { return spec_; }

  // Bayes-optimal per-step classifier from the emission model alone
  // (uniform class prior).
  int bayes_human(const Vec& x) const;
  int bayes_object(const Vec& x) const;

  // Exact transition distributions.
  Vec human_next_dist(int human_label) const;
  Vec object_next_dist(int object_label, int human_label) const;

  // Stationary distribution of the human chain (power iteration).
  Vec human_stationary() const;

 private:
  static int bayes(const Vec& x, const Mat& means, const Mat& vars);
  SynthSpec spec_;
};

std::pair<Dataset, SynthOracle> synth_generate(const SynthSpec& spec,
                                               std::uint64_t seed);

// JSON round trip for CLI use.
SynthSpec synth_spec_from_json_file(const std::string& path);
void write_synth_oracle(const SynthOracle& oracle, const std::string& path);

}  // namespace svrnn
