#include "svrnn/data.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "helpers.hpp"

using namespace svrnn;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("svrnn_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

SynthSpec human_only_spec(int classes, int d_x, int len, int count) {
  SynthSpec s;
  s.human_classes = classes;
  s.human_feature_dim = d_x;
  s.sequence_length = len;
  s.num_records = count;
  s.human_trans = Mat::Constant(classes, classes, 1.0 / classes);
  s.human_means = SynthSpec::axis_means(classes, d_x, 4.0);
  s.human_vars = Mat::Ones(classes, d_x);
  return s;
}

SynthSpec coupled_spec(int nh, int no, int d_h, int d_o, int len, int count) {
  SynthSpec s;
  s.human_classes = nh;
  s.object_classes = no;
  s.num_objects = 1;
  s.human_feature_dim = d_h;
  s.object_feature_dim = d_o;
  s.sequence_length = len;
  s.num_records = count;
  s.human_trans = Mat::Constant(nh, nh, 1.0 / nh);
  s.human_means = SynthSpec::axis_means(nh, d_h, 4.0);
  s.human_vars = Mat::Ones(nh, d_h);
  for (int o = 0; o < no; ++o) {
    Mat m(nh, no);
    for (int h = 0; h < nh; ++h)
      m.row(h) = one_hot(h % no, no).transpose();
    s.object_trans.push_back(m);
  }
  s.object_means = SynthSpec::axis_means(no, d_o, 4.0);
  s.object_vars = Mat::Ones(no, d_o);
  return s;
}

}  // namespace

TEST_CASE("load_dataset: single human-only record") {
  TempDir dir;
  {
    std::ofstream m(dir.file("d.meta.json"));
    m << R"({"feature_dim":{"human":2,"object":0},"num_classes":{"human":3,"object":0},"folds":{"fold0":["a"]}})";
    std::ofstream f(dir.file("d.jsonl"));
    f << R"({"id":"a","human":{"steps":[{"t":0,"x":[1.0,2.0],"y":1},{"t":1,"x":[0.5,-1.0],"y":null}]},"objects":[]})"
      << "\n";
  }
  Dataset ds = load_dataset(dir.file("d.jsonl"), dir.file("d.meta.json"));
  REQUIRE(ds.records.size() == 1);
  CHECK(ds.records[0].num_objects() == 0);
  CHECK(ds.records[0].length() == 2);
  CHECK(ds.records[0].human[0].observed);
  CHECK(*ds.records[0].human[0].label == 1);
  // "y": null marks an unobserved step
  CHECK_FALSE(ds.records[0].human[1].observed);
  CHECK_FALSE(ds.records[0].human[1].label.has_value());
}

TEST_CASE("load_dataset: malformed line reports its number") {
  TempDir dir;
  {
    std::ofstream m(dir.file("d.meta.json"));
    m << R"({"feature_dim":{"human":1,"object":0},"num_classes":{"human":2,"object":0},"folds":{"fold0":["a"]}})";
    std::ofstream f(dir.file("d.jsonl"));
    f << R"({"id":"a","human":{"steps":[{"t":0,"x":[1.0],"y":0}]},"objects":[]})" << "\n";
    f << "this is not json\n";
  }
  try {
    load_dataset(dir.file("d.jsonl"), dir.file("d.meta.json"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("load_dataset: feature dim mismatch is a schema error") {
  TempDir dir;
  {
    std::ofstream m(dir.file("d.meta.json"));
    m << R"({"feature_dim":{"human":3,"object":0},"num_classes":{"human":2,"object":0},"folds":{"fold0":["a"]}})";
    std::ofstream f(dir.file("d.jsonl"));
    f << R"({"id":"a","human":{"steps":[{"t":0,"x":[1.0],"y":0}]},"objects":[]})" << "\n";
  }
  CHECK_THROWS_AS(load_dataset(dir.file("d.jsonl"), dir.file("d.meta.json")),
                  DataError);
}

TEST_CASE("load_dataset: rejects non-finite features") {
  TempDir dir;
  {
    std::ofstream m(dir.file("d.meta.json"));
    m << R"({"feature_dim":{"human":1,"object":0},"num_classes":{"human":2,"object":0},"folds":{"fold0":["a"]}})";
    std::ofstream f(dir.file("d.jsonl"));
    f << R"({"id":"a","human":{"steps":[{"t":0,"x":[1e999],"y":0}]},"objects":[]})" << "\n";
  }
  CHECK_THROWS_AS(load_dataset(dir.file("d.jsonl"), dir.file("d.meta.json")),
                  DataError);
}

TEST_CASE("write_dataset then load_dataset is the identity") {
  auto [ds, oracle] = synth_generate(coupled_spec(3, 3, 2, 2, 5, 8), 99);
  TempDir dir;
  write_dataset(ds, dir.file("d.jsonl"), dir.file("d.meta.json"));
  Dataset back = load_dataset(dir.file("d.jsonl"), dir.file("d.meta.json"));
  REQUIRE(back.records.size() == ds.records.size());
  CHECK(back.meta.folds == ds.meta.folds);
  CHECK(back.meta.human_feature_dim == ds.meta.human_feature_dim);
  for (size_t r = 0; r < ds.records.size(); ++r) {
    const auto& a = ds.records[r];
    const auto& b = back.records[r];
    CHECK(a.id == b.id);
    REQUIRE(a.length() == b.length());
    REQUIRE(a.num_objects() == b.num_objects());
    for (int t = 0; t < a.length(); ++t) {
      CHECK(a.human[t].x == b.human[t].x);
      CHECK(a.human[t].observed == b.human[t].observed);
      CHECK(a.human[t].label == b.human[t].label);
      for (int o = 0; o < a.num_objects(); ++o) {
        CHECK(a.objects[o][t].x == b.objects[o][t].x);
        CHECK(a.objects[o][t].label == b.objects[o][t].label);
      }
    }
  }
}

TEST_CASE("fold bookkeeping: each record sits in exactly one fold") {
  auto [ds, oracle] = synth_generate(human_only_spec(2, 2, 4, 10), 1);
  size_t total = 0;
  for (const auto& [fold, ids] : ds.meta.folds) total += ids.size();
  CHECK(total == ds.records.size());
  CHECK_THROWS_AS(ds.fold_indices("nope"), DataError);
  auto train = ds.complement_indices("fold0");
  auto held = ds.fold_indices("fold0");
  CHECK(train.size() + held.size() == ds.records.size());
}

TEST_CASE("mask_labels: fraction zero is the identity") {
  auto [ds, oracle] = synth_generate(human_only_spec(2, 2, 6, 5), 2);
  Dataset masked = mask_labels(ds, 0.0, 7);
  for (size_t r = 0; r < ds.records.size(); ++r)
    for (int t = 0; t < ds.records[r].length(); ++t)
      CHECK(masked.records[r].human[t].observed);
}

TEST_CASE("mask_labels: fraction one hides everything but keeps values") {
  auto [ds, oracle] = synth_generate(human_only_spec(2, 2, 6, 5), 3);
  Dataset masked = mask_labels(ds, 1.0, 7);
  for (const auto& rec : masked.records)
    for (const auto& s : rec.human) {
      CHECK_FALSE(s.observed);
      CHECK(s.label.has_value());  // retained for scoring
    }
}

TEST_CASE("mask_labels: masked share concentrates near the fraction") {
  auto [ds, oracle] = synth_generate(human_only_spec(2, 2, 20, 500), 4);
  Dataset masked = mask_labels(ds, 0.25, 11);
  long hidden = 0, total = 0;
  for (const auto& rec : masked.records)
    for (const auto& s : rec.human) {
      ++total;
      hidden += s.observed ? 0 : 1;
    }
  CHECK(total == 10000);
  CHECK(std::abs(double(hidden) / total - 0.25) < 0.02);
}

TEST_CASE("mask_labels: joint across entities, deterministic, features untouched") {
  auto [ds, oracle] = synth_generate(coupled_spec(3, 3, 2, 2, 10, 20), 5);
  Dataset a = mask_labels(ds, 0.5, 13);
  Dataset b = mask_labels(ds, 0.5, 13);
  for (size_t r = 0; r < a.records.size(); ++r) {
    for (int t = 0; t < a.records[r].length(); ++t) {
      // all-or-none across entities
      bool h = a.records[r].human[t].observed;
      for (const auto& obj : a.records[r].objects) CHECK(obj[t].observed == h);
      // deterministic under the seed
      CHECK(b.records[r].human[t].observed == h);
      // features untouched
      CHECK(a.records[r].human[t].x == ds.records[r].human[t].x);
    }
  }
  // never flips unobserved back to observed
  Dataset twice = mask_labels(a, 0.0, 14);
  for (size_t r = 0; r < a.records.size(); ++r)
    for (int t = 0; t < a.records[r].length(); ++t)
      CHECK(twice.records[r].human[t].observed ==
            a.records[r].human[t].observed);
}

TEST_CASE("synth_generate: identity transitions freeze the label") {
  SynthSpec s = human_only_spec(3, 2, 12, 6);
  s.human_trans = Mat::Identity(3, 3);
  auto [ds, oracle] = synth_generate(s, 17);
  for (const auto& rec : ds.records) {
    int first = *rec.human[0].label;
    for (const auto& step : rec.human) CHECK(*step.label == first);
  }
}

TEST_CASE("synth_generate: reproducible under the seed") {
  SynthSpec s = human_only_spec(3, 2, 6, 4);
  auto [a, oa] = synth_generate(s, 21);
  auto [b, ob] = synth_generate(s, 21);
  for (size_t r = 0; r < a.records.size(); ++r)
    for (int t = 0; t < a.records[r].length(); ++t) {
      CHECK(a.records[r].human[t].x == b.records[r].human[t].x);
      CHECK(*a.records[r].human[t].label == *b.records[r].human[t].label);
    }
}

TEST_CASE("synth oracle: Bayes classifier is near-perfect at 4-sigma separation") {
  SynthSpec s = human_only_spec(3, 3, 20, 100);
  auto [ds, oracle] = synth_generate(s, 23);
  long correct = 0, total = 0;
  for (const auto& rec : ds.records)
    for (const auto& step : rec.human) {
      correct += oracle.bayes_human(step.x) == *step.label ? 1 : 0;
      ++total;
    }
  CHECK(double(correct) / total >= 0.99);
}

TEST_CASE("synth_generate: empirical transition counts match the chain") {
  SynthSpec s = human_only_spec(2, 2, 21, 500);
  s.human_trans.resize(2, 2);
  s.human_trans << 0.8, 0.2, 0.3, 0.7;
  auto [ds, oracle] = synth_generate(s, 29);
  Mat counts = Mat::Zero(2, 2);
  for (const auto& rec : ds.records)
    for (int t = 0; t + 1 < rec.length(); ++t)
      counts(*rec.human[t].label, *rec.human[t + 1].label) += 1.0;
  for (int i = 0; i < 2; ++i) {
    counts.row(i) /= counts.row(i).sum();
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(counts(i, j) - s.human_trans(i, j)) < 0.02);
  }
}

TEST_CASE("synth_generate: coupled objects follow the human label") {
  auto [ds, oracle] = synth_generate(coupled_spec(3, 3, 2, 2, 10, 50), 31);
  for (const auto& rec : ds.records)
    for (int t = 0; t + 1 < rec.length(); ++t)
      CHECK(*rec.objects[0][t + 1].label == *rec.human[t].label % 3);
}

TEST_CASE("batch_iter: chunking, determinism and coverage") {
  auto [ds, oracle] = synth_generate(human_only_spec(2, 2, 3, 25), 37);
  // merge all folds into one view
  std::vector<std::string> folds;
  for (const auto& [name, ids] : ds.meta.folds) folds.push_back(name);
  auto batches = batch_iter(ds, folds, 10, 5);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 10);
  CHECK(batches[1].size() == 10);
  CHECK(batches[2].size() == 5);

  auto again = batch_iter(ds, folds, 10, 5);
  CHECK(batches == again);

  std::set<int> seen;
  for (const auto& b : batches)
    for (int i : b) CHECK(seen.insert(i).second);
  CHECK(seen.size() == 25);

  CHECK_THROWS_AS(batch_iter(ds, std::string("missing"), 10, 5), DataError);
}

TEST_CASE("normalization: train-fold statistics standardize those folds") {
  auto [ds, oracle] = synth_generate(human_only_spec(3, 2, 10, 40), 41);
  std::vector<std::string> train{"fold1", "fold2", "fold3"};
  Normalization norm = compute_normalization(ds, train);
  Dataset nds = apply_normalization(ds, norm);
  Vec mean = Vec::Zero(2), var = Vec::Zero(2);
  long n = 0;
  for (const auto& fold : train)
    for (int ri : nds.fold_indices(fold))
      for (const auto& s : nds.records[ri].human) {
        mean += s.x;
        ++n;
      }
  mean /= n;
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-9);
  for (const auto& fold : train)
    for (int ri : nds.fold_indices(fold))
      for (const auto& s : nds.records[ri].human)
        var.array() += (s.x - mean).array().square();
  var /= n;
  CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-9);
  // round trip
  Vec x = ds.records[0].human[0].x;
  Vec xn = nds.records[0].human[0].x;
  CHECK((denormalize(xn, norm.human) - x).norm() < 1e-12);
}

