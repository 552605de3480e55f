#pragma once

#include "svrnn/model.hpp"

#include <vector>

namespace testutil {

using svrnn::Mat;
using svrnn::Rng;
using svrnn::Vec;

inline Vec randn(int dim, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v;
}

inline svrnn::ModelSpec toy_spec(int d_x = 2, int n_class = 2, int d_z = 2,
                                 int d_h = 4) {
  svrnn::ModelSpec spec;
  spec.feature_dim = d_x;
  spec.num_classes = n_class;
  spec.latent_dim = d_z;
  spec.state_dim = d_h;
  spec.hidden_sizes = {4};
  return spec;
}

inline std::vector<svrnn::SequenceStep> random_sequence(
    int len, int d_x, int n_class, const std::vector<bool>& observed, Rng& rng) {
  std::vector<svrnn::SequenceStep> steps;
  std::uniform_int_distribution<int> lab(0, n_class - 1);
  for (int t = 0; t < len; ++t) {
    svrnn::SequenceStep s;
    s.t = t;
    s.x = randn(d_x, rng);
    s.label = lab(rng);
    s.observed = observed[t];
    steps.push_back(std::move(s));
  }
  return steps;
}

// Latent-noise draws in the exact order the model consumes them when dropout
// is off: one vector per step.
inline std::vector<Vec> replay_step_noise(std::uint64_t seed, int steps,
                                          int d_z) {
  svrnn::RngNoise noise(seed);
  std::vector<Vec> out;
  for (int i = 0; i < steps; ++i) out.push_back(noise.normal_vec(d_z));
  return out;
}

// Zeroes every parameter of the given networks by name substring.
inline void zero_params_matching(svrnn::SvrnnModel& m, const std::string& what) {
  for (svrnn::Parameter* p : m.parameters())
    if (p->name.find(what) != std::string::npos) p->value.setZero();
}

inline svrnn::Parameter* find_param(std::vector<svrnn::Parameter*> params,
                                    const std::string& name_part) {
  for (svrnn::Parameter* p : params)
    if (p->name.find(name_part) != std::string::npos) return p;
  return nullptr;
}

}  // namespace testutil
