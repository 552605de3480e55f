#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace svrnn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// Bad dimensions, bad hyperparameters, malformed configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses or gradients during training or checking.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// All stochastic operations pull their randomness from a NoiseSource in a
// fixed, documented order; nothing draws from a hidden global stream. This
// keeps losses reproducible under a seed and lets tests substitute
// deterministic noise.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual double normal() = 0;
  virtual double uniform() = 0;  // in (0, 1)

  Vec normal_vec(int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = normal();
    return v;
  }
  Vec uniform_vec(int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = uniform();
    return v;
  }
};

class RngNoise final : public NoiseSource {
 public:
  explicit RngNoise(std::uint64_t seed) : rng_(seed) {}
  double normal() override { return normal_(rng_); }
  double uniform() override {
    double u = uniform_(rng_);
    // keep strictly inside (0,1) for log() safety downstream
    return u <= 0.0 ? std::numeric_limits<double>::min() : u;
  }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Degenerate noise: normals are zero, uniforms sit at 1/2. Used for
// deterministic inference paths and linearity tests.
class ZeroNoise final : public NoiseSource {
 public:
  double normal() override { return 0.0; }
  double uniform() override { return 0.5; }
};

inline double logsumexp(const Vec& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

inline Vec softmax_value(const Vec& logits) {
  Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

inline Vec log_softmax_value(const Vec& logits) {
  return logits.array() - logsumexp(logits);
}

inline Vec one_hot(int k, int n) {
  Vec v = Vec::Zero(n);
  v[k] = 1.0;
  return v;
}

inline int argmax(const Vec& v) {
  int i = 0;
  v.maxCoeff(&i);
  return i;
}

// splitmix64 step; used to derive independent sub-seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace svrnn
