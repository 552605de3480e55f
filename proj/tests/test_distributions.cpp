#include "svrnn/distributions.hpp"

#include <doctest.h>

#include <cmath>

#include "helpers.hpp"

using namespace svrnn;
using testutil::randn;

TEST_CASE("gauss_sample: zero noise returns the mean") {
  Rng rng(1);
  GaussianParams p(randn(4, rng), randn(4, rng, 0.5));
  Vec s = gauss_sample(p, Vec::Zero(4));
  CHECK((s - p.mean).norm() == 0.0);
}

TEST_CASE("gauss_sample: unit variance shifts by the noise") {
  Rng rng(2);
  GaussianParams p(randn(3, rng), Vec::Zero(3));
  Vec n = randn(3, rng);
  Vec s = gauss_sample(p, n);
  CHECK((s - p.mean - n).norm() < 1e-15);
}

TEST_CASE("gauss_sample: empirical moments match within 3 standard errors") {
  const int n = 100000;
  GaussianParams p((Vec(2) << 0.7, -1.2).finished(),
                   (Vec(2) << 0.4, -0.8).finished());
  RngNoise noise(77);
  Vec mean = Vec::Zero(2), m2 = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    Vec s = gauss_sample(p, noise.normal_vec(2));
    mean += s;
    m2.array() += s.array().square();
  }
  mean /= n;
  Vec var = m2 / n - mean.cwiseProduct(mean);
  for (int d = 0; d < 2; ++d) {
    double sigma2 = std::exp(p.log_var[d]);
    double se_mean = std::sqrt(sigma2 / n);
    double se_var = sigma2 * std::sqrt(2.0 / (n - 1));
    CHECK(std::abs(mean[d] - p.mean[d]) < 3 * se_mean);
    CHECK(std::abs(var[d] - sigma2) < 3 * se_var);
  }
}

TEST_CASE("gauss_log_prob: standard normal at zero") {
  GaussianParams p(Vec::Zero(1), Vec::Zero(1));
  CHECK(gauss_log_prob(p, Vec::Zero(1)) == doctest::Approx(-0.9189).epsilon(1e-4));
}

TEST_CASE("gauss_log_prob: two-dimensional at the mean") {
  Rng rng(3);
  Vec mean = randn(2, rng);
  GaussianParams p(mean, Vec::Zero(2));
  CHECK(gauss_log_prob(p, mean) == doctest::Approx(-1.8379).epsilon(1e-4));
}

TEST_CASE("gauss_log_prob: density integrates to one on a fine grid") {
  Rng rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    GaussianParams p(randn(1, rng), randn(1, rng, 0.5));
    double sigma = std::exp(0.5 * p.log_var[0]);
    double lo = p.mean[0] - 8 * sigma, hi = p.mean[0] + 8 * sigma;
    const int n = 20000;
    double h = (hi - lo) / n;
    double integral = 0.0;
    for (int i = 0; i <= n; ++i) {
      Vec x(1);
      x[0] = lo + i * h;
      double w = (i == 0 || i == n) ? 0.5 : 1.0;
      integral += w * std::exp(gauss_log_prob(p, x)) * h;
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("gauss_kl: zero between identical distributions") {
  Rng rng(5);
  GaussianParams q(randn(3, rng), randn(3, rng));
  CHECK(gauss_kl(q, q) == 0.0);
  CHECK(std::abs(gauss_kl(q, q)) < 1e-10);
}

TEST_CASE("gauss_kl: non-negative on random pairs up to roundoff") {
  Rng rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    GaussianParams q(randn(3, rng), randn(3, rng));
    GaussianParams p(randn(3, rng), randn(3, rng));
    CHECK(gauss_kl(q, p) >= -1e-12);
  }
}

TEST_CASE("gauss_kl: closed form for unit-variance mean shift") {
  GaussianParams q(Vec::Ones(1), Vec::Zero(1));
  GaussianParams p(Vec::Zero(1), Vec::Zero(1));
  CHECK(gauss_kl(q, p) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gauss_kl: matches a Monte-Carlo estimate within 3 standard errors") {
  Rng rng(6);
  RngNoise noise(123);
  const int n = 100000;
  for (int trial = 0; trial < 3; ++trial) {
    GaussianParams q(randn(2, rng), randn(2, rng, 0.5));
    GaussianParams p(randn(2, rng), randn(2, rng, 0.5));
    double analytic = gauss_kl(q, p);
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      Vec z = gauss_sample(q, noise.normal_vec(2));
      double v = gauss_log_prob(q, z) - gauss_log_prob(p, z);
      sum += v;
      sum2 += v * v;
    }
    double mc = sum / n;
    double se = std::sqrt((sum2 / n - mc * mc) / n);
    CHECK(std::abs(analytic - mc) < 3 * se + 1e-9);
  }
}

TEST_CASE("gumbel_softmax: samples live on the simplex") {
  Rng rng(7);
  RngNoise noise(9);
  CategoricalParams p{randn(5, rng, 2.0)};
  for (double temp : {1.0, 0.5, 0.01}) {
    Vec s = gumbel_softmax_sample(p, temp, noise.uniform_vec(5));
    CHECK(s.minCoeff() >= 0.0);
    CHECK(std::abs(s.sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("gumbel_softmax: tiny temperature saturates to the perturbed argmax") {
  Rng rng(8);
  RngNoise noise(10);
  CategoricalParams p{randn(4, rng)};
  Vec u = noise.uniform_vec(4);
  Vec g = gumbel_from_uniform(u);
  int hard = argmax(p.logits + g);
  Vec s = gumbel_softmax_sample(p, 1e-4, u);
  CHECK((s - one_hot(hard, 4)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("gumbel_softmax: argmax frequencies track the softmax probabilities") {
  Rng rng(9);
  RngNoise noise(11);
  const int n = 100000;
  CategoricalParams p{randn(4, rng)};
  Vec probs = p.probs();
  Vec counts = Vec::Zero(4);
  for (int i = 0; i < n; ++i)
    counts[argmax(gumbel_softmax_sample(p, 0.1, noise.uniform_vec(4)))] += 1.0;
  counts /= n;
  CHECK((counts - probs).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("gumbel_softmax: rejects non-positive temperature") {
  CategoricalParams p{Vec::Zero(2)};
  CHECK_THROWS_AS(gumbel_softmax_sample(p, 0.0, Vec::Constant(2, 0.5)),
                  ConfigError);
}

TEST_CASE("gumbel_softmax: mean sample entropy shrinks with temperature") {
  Rng rng(10);
  RngNoise noise(12);
  CategoricalParams p{randn(4, rng)};
  const int n = 10000;
  auto mean_entropy = [&](double temp) {
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      Vec s = gumbel_softmax_sample(p, temp, noise.uniform_vec(4));
      double h = 0.0;
      for (int k = 0; k < 4; ++k)
        if (s[k] > 0.0) h -= s[k] * std::log(s[k]);
      sum += h;
      sum2 += h * h;
    }
    double mean = sum / n;
    double se = std::sqrt((sum2 / n - mean * mean) / n);
    return std::make_pair(mean, se);
  };
  auto [h1, se1] = mean_entropy(1.0);
  auto [h2, se2] = mean_entropy(0.5);
  auto [h3, se3] = mean_entropy(0.1);
  CHECK(h1 - h2 > 3 * (se1 + se2));
  CHECK(h2 - h3 > 3 * (se2 + se3));
}

TEST_CASE("cat_log_prob: uniform logits score any one-hot at -log n") {
  CategoricalParams p{Vec::Zero(10)};
  CHECK(cat_log_prob(p, one_hot(3, 10)) ==
        doctest::Approx(-std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("cat_log_prob: saturated logits score near zero") {
  Vec logits = Vec::Zero(4);
  logits[2] = 40.0;
  CategoricalParams p{logits};
  CHECK(cat_log_prob(p, one_hot(2, 4)) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("cat_log_prob: linear in a soft label") {
  Rng rng(11);
  CategoricalParams p{randn(4, rng)};
  Vec soft(4);
  soft << 0.1, 0.2, 0.3, 0.4;
  double direct = cat_log_prob(p, soft);
  double by_class = 0.0;
  for (int c = 0; c < 4; ++c)
    by_class += soft[c] * cat_log_prob(p, one_hot(c, 4));
  CHECK(direct == doctest::Approx(by_class).epsilon(1e-12));
}

TEST_CASE("cat_kl: identical uniform distributions have zero divergence") {
  CategoricalParams q{Vec::Zero(5)}, p{Vec::Zero(5)};
  CHECK(cat_kl(q, p) >= 0.0);
  CHECK(cat_kl(q, p) < 1e-10);
}

TEST_CASE("cat_kl: point mass against uniform approaches log n") {
  Vec logits = Vec::Zero(10);
  logits[4] = 60.0;
  CategoricalParams q{logits}, p{Vec::Zero(10)};
  CHECK(cat_kl(q, p) == doctest::Approx(std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("cat_kl: agrees with a brute-force summation") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    CategoricalParams q{randn(6, rng, 2.0)}, p{randn(6, rng, 2.0)};
    // independent route: explicit normalized probabilities
    Vec eq = q.logits.array().exp();
    Vec ep = p.logits.array().exp();
    eq /= eq.sum();
    ep /= ep.sum();
    double brute = 0.0;
    for (int i = 0; i < 6; ++i) brute += eq[i] * std::log(eq[i] / ep[i]);
    CHECK(cat_kl(q, p) == doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("tape distributions match the plain versions and differentiate") {
  Rng rng(13);
  GaussianParams q(randn(3, rng), randn(3, rng, 0.5));
  GaussianParams p(randn(3, rng), randn(3, rng, 0.5));
  Vec x = randn(3, rng);
  Vec noise_vec = randn(3, rng);
  Tape t;
  GaussianVar qv{t.constant(q.mean), t.constant(q.log_var)};
  GaussianVar pv{t.constant(p.mean), t.constant(p.log_var)};
  CHECK(t.value(gauss_sample(t, qv, noise_vec)) == gauss_sample(q, noise_vec));
  CHECK(t.scalar(gauss_log_prob(t, qv, x)) ==
        doctest::Approx(gauss_log_prob(q, x)).epsilon(1e-14));
  CHECK(t.scalar(gauss_kl(t, qv, pv)) ==
        doctest::Approx(gauss_kl(q, p)).epsilon(1e-14));

  CategoricalParams cq{randn(4, rng)}, cp{randn(4, rng)};
  CategoricalVar cqv{t.constant(cq.logits)}, cpv{t.constant(cp.logits)};
  Vec u = (Vec(4) << 0.2, 0.6, 0.4, 0.9).finished();
  CHECK((t.value(gumbel_softmax_sample(t, cqv, 0.5, u)) -
         gumbel_softmax_sample(cq, 0.5, u))
            .norm() < 1e-15);
  CHECK(t.scalar(cat_log_prob(t, cqv, one_hot(1, 4))) ==
        doctest::Approx(cat_log_prob(cq, one_hot(1, 4))).epsilon(1e-14));
  CHECK(t.scalar(cat_kl(t, cqv, cpv)) ==
        doctest::Approx(cat_kl(cq, cp)).epsilon(1e-14));
}
