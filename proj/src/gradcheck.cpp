#include "svrnn/gradcheck.hpp"

#include "svrnn/distributions.hpp"
#include "svrnn/multi_entity.hpp"

namespace svrnn {

namespace {

Vec random_vec(int dim, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v;
}

std::vector<SequenceStep> toy_sequence(int len, int d_x, int classes,
                                       const std::vector<bool>& observed,
                                       Rng& rng) {
  std::vector<SequenceStep> steps;
  for (int t = 0; t < len; ++t) {
    SequenceStep s;
    s.t = t;
    s.x = random_vec(d_x, rng);
    s.label = t % classes;
    s.observed = observed[t];
    steps.push_back(std::move(s));
  }
  return steps;
}

GradCheckCase check(std::string name, const std::function<double(bool)>& loss,
                    std::vector<Parameter*> params, double eps) {
  return {std::move(name), grad_check(loss, params, eps)};
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, double eps) {
  std::vector<GradCheckCase> cases;
  Rng rng(seed);

  {  // linear layer, including the gradient w.r.t. the input
    Parameter w = uniform_init("linear.W", 4, 3, rng);
    Parameter b = uniform_init("linear.b", 4, 1, rng);
    Parameter x("linear.x", random_vec(3, rng));
    auto loss = [&](bool with_grad) {
      Tape t;
      Var y = t.linear(w, b, t.leaf(x));
      Var l = t.dot(y, y);
      if (with_grad) t.backward(l);
      return t.scalar(l);
    };
    cases.push_back(check("linear", loss, {&w, &b, &x}, eps));
  }

  {  // elementwise activations chained through two layers; the relu input is
     // biased away from its kink
    Parameter w0 = uniform_init("act.W0", 5, 3, rng);
    Parameter b0("act.b0", Mat::Constant(5, 1, 0.4));
    Parameter w1 = uniform_init("act.W1", 4, 5, rng);
    Parameter b1 = uniform_init("act.b1", 4, 1, rng);
    Vec x = random_vec(3, rng);
    Vec probe = random_vec(4, rng);
    auto loss = [&](bool with_grad) {
      Tape t;
      Var h = t.relu(t.linear(w0, b0, t.constant(x)));
      Var y = t.sigmoid(t.linear(w1, b1, t.tanh(h)));
      Var l = t.dot(y, t.constant(probe));
      if (with_grad) t.backward(l);
      return t.scalar(l);
    };
    cases.push_back(check("activations", loss, {&w0, &b0, &w1, &b1}, eps));
  }

  {  // softmax and log-softmax heads
    Parameter w = uniform_init("smax.W", 4, 3, rng);
    Parameter b = uniform_init("smax.b", 4, 1, rng);
    Vec x = random_vec(3, rng);
    Vec probe = random_vec(4, rng);
    Vec y = one_hot(2, 4);
    auto loss = [&](bool with_grad) {
      Tape t;
      Var logits = t.linear(w, b, t.constant(x));
      Var l = t.add(t.dot(t.softmax(logits), t.constant(probe)),
                    t.dot(t.log_softmax(logits), t.constant(y)));
      if (with_grad) t.backward(l);
      return t.scalar(l);
    };
    cases.push_back(check("softmax", loss, {&w, &b}, eps));
  }

  {  // LSTM cell unrolled two steps
    LstmCell cell("lstm", 3, 4, rng);
    Vec x0 = random_vec(3, rng), x1 = random_vec(3, rng);
    Vec probe_h = random_vec(4, rng), probe_c = random_vec(4, rng);
    auto loss = [&](bool with_grad) {
      Tape t;
      auto s = cell.start(t, RecurrentState::zero(4));
      s = cell.step(t, s, t.constant(x0));
      s = cell.step(t, s, t.constant(x1));
      Var l = t.add(t.dot(s.hidden, t.constant(probe_h)),
                    t.dot(s.cell, t.constant(probe_c)));
      if (with_grad) t.backward(l);
      return t.scalar(l);
    };
    cases.push_back(check("lstm", loss, cell.params(), eps));
  }

  {  // Gaussian sample, log-density and KL through two parameter heads
    Rng local(mix_seed(seed, 1));
    Mlp q_net("gauss.q", 3, {4}, 4, local);
    Mlp p_net("gauss.p", 3, {4}, 4, local);
    Vec in = random_vec(3, rng);
    Vec x = random_vec(2, rng);
    Vec noise_vec = random_vec(2, rng);
    Vec probe = random_vec(2, rng);
    LossConfig off;
    auto loss = [&](bool with_grad) {
      Tape t;
      Var qraw = q_net.forward(t, t.constant(in), 0.0, false, nullptr);
      Var praw = p_net.forward(t, t.constant(in), 0.0, false, nullptr);
      GaussianVar q{t.slice(qraw, 0, 2), t.slice(qraw, 2, 2)};
      GaussianVar p{t.slice(praw, 0, 2), t.slice(praw, 2, 2)};
      Var z = gauss_sample(t, q, noise_vec);
      Var l = t.add(gauss_log_prob(t, p, x), gauss_kl(t, q, p));
      l = t.add(l, t.dot(z, t.constant(probe)));
      if (with_grad) t.backward(l);
      return t.scalar(l);
    };
    (void)off;
    std::vector<Parameter*> params = q_net.params();
    auto pp = p_net.params();
    params.insert(params.end(), pp.begin(), pp.end());
    cases.push_back(check("gaussian_ops", loss, params, eps));
  }

  {  // relaxed categorical sample
    Parameter w = uniform_init("gumbel.W", 3, 2, rng);
    Parameter b = uniform_init("gumbel.b", 3, 1, rng);
    Vec in = random_vec(2, rng);
    Vec u(3);
    u << 0.31, 0.77, 0.52;
    Vec probe = random_vec(3, rng);
    auto loss = [&](bool with_grad) {
      Tape t;
      CategoricalVar c{t.linear(w, b, t.constant(in))};
      Var s = gumbel_softmax_sample(t, c, 0.7, u);
      Var l = t.dot(s, t.constant(probe));
      if (with_grad) t.backward(l);
      return t.scalar(l);
    };
    cases.push_back(check("gumbel_softmax", loss, {&w, &b}, eps));
  }

  {  // categorical log-prob and KL
    Parameter wq = uniform_init("cat.q.W", 3, 2, rng);
    Parameter bq = uniform_init("cat.q.b", 3, 1, rng);
    Parameter wp = uniform_init("cat.p.W", 3, 2, rng);
    Parameter bp = uniform_init("cat.p.b", 3, 1, rng);
    Vec in = random_vec(2, rng);
    Vec y = one_hot(1, 3);
    auto loss = [&](bool with_grad) {
      Tape t;
      CategoricalVar q{t.linear(wq, bq, t.constant(in))};
      CategoricalVar p{t.linear(wp, bp, t.constant(in))};
      Var l = t.add(cat_log_prob(t, q, y), cat_kl(t, q, p));
      if (with_grad) t.backward(l);
      return t.scalar(l);
    };
    cases.push_back(check("categorical_ops", loss, {&wq, &bq, &wp, &bp}, eps));
  }

  {  // labeled-step bound over a three-step sequence
    Rng local(mix_seed(seed, 2));
    ModelSpec spec;
    spec.feature_dim = 3;
    spec.num_classes = 3;
    spec.latent_dim = 2;
    spec.state_dim = 4;
    spec.hidden_sizes = {4};
    SvrnnModel model(spec, "toy", local);
    Rng seq_rng(mix_seed(seed, 3));
    auto steps = toy_sequence(3, 3, 3, {true, true, true}, seq_rng);
    LossConfig cfg;
    cfg.alpha = 0.7;
    auto loss = [&](bool with_grad) {
      Tape t;
      RngNoise noise(mix_seed(seed, 4));
      auto out = model.sequence_loss(t, steps, noise, cfg);
      if (with_grad) t.backward(out.total);
      return out.total_value;
    };
    cases.push_back(check("labeled_sequence", loss, model.parameters(), eps));
  }

  {  // unlabeled marginalized bound
    Rng local(mix_seed(seed, 5));
    ModelSpec spec;
    spec.feature_dim = 3;
    spec.num_classes = 3;
    spec.latent_dim = 2;
    spec.state_dim = 4;
    spec.hidden_sizes = {4};
    SvrnnModel model(spec, "toy", local);
    Rng seq_rng(mix_seed(seed, 6));
    auto steps = toy_sequence(2, 3, 3, {false, false}, seq_rng);
    LossConfig cfg;
    auto loss = [&](bool with_grad) {
      Tape t;
      RngNoise noise(mix_seed(seed, 7));
      auto out = model.sequence_loss(t, steps, noise, cfg);
      if (with_grad) t.backward(out.total);
      return out.total_value;
    };
    cases.push_back(check("unlabeled_sequence", loss, model.parameters(), eps));
  }

  {  // mixed sequence with dropout active; masks are frozen by the seed
    Rng local(mix_seed(seed, 8));
    ModelSpec spec;
    spec.feature_dim = 3;
    spec.num_classes = 2;
    spec.latent_dim = 2;
    spec.state_dim = 4;
    spec.hidden_sizes = {4};
    SvrnnModel model(spec, "toy", local);
    Rng seq_rng(mix_seed(seed, 9));
    auto steps = toy_sequence(4, 3, 2, {true, false, true, false}, seq_rng);
    LossConfig cfg;
    cfg.alpha = 1.3;
    cfg.dropout = 0.1;
    cfg.training = true;
    auto loss = [&](bool with_grad) {
      Tape t;
      RngNoise noise(mix_seed(seed, 10));
      auto out = model.sequence_loss(t, steps, noise, cfg);
      if (with_grad) t.backward(out.total);
      return out.total_value;
    };
    cases.push_back(check("mixed_sequence_dropout", loss, model.parameters(), eps));
  }

  {  // two-object multi-entity loss with cross-entity conditioning
    Rng local(mix_seed(seed, 11));
    DatasetMeta meta;
    meta.human_feature_dim = 3;
    meta.human_classes = 2;
    meta.object_feature_dim = 2;
    meta.object_classes = 3;
    MeSpecs specs = make_specs(meta, 2, 4, {4}, true);
    MultiEntityModels models = build_models(specs, local);

    Rng seq_rng(mix_seed(seed, 12));
    MultiEntityRecord rec;
    rec.id = "gc";
    for (int t = 0; t < 2; ++t) {
      SequenceStep s;
      s.t = t;
      s.x = random_vec(3, seq_rng);
      s.label = t % 2;
      s.observed = t == 0;
      rec.human.push_back(std::move(s));
    }
    rec.objects.resize(2);
    for (int o = 0; o < 2; ++o)
      for (int t = 0; t < 2; ++t) {
        SequenceStep s;
        s.t = t;
        s.x = random_vec(2, seq_rng);
        s.label = (t + o) % 3;
        s.observed = t == 0;
        rec.objects[o].push_back(std::move(s));
      }
    LossConfig cfg;
    cfg.alpha = 0.9;
    auto loss = [&](bool with_grad) {
      Tape t;
      RngNoise noise(mix_seed(seed, 13));
      auto out = me_sequence_loss(t, models, rec, noise, cfg);
      if (with_grad) t.backward(out.total);
      return out.total_value;
    };
    cases.push_back(check("multi_entity_sequence", loss, models.parameters(), eps));
  }

  return cases;
}

double suite_max_error(const std::vector<GradCheckCase>& cases) {
  double m = 0.0;
  for (const auto& c : cases) m = std::max(m, c.report.max_rel_err);
  return m;
}

}  // namespace svrnn
