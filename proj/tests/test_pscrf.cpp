#include <doctest.h>

#include <cmath>

#include "fairdiag/errors.hpp"
#include "fairdiag/pscrf.hpp"
#include "fairdiag/rng.hpp"

using namespace fairdiag;

namespace {

// 4 students / 6 exercises, every pair answered; groups are D/G/G/A under
// quartiles; 2 context attributes with one missing cell.
struct Fixture {
  InteractionLog log;
  AttributeTable attrs;
  QMatrix q;
  GroupAssignment groups;

  explicit Fixture(int num_students = 4) {
    log.num_students = num_students;
    log.num_exercises = 6;
    Rng rng(2024);
    for (int s = 0; s < num_students; ++s) {
      log.student_ids.push_back("s" + std::to_string(s));
      for (int e = 0; e < 6; ++e) {
        log.records.push_back({s, e, rng.uniform() < 0.5 ? 0 : 1});
      }
    }
    for (int e = 0; e < 6; ++e) log.exercise_ids.push_back("q" + std::to_string(e));
    for (int s = 0; s < num_students; ++s) {
      attrs.sensitive.push_back(-1.0 + 0.7 * s + 0.05 * (s % 2));
    }
    attrs.sensitive_name = "escs";
    attrs.context_names = {"c0", "c1"};
    attrs.context.resize(2);
    for (int s = 0; s < num_students; ++s) {
      attrs.context[0].push_back(s % 3);
      attrs.context[1].push_back(s == 1 ? kMissing : (s + 1) % 2);
    }
    if (num_students >= 4) groups = assign_groups(attrs);
  }
};

PscrfConfig small_config(int context_k = 2) {
  PscrfConfig cfg;
  cfg.backbone = Backbone::Mirt;
  cfg.embed_dim = 2;
  cfg.context_k = context_k;
  cfg.sensitive_type = "continuous";
  return cfg;
}

BatchInputs whole_log_batch(const Fixture& fx) {
  BatchInputs batch;
  batch.labels = Tensor(static_cast<int>(fx.log.records.size()), 1);
  for (size_t i = 0; i < fx.log.records.size(); ++i) {
    const auto& r = fx.log.records[i];
    batch.students.push_back(r.student);
    batch.exercises.push_back(r.exercise);
    batch.labels(static_cast<int>(i), 0) = r.correct;
    batch.groups.push_back(fx.groups.group[r.student]);
  }
  return batch;
}

// scalar-loop single-hidden-layer mlp, the reference for loss oracles
std::vector<double> mlp_oracle(const Mlp& m, const std::vector<double>& x) {
  const int hidden = m.b1.value.cols();
  const int out = m.b2.value.cols();
  std::vector<double> h(hidden), y(out);
  for (int j = 0; j < hidden; ++j) {
    double acc = m.b1.value(0, j);
    for (size_t k = 0; k < x.size(); ++k) acc += x[k] * m.w1.value(static_cast<int>(k), j);
    h[j] = std::tanh(acc);
  }
  for (int o = 0; o < out; ++o) {
    double acc = m.b2.value(0, o);
    for (int j = 0; j < hidden; ++j) acc += h[j] * m.w2.value(j, o);
    y[o] = acc;
  }
  return y;
}

std::vector<double> row_of(const Tensor& t, int i) {
  std::vector<double> v(t.cols());
  for (int j = 0; j < t.cols(); ++j) v[j] = t(i, j);
  return v;
}

}  // namespace

TEST_SUITE_BEGIN("pscrf");

TEST_CASE("alpha gate extremes collapse the fusion") {
  Fixture fx;
  PscrfParameters p = init_pscrf(small_config(), fx.log, fx.attrs, fx.q, 5);
  const std::vector<int> students = {0, 1, 2, 3};

  Tape t0;
  FactualNodes at0 = forward_factual(t0, p, students, GateMode::ForcedZero);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < p.dim; ++j) {
      CHECK(at0.theta->value(i, j) == sigmoid(at0.uf->value(i, j)));
    }
  }

  Tape t1;
  FactualNodes at1 = forward_factual(t1, p, students, GateMode::ForcedOne);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < p.dim; ++j) {
      CHECK(at1.theta->value(i, j) == sigmoid(at1.ud->value(i, j)));
    }
  }
}

TEST_CASE("two-student forward matches the frozen golden") {
  Fixture fx(2);
  PscrfParameters p = init_pscrf(small_config(0), fx.log, fx.attrs, fx.q, 99);
  Tape t;
  FactualNodes f = forward_factual(t, p, {0, 1});
  const double golden_ud[2][2] = {{0.4997148793616642, 0.49997042633416738},
                                  {0.50030086255381812, 0.50006865772891573}};
  const double golden_uf[2][2] = {{0.47668545197581152, 0.53774037518544182},
                                  {0.47522418729432986, 0.5377074575689309}};
  const double golden_theta[2][2] = {{0.62013445565403558, 0.62614370947875198},
                                     {0.62006749610619372, 0.62615994534751906}};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      CHECK(f.ud->value(i, j) == doctest::Approx(golden_ud[i][j]).epsilon(1e-12));
      CHECK(f.uf->value(i, j) == doctest::Approx(golden_uf[i][j]).epsilon(1e-12));
      CHECK(f.theta->value(i, j) == doctest::Approx(golden_theta[i][j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("unknown ordinal bucket is rejected") {
  PscrfConfig cfg;
  cfg.sensitive_type = "ordinal";
  const SensitiveEncoding enc = encode_sensitive({1.0, 2.0, 2.0, 3.0}, cfg);
  CHECK(enc.num_buckets() == 3);
  CHECK(enc.bucket_of(2.0) == 1);
  CHECK_THROWS_AS(enc.bucket_of(4.0), DataError);
}

TEST_CASE("anchors of a single-student population are that student") {
  Fixture fx(1);
  PscrfParameters p = init_pscrf(small_config(0), fx.log, fx.attrs, fx.q, 3);
  const Anchors a = counterfactual_anchors(p);
  for (int j = 0; j < p.dim; ++j) CHECK(a.u_star(0, j) == p.student_emb.value(0, j));
}

TEST_CASE("anchors of opposite embeddings cancel") {
  Fixture fx(2);
  PscrfParameters p = init_pscrf(small_config(0), fx.log, fx.attrs, fx.q, 3);
  for (int j = 0; j < p.dim; ++j) {
    p.student_emb.value(0, j) = 0.4 * (j + 1);
    p.student_emb.value(1, j) = -0.4 * (j + 1);
  }
  const Anchors a = counterfactual_anchors(p);
  for (int j = 0; j < p.dim; ++j) CHECK(a.u_star(0, j) == 0.0);
}

TEST_CASE("anchors match a naive summation oracle") {
  Fixture fx;
  PscrfParameters p = init_pscrf(small_config(), fx.log, fx.attrs, fx.q, 7);
  const Anchors a = counterfactual_anchors(p);
  for (int j = 0; j < p.dim; ++j) {
    double sum_u = 0.0, sum_ud = 0.0;
    for (int s = 0; s < p.num_students; ++s) {
      sum_u += p.student_emb.value(s, j);
      std::vector<double> arow = row_of(p.attr_emb.value, p.sens.bucket[s]);
      sum_ud += sigmoid(mlp_oracle(p.mlp1, arow)[j]);
    }
    CHECK(a.u_star(0, j) == doctest::Approx(sum_u / p.num_students).epsilon(1e-12));
    CHECK(a.ud_star(0, j) == doctest::Approx(sum_ud / p.num_students).epsilon(1e-12));
  }
}

TEST_CASE("counterfactual equals factual when the anchors coincide with the student") {
  Fixture fx(1);
  PscrfParameters p = init_pscrf(small_config(0), fx.log, fx.attrs, fx.q, 11);
  Tape t;
  FactualNodes f = forward_factual(t, p, {0});
  Anchors anchors;
  anchors.u_star = f.u->value;
  anchors.ud_star = f.ud->value;
  CounterfactualNodes cf = forward_counterfactual(t, p, f, anchors);
  for (int j = 0; j < p.dim; ++j) CHECK(cf.theta_star->value(0, j) == f.theta->value(0, j));
}

TEST_CASE("with the alpha gate at one the counterfactual collapses onto theta") {
  Fixture fx;
  PscrfParameters p = init_pscrf(small_config(), fx.log, fx.attrs, fx.q, 13);
  Tape t;
  FactualNodes f = forward_factual(t, p, {0, 1, 2, 3}, GateMode::ForcedOne);
  const Anchors anchors = counterfactual_anchors(p);
  CounterfactualNodes cf = forward_counterfactual(t, p, f, anchors);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < p.dim; ++j) {
      CHECK(cf.theta_star->value(i, j) == f.theta->value(i, j));
    }
  }
}

TEST_CASE("the counterfactual diagnosis feature is shared across the batch") {
  Fixture fx;
  PscrfParameters p = init_pscrf(small_config(), fx.log, fx.attrs, fx.q, 17);
  Tape t;
  FactualNodes f = forward_factual(t, p, {0, 1, 2, 3});
  const Anchors anchors = counterfactual_anchors(p);
  CounterfactualNodes cf = forward_counterfactual(t, p, f, anchors);
  CHECK(cf.uf_star->value.rows() == 1);
  std::vector<double> cat;
  for (int j = 0; j < p.dim; ++j) cat.push_back(anchors.u_star(0, j));
  for (int j = 0; j < p.dim; ++j) cat.push_back(anchors.ud_star(0, j));
  const std::vector<double> uf_star = mlp_oracle(p.mlp2, cat);
  for (int j = 0; j < p.dim; ++j) {
    CHECK(cf.uf_star->value(0, j) == doctest::Approx(sigmoid(uf_star[j])).epsilon(1e-12));
  }
}

TEST_CASE("debias formula") {
  Tape t;
  Node* theta = t.constant(Tensor::row({0.8}));
  Node* theta_star = t.constant(Tensor::row({0.6}));

  Node* beta0 = t.constant(Tensor(1, 1));
  CHECK(debias(t, theta, theta_star, beta0)->value(0, 0) == sigmoid(0.8));

  Node* beta1 = t.constant(Tensor::full(1, 1, 1.0));
  Node* same = debias(t, theta, theta, beta1);
  CHECK(same->value(0, 0) == 0.5);

  Node* half = t.constant(Tensor::full(1, 1, 0.5));
  CHECK(debias(t, theta, theta_star, half)->value(0, 0) ==
        doctest::Approx(0.62245933120185459).epsilon(1e-15));
}

TEST_CASE("debias is monotone in theta") {
  Rng rng(23);
  Tape t;
  for (int trial = 0; trial < 50; ++trial) {
    const double theta = rng.uniform();
    const double theta_star = rng.uniform();
    const double beta = rng.uniform();
    Node* a = debias(t, t.constant(Tensor::row({theta})), t.constant(Tensor::row({theta_star})),
                     t.constant(Tensor::full(1, 1, beta)));
    Node* b = debias(t, t.constant(Tensor::row({theta + 0.05})), t.constant(Tensor::row({theta_star})),
                     t.constant(Tensor::full(1, 1, beta)));
    CHECK(b->value(0, 0) >= a->value(0, 0));
  }
}

TEST_CASE("classifier loss is the mean class entropy for uniform heads") {
  Fixture fx;
  PscrfParameters p = init_pscrf(small_config(), fx.log, fx.attrs, fx.q, 29);
  REQUIRE(p.ctx.size() == 2);
  p.cls_trunk.w.value.zero();
  p.cls_trunk.b.value.zero();
  for (Dense& head : p.cls_heads) {
    head.w.value.zero();
    head.b.value.zero();
  }
  Tape t;
  FactualNodes f = forward_factual(t, p, {0, 2, 3});
  Node* loss = loss_cls(t, p, f.uf, {0, 2, 3});
  double expected = 0.0;
  for (const ContextHead& h : p.ctx) expected += std::log(static_cast<double>(h.levels.size()));
  expected /= static_cast<double>(p.ctx.size());
  CHECK(loss->value(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("classifier loss vanishes for confident correct heads") {
  Fixture fx;
  PscrfConfig cfg = small_config();
  cfg.context_k = 1;
  PscrfParameters p = init_pscrf(cfg, fx.log, fx.attrs, fx.q, 31);
  p.cls_trunk.w.value.zero();
  p.cls_trunk.b.value.zero();
  p.cls_heads[0].w.value.zero();
  const int label = p.ctx[0].labels[0];
  for (int c = 0; c < p.cls_heads[0].b.value.cols(); ++c) {
    p.cls_heads[0].b.value(0, c) = (c == label) ? 40.0 : 0.0;
  }
  Tape t;
  FactualNodes f = forward_factual(t, p, {0});
  Node* loss = loss_cls(t, p, f.uf, {0});
  CHECK(loss->value(0, 0) < 1e-12);
}

TEST_CASE("classifier loss matches a scalar-loop oracle") {
  Fixture fx;
  PscrfParameters p = init_pscrf(small_config(), fx.log, fx.attrs, fx.q, 37);
  const std::vector<int> students = {0, 1, 2, 3};
  Tape t;
  FactualNodes f = forward_factual(t, p, students);
  Node* loss = loss_cls(t, p, f.uf, students);

  double expected = 0.0;
  for (size_t k = 0; k < p.ctx.size(); ++k) {
    double head_sum = 0.0;
    int kept = 0;
    for (size_t row = 0; row < students.size(); ++row) {
      const int s = students[row];
      if (p.ctx[k].labels[s] < 0) continue;
      std::vector<double> uf = row_of(f.uf->value, static_cast<int>(row));
      std::vector<double> h(p.cls_trunk.b.value.cols());
      for (int j = 0; j < static_cast<int>(h.size()); ++j) {
        double acc = p.cls_trunk.b.value(0, j);
        for (int i = 0; i < p.dim; ++i) acc += uf[i] * p.cls_trunk.w.value(i, j);
        h[j] = std::tanh(acc);
      }
      const int classes = p.cls_heads[k].b.value.cols();
      std::vector<double> z(classes);
      double zmax = -1e300;
      for (int c = 0; c < classes; ++c) {
        double acc = p.cls_heads[k].b.value(0, c);
        for (int j = 0; j < static_cast<int>(h.size()); ++j) acc += h[j] * p.cls_heads[k].w.value(j, c);
        z[c] = acc;
        zmax = std::max(zmax, acc);
      }
      double lse = 0.0;
      for (double v : z) lse += std::exp(v - zmax);
      lse = zmax + std::log(lse);
      head_sum += lse - z[p.ctx[k].labels[s]];
      ++kept;
    }
    expected += head_sum / kept;
  }
  expected /= static_cast<double>(p.ctx.size());
  CHECK(loss->value(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("classifier loss requires at least one context head") {
  Fixture fx;
  PscrfConfig cfg = small_config();
  cfg.context_k = 0;
  PscrfParameters p = init_pscrf(cfg, fx.log, fx.attrs, fx.q, 41);
  Tape t;
  FactualNodes f = forward_factual(t, p, {0});
  CHECK_THROWS_AS(loss_cls(t, p, f.uf, {0}), std::invalid_argument);
}

TEST_CASE("reverse loss is zero when predictions hit both targets") {
  Fixture fx(1);
  PscrfParameters p = init_pscrf(small_config(0), fx.log, fx.attrs, fx.q, 43);
  REQUIRE_FALSE(p.sens.discrete);
  Tape probe;
  FactualNodes f0 = forward_factual(probe, p, {0});
  const double pred_d = mlp_oracle(p.smlp, row_of(f0.ud->value, 0))[0];
  const double pred_f = mlp_oracle(p.smlp, row_of(f0.uf->value, 0))[0];
  p.sens.raw_value = {pred_d};
  p.sens.mean_value = pred_f;
  Tape t;
  FactualNodes f = forward_factual(t, p, {0});
  Node* loss = loss_rev(t, p, f.ud, f.uf, {0});
  CHECK(loss->value(0, 0) < 1e-24);
}

TEST_CASE("discrete reverse loss with uniform everything is twice the class entropy") {
  PscrfConfig cfg = small_config();
  cfg.sensitive_type = "ordinal";
  Fixture ofx;
  ofx.attrs.sensitive = {1, 2, 2, 3};
  PscrfParameters p = init_pscrf(cfg, ofx.log, ofx.attrs, ofx.q, 47);
  REQUIRE(p.sens.discrete);
  const int classes = p.sens.num_buckets();
  p.smlp.w1.value.zero();
  p.smlp.b1.value.zero();
  p.smlp.w2.value.zero();
  p.smlp.b2.value.zero();
  Tape t;
  FactualNodes f = forward_factual(t, p, {0, 1, 2, 3});
  Node* loss = loss_rev(t, p, f.ud, f.uf, {0, 1, 2, 3});
  CHECK(loss->value(0, 0) == doctest::Approx(2.0 * std::log(classes)).epsilon(1e-12));
}

TEST_CASE("reverse loss matches a two-term hand computation") {
  Fixture fx;
  PscrfParameters p = init_pscrf(small_config(), fx.log, fx.attrs, fx.q, 53);
  const std::vector<int> students = {0, 1, 2, 3};
  Tape t;
  FactualNodes f = forward_factual(t, p, students);
  Node* loss = loss_rev(t, p, f.ud, f.uf, students);
  double term_d = 0.0, term_f = 0.0;
  for (size_t row = 0; row < students.size(); ++row) {
    const int s = students[row];
    const double pd = mlp_oracle(p.smlp, row_of(f.ud->value, static_cast<int>(row)))[0];
    const double pf = mlp_oracle(p.smlp, row_of(f.uf->value, static_cast<int>(row)))[0];
    term_d += (pd - p.sens.raw_value[s]) * (pd - p.sens.raw_value[s]);
    term_f += (pf - p.sens.mean_value) * (pf - p.sens.mean_value);
  }
  CHECK(loss->value(0, 0) == doctest::Approx(term_d / 4 + term_f / 4).epsilon(1e-12));
}

TEST_CASE("constraint loss arithmetic") {
  Tape t;
  const std::vector<Group> groups = {Group::Disadvantaged, Group::Disadvantaged, Group::General,
                                     Group::General,       Group::Advantaged,    Group::Advantaged};
  Tensor ytd(6, 1), yud(6, 1);
  const double td[6] = {0.9, 0.9, 0.8, 0.8, 0.7, 0.7};  // group means 0.9/0.8/0.7
  for (int i = 0; i < 6; ++i) {
    ytd(i, 0) = td[i];
    yud(i, 0) = 0.4;
  }
  ConsLoss cons = loss_cons(t, t.constant(ytd), t.constant(yud), groups);
  CHECK_FALSE(cons.missing_group);
  CHECK(cons.loss->value(0, 0) == doctest::Approx(0.081649658092772603).epsilon(1e-9));

  ConsLoss zero = loss_cons(t, t.constant(ytd), t.constant(ytd), groups);
  CHECK(zero.loss->value(0, 0) == 0.0);

  Tensor flat(6, 1);
  for (int i = 0; i < 6; ++i) flat(i, 0) = 0.5;
  ConsLoss neg = loss_cons(t, t.constant(flat), t.constant(ytd), groups);
  CHECK(neg.loss->value(0, 0) == doctest::Approx(-0.081649658092772603).epsilon(1e-9));
}

TEST_CASE("constraint loss flags a missing group") {
  Tape t;
  const std::vector<Group> groups = {Group::Disadvantaged, Group::General};
  Tensor y(2, 1);
  ConsLoss cons = loss_cons(t, t.constant(y), t.constant(y), groups);
  CHECK(cons.missing_group);
  CHECK(cons.loss->value(0, 0) == 0.0);
}

TEST_CASE("total loss is the weighted sum of its four terms") {
  Fixture fx;
  PscrfParameters p = init_pscrf(small_config(), fx.log, fx.attrs, fx.q, 59);
  const BatchInputs batch = whole_log_batch(fx);
  const Anchors anchors = counterfactual_anchors(p);
  Tape t;
  const ForwardBundle fb = build_training_graph(t, p, batch, anchors, &fx.q);
  const double recomposed = p.cfg.w1 * fb.loss_ce->value(0, 0) + p.cfg.w2 * fb.loss_cls->value(0, 0) +
                            p.cfg.w3 * fb.loss_rev->value(0, 0) + p.cfg.w4 * fb.loss_cons->value(0, 0);
  CHECK(fb.loss_total->value(0, 0) == doctest::Approx(recomposed).epsilon(1e-12));

  PscrfConfig defaults;
  CHECK(defaults.w1 == 1.0);
  CHECK(defaults.w2 == 0.1);
  CHECK(defaults.w3 == 0.5);
  CHECK(defaults.w4 == 1.0);

  PscrfParameters pz = p;
  pz.cfg.w1 = pz.cfg.w2 = pz.cfg.w3 = pz.cfg.w4 = 0.0;
  Tape tz;
  const ForwardBundle fbz = build_training_graph(tz, pz, batch, anchors, &fx.q);
  CHECK(fbz.loss_total->value(0, 0) == 0.0);
}

TEST_CASE("bundle quantities stay inside the open unit interval") {
  Fixture fx;
  PscrfParameters p = init_pscrf(small_config(), fx.log, fx.attrs, fx.q, 61);
  const BatchInputs batch = whole_log_batch(fx);
  const Anchors anchors = counterfactual_anchors(p);
  Tape t;
  const ForwardBundle fb = build_training_graph(t, p, batch, anchors, &fx.q);
  for (const Node* n : {fb.fact.ud, fb.fact.uf, fb.fact.theta, fb.cf.theta_star, fb.theta_d, fb.fact.alpha,
                        fb.cf.beta, fb.y_uf, fb.y_ud, fb.y_theta, fb.y_theta_d}) {
    for (size_t i = 0; i < n->value.size(); ++i) {
      CHECK(n->value.at(i) > 0.0);
      CHECK(n->value.at(i) < 1.0);
    }
  }
}

TEST_CASE("with extras off the theta head reduces to the base response loss") {
  Fixture fx;
  PscrfConfig cfg = small_config();
  cfg.w2 = cfg.w3 = cfg.w4 = 0.0;
  PscrfParameters p = init_pscrf(cfg, fx.log, fx.attrs, fx.q, 67);
  const BatchInputs batch = whole_log_batch(fx);
  const Anchors anchors = counterfactual_anchors(p);

  GraphOptions frozen;
  frozen.alpha = GateMode::ForcedZero;
  frozen.beta = GateMode::ForcedZero;
  Tape t;
  const ForwardBundle fb = build_training_graph(t, p, batch, anchors, &fx.q, frozen);

  Tape tb;
  const ForwardBundle base = build_base_graph(tb, p, batch, &fx.q);
  CHECK(fb.loss_ce->value(0, 0) == base.loss_ce->value(0, 0));
  CHECK(fb.loss_total->value(0, 0) == base.loss_total->value(0, 0));
  for (size_t i = 0; i < fb.y_theta->value.size(); ++i) {
    CHECK(fb.y_theta->value.at(i) == base.y_theta->value.at(i));
    CHECK(fb.y_theta_d->value.at(i) == base.y_theta_d->value.at(i));
  }
}

TEST_CASE("full objective gradient survives a reduced finite-difference probe") {
  Fixture fx;
  PscrfParameters p = init_pscrf(small_config(), fx.log, fx.attrs, fx.q, 71);
  Rng point(99);  // move off the near-symmetric init, where gate gradients vanish
  for (Parameter* pp : p.parameters()) {
    for (size_t i = 0; i < pp->value.size(); ++i) pp->value.at(i) = point.uniform(-0.5, 0.5);
  }
  const BatchInputs batch = whole_log_batch(fx);
  const Anchors anchors = counterfactual_anchors(p);
  auto loss = [&] {
    Tape t;
    const ForwardBundle fb = build_training_graph(t, p, batch, anchors, &fx.q);
    t.backward(fb.loss_total);
    return fb.loss_total->value(0, 0);
  };
  const std::vector<Parameter*> probe = {&p.alpha_gate.w, &p.beta_gate.w, &p.mlp1.w1, &p.smlp.w2,
                                         &p.attr_emb};
  CHECK(grad_check(loss, probe) < 1e-4);
}

TEST_SUITE_END();
