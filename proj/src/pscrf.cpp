#include "fairdiag/pscrf.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "fairdiag/errors.hpp"
#include "fairdiag/param_init.hpp"

namespace fairdiag {

int SensitiveEncoding::num_buckets() const {
  return discrete ? static_cast<int>(levels.size()) : static_cast<int>(edges.size()) + 1;
}

int SensitiveEncoding::bucket_of(double value) const {
  if (discrete) {
    auto it = std::lower_bound(levels.begin(), levels.end(), value);
    if (it == levels.end() || *it != value) {
      throw DataError("unknown sensitive level " + std::to_string(value));
    }
    return static_cast<int>(it - levels.begin());
  }
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

SensitiveEncoding encode_sensitive(const std::vector<double>& values, const PscrfConfig& cfg) {
  if (values.empty()) throw std::invalid_argument("encode_sensitive: no students");
  SensitiveEncoding enc;
  double mean = 0.0;
  for (double v : values) {
    if (is_missing(v)) throw DataError("encode_sensitive: missing sensitive value");
    mean += v;
  }
  enc.mean_value = mean / values.size();

  std::set<double> distinct(values.begin(), values.end());
  bool integral = std::all_of(values.begin(), values.end(), [](double v) { return v == std::floor(v); });
  if (cfg.sensitive_type == "ordinal" || (cfg.sensitive_type == "auto" && integral && distinct.size() <= 12)) {
    enc.discrete = true;
    enc.levels.assign(distinct.begin(), distinct.end());
  } else {
    enc.discrete = false;
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const int bins = std::max(2, cfg.sensitive_bins);
    const size_t n = sorted.size();
    for (int b = 1; b < bins; ++b) {
      const size_t pos = b * n / bins;
      if (pos > 0 && pos < n) enc.edges.push_back(sorted[pos]);
    }
    enc.edges.erase(std::unique(enc.edges.begin(), enc.edges.end()), enc.edges.end());
  }
  enc.bucket.reserve(values.size());
  for (double v : values) enc.bucket.push_back(enc.bucket_of(v));
  enc.raw_value = values;
  return enc;
}

std::vector<ContextHead> encode_context(const AttributeTable& attrs, int k) {
  std::vector<ContextHead> heads;
  if (k == 0) return heads;
  for (const ContextSelection& sel : select_context_attributes(attrs, k)) {
    ContextHead h;
    h.attribute = sel.attribute;
    h.correlation = sel.correlation;
    std::set<double> distinct;
    for (double v : attrs.context[sel.attribute]) {
      if (!is_missing(v)) distinct.insert(v);
    }
    h.levels.assign(distinct.begin(), distinct.end());
    h.labels.reserve(attrs.num_students());
    for (double v : attrs.context[sel.attribute]) {
      if (is_missing(v)) {
        h.labels.push_back(-1);
      } else {
        h.labels.push_back(
            static_cast<int>(std::lower_bound(h.levels.begin(), h.levels.end(), v) - h.levels.begin()));
      }
    }
    heads.push_back(std::move(h));
  }
  return heads;
}

Node* mlp_apply(Tape& t, Mlp& m, Node* x) {
  Node* h = t.tanh(t.affine(x, t.param(m.w1), t.param(m.b1)));
  return t.affine(h, t.param(m.w2), t.param(m.b2));
}

namespace {

Mlp init_mlp(const std::string& prefix, int in, int hidden, int out, uint64_t seed) {
  Mlp m;
  m.w1 = dense_param(prefix + ".w1", in, in, hidden, seed);
  m.b1 = zeros_param(prefix + ".b1", 1, hidden);
  m.w2 = dense_param(prefix + ".w2", hidden, hidden, out, seed);
  m.b2 = zeros_param(prefix + ".b2", 1, out);
  return m;
}

Dense init_dense(const std::string& prefix, int in, int out, uint64_t seed) {
  Dense d;
  d.w = dense_param(prefix + ".w", in, in, out, seed);
  d.b = zeros_param(prefix + ".b", 1, out);
  return d;
}

}  // namespace

std::vector<Parameter*> PscrfParameters::parameters() {
  std::vector<Parameter*> out = {&student_emb, &attr_emb};
  for (Mlp* m : {&mlp1, &mlp2, &smlp}) {
    for (Parameter* p : m->parameters()) out.push_back(p);
  }
  for (Dense* d : {&alpha_gate, &beta_gate, &cls_trunk}) {
    for (Parameter* p : d->parameters()) out.push_back(p);
  }
  for (Dense& d : cls_heads) {
    for (Parameter* p : d.parameters()) out.push_back(p);
  }
  for (Parameter* p : exercises.parameters()) out.push_back(p);
  return out;
}

PscrfParameters build_pscrf_shell(const PscrfConfig& cfg, int num_students, int num_exercises, int dim,
                                  SensitiveEncoding sens, std::vector<ContextHead> ctx, uint64_t seed) {
  PscrfParameters p;
  p.cfg = cfg;
  p.num_students = num_students;
  p.num_exercises = num_exercises;
  p.dim = dim;
  p.sens = std::move(sens);
  p.ctx = std::move(ctx);

  const int d = p.dim;
  p.student_emb = embedding_param("student_emb", p.num_students, d, seed);
  p.attr_emb = embedding_param("attr_emb", p.sens.num_buckets(), d, seed);
  p.mlp1 = init_mlp("mlp1", d, 2 * d, d, seed);
  p.mlp2 = init_mlp("mlp2", 2 * d, 2 * d, d, seed);
  p.alpha_gate = init_dense("alpha_gate", 2 * d, 1, seed);
  p.beta_gate = init_dense("beta_gate", 2 * d, 1, seed);
  const int smlp_out = p.sens.discrete ? p.sens.num_buckets() : 1;
  p.smlp = init_mlp("smlp", d, 2 * d, smlp_out, seed);
  p.cls_trunk = init_dense("cls_trunk", d, 2 * d, seed);
  for (size_t k = 0; k < p.ctx.size(); ++k) {
    p.cls_heads.push_back(init_dense("cls_head" + std::to_string(k), 2 * d,
                                     static_cast<int>(p.ctx[k].levels.size()), seed));
  }
  p.exercises = init_exercise_params(cfg.backbone, p.num_exercises, d, cfg.ncd_hidden, seed);
  return p;
}

PscrfParameters init_pscrf(const PscrfConfig& cfg, const InteractionLog& log, const AttributeTable& attrs,
                           const QMatrix& q, uint64_t seed) {
  if (attrs.num_students() != log.num_students) {
    throw DataError("init_pscrf: attribute table has " + std::to_string(attrs.num_students()) +
                    " rows for " + std::to_string(log.num_students) + " students");
  }
  const int dim = backbone_dim(cfg.backbone, cfg.embed_dim, q.num_concepts);
  return build_pscrf_shell(cfg, log.num_students, log.num_exercises, dim,
                           encode_sensitive(attrs.sensitive, cfg), encode_context(attrs, cfg.context_k),
                           seed);
}

SensitiveEncoding rebind_sensitive(const SensitiveEncoding& stored, const std::vector<double>& values) {
  SensitiveEncoding enc = stored;
  enc.bucket.clear();
  enc.bucket.reserve(values.size());
  for (double v : values) {
    if (is_missing(v)) throw DataError("rebind_sensitive: missing sensitive value");
    enc.bucket.push_back(enc.bucket_of(v));
  }
  enc.raw_value = values;
  return enc;
}

std::vector<ContextHead> rebind_context(const std::vector<ContextHead>& stored, const AttributeTable& attrs) {
  std::vector<ContextHead> out = stored;
  for (ContextHead& h : out) {
    if (h.attribute >= attrs.num_context()) {
      throw DataError("rebind_context: attribute index " + std::to_string(h.attribute) +
                      " not present in the table");
    }
    h.labels.clear();
    for (double v : attrs.context[h.attribute]) {
      if (is_missing(v)) {
        h.labels.push_back(-1);
        continue;
      }
      auto it = std::lower_bound(h.levels.begin(), h.levels.end(), v);
      h.labels.push_back(it != h.levels.end() && *it == v
                             ? static_cast<int>(it - h.levels.begin())
                             : -1);
    }
  }
  return out;
}

namespace {

Node* gate_node(Tape& t, Dense& gate, Node* fusion_in, GateMode mode, int batch) {
  switch (mode) {
    case GateMode::ForcedZero: return t.constant(Tensor(batch, 1));
    case GateMode::ForcedOne: return t.constant(Tensor::full(batch, 1, 1.0));
    case GateMode::Learned: break;
  }
  return t.sigmoid(t.affine(fusion_in, t.param(gate.w), t.param(gate.b)));
}

// sigma((1 - alpha) * uf + alpha * ud)
Node* fuse(Tape& t, Node* alpha, Node* uf, Node* ud) {
  Node* one = t.constant(Tensor::full(1, 1, 1.0));
  Node* mixed = t.add(t.mul(t.sub(one, alpha), uf), t.mul(alpha, ud));
  return t.sigmoid(mixed);
}

std::vector<int> buckets_for(const PscrfParameters& p, const std::vector<int>& students) {
  std::vector<int> b;
  b.reserve(students.size());
  for (int s : students) b.push_back(p.sens.bucket.at(s));
  return b;
}

}  // namespace

FactualNodes forward_factual(Tape& t, PscrfParameters& p, const std::vector<int>& students,
                             GateMode alpha_mode) {
  FactualNodes f;
  f.u = t.lookup(t.param(p.student_emb), students);
  f.a = t.lookup(t.param(p.attr_emb), buckets_for(p, students));
  f.ud = t.sigmoid(mlp_apply(t, p.mlp1, f.a));
  f.fusion_in = t.concat_cols(f.u, f.ud);
  f.uf = t.sigmoid(mlp_apply(t, p.mlp2, f.fusion_in));
  f.alpha = gate_node(t, p.alpha_gate, f.fusion_in, alpha_mode, static_cast<int>(students.size()));
  f.theta = fuse(t, f.alpha, f.uf, f.ud);
  return f;
}

Anchors counterfactual_anchors(PscrfParameters& p) {
  if (p.num_students == 0) throw std::invalid_argument("counterfactual_anchors: empty population");
  Tape t;
  std::vector<int> all(p.num_students);
  for (int i = 0; i < p.num_students; ++i) all[i] = i;
  Node* u_star = t.col_mean(t.param(p.student_emb));
  Node* a = t.lookup(t.param(p.attr_emb), buckets_for(p, all));
  Node* ud_star = t.col_mean(t.sigmoid(mlp_apply(t, p.mlp1, a)));
  return {u_star->value, ud_star->value};
}

Tensor mean_attribute_embedding(PscrfParameters& p) {
  Tape t;
  std::vector<int> all(p.num_students);
  for (int i = 0; i < p.num_students; ++i) all[i] = i;
  return t.col_mean(t.lookup(t.param(p.attr_emb), buckets_for(p, all)))->value;
}

CounterfactualNodes forward_counterfactual(Tape& t, PscrfParameters& p, const FactualNodes& fact,
                                           const Anchors& anchors, GateMode beta_mode) {
  CounterfactualNodes c;
  Node* cat = t.concat_cols(t.constant(anchors.u_star), t.constant(anchors.ud_star));
  c.uf_star = t.sigmoid(mlp_apply(t, p.mlp2, cat));
  c.theta_star = fuse(t, fact.alpha, c.uf_star, fact.ud);
  c.beta = gate_node(t, p.beta_gate, fact.fusion_in, beta_mode, fact.theta->value.rows());
  return c;
}

Node* debias(Tape& t, Node* theta, Node* theta_star, Node* beta) {
  return t.sigmoid(t.sub(theta, t.mul(beta, theta_star)));
}

Node* loss_cls(Tape& t, PscrfParameters& p, Node* uf, const std::vector<int>& students) {
  if (p.ctx.empty()) {
    throw std::invalid_argument("loss_cls: no context attributes selected (set context_k or disable via w2)");
  }
  Node* trunk = t.tanh(t.affine(uf, t.param(p.cls_trunk.w), t.param(p.cls_trunk.b)));
  Node* sum = nullptr;
  for (size_t k = 0; k < p.ctx.size(); ++k) {
    std::vector<int> labels;
    labels.reserve(students.size());
    for (int s : students) labels.push_back(p.ctx[k].labels.at(s));
    Node* logits = t.affine(trunk, t.param(p.cls_heads[k].w), t.param(p.cls_heads[k].b));
    Node* ce = t.softmax_ce(logits, labels);
    sum = (sum == nullptr) ? ce : t.add(sum, ce);
  }
  return t.scale(sum, 1.0 / static_cast<double>(p.ctx.size()));
}

Node* loss_rev(Tape& t, PscrfParameters& p, Node* ud, Node* uf, const std::vector<int>& students) {
  Node* pred_d = mlp_apply(t, p.smlp, ud);
  Node* pred_f = mlp_apply(t, p.smlp, uf);
  if (p.sens.discrete) {
    std::vector<int> labels = buckets_for(p, students);
    return t.add(t.softmax_ce(pred_d, labels), t.softmax_ce_uniform(pred_f));
  }
  // continuous: regress the raw value; the counterfactual target is the
  // population mean
  Tensor target(static_cast<int>(students.size()), 1);
  for (size_t i = 0; i < students.size(); ++i) {
    // the encoding keeps only bucket ids; recover the raw value from the table
    target(static_cast<int>(i), 0) = p.sens.raw_value.at(students[i]);
  }
  Tensor target_star = Tensor::full(static_cast<int>(students.size()), 1, p.sens.mean_value);
  return t.add(t.mse(pred_d, target), t.mse(pred_f, target_star));
}

ConsLoss loss_cons(Tape& t, Node* y_theta_d, Node* y_ud, const std::vector<Group>& record_groups) {
  std::vector<int> rows[3];
  for (size_t i = 0; i < record_groups.size(); ++i) {
    rows[static_cast<int>(record_groups[i])].push_back(static_cast<int>(i));
  }
  if (rows[0].empty() || rows[1].empty() || rows[2].empty()) {
    return {t.constant(Tensor(1, 1)), true};
  }
  auto spread = [&](Node* preds) {
    std::vector<Node*> means;
    for (const auto& r : rows) means.push_back(t.col_mean(t.lookup(preds, r)));
    return t.pop_std(means);
  };
  return {t.sub(spread(y_theta_d), spread(y_ud)), false};
}

namespace {

// Shared CE-head assembly so the full and base graphs accumulate the four
// head losses in the same order.
void attach_heads(Tape& t, PscrfParameters& p, ForwardBundle& fb, const BatchInputs& batch,
                  const QMatrix* q, Node* theta_d) {
  auto head = [&](Node* proficiency, Node** y_out) {
    Node* logit = cdm_logit(t, p.exercises, proficiency, batch.exercises, q);
    *y_out = t.sigmoid(logit);
    return t.bce_logits(logit, batch.labels);
  };
  Node* ce = head(fb.fact.uf, &fb.y_uf);
  ce = t.add(ce, head(fb.fact.ud, &fb.y_ud));
  ce = t.add(ce, head(fb.fact.theta, &fb.y_theta));
  ce = t.add(ce, head(theta_d, &fb.y_theta_d));
  fb.theta_d = theta_d;
  fb.loss_ce = ce;
}

Node* weighted_total(Tape& t, const PscrfConfig& cfg, ForwardBundle& fb) {
  auto term = [&](Node* loss, double w) { return loss ? t.scale(loss, w) : t.constant(Tensor(1, 1)); };
  Node* total = term(fb.loss_ce, cfg.w1);
  total = t.add(total, term(fb.loss_cls, cfg.w2));
  total = t.add(total, term(fb.loss_rev, cfg.w3));
  total = t.add(total, term(fb.loss_cons, cfg.w4));
  return total;
}

}  // namespace

ForwardBundle build_training_graph(Tape& t, PscrfParameters& p, const BatchInputs& batch,
                                   const Anchors& anchors, const QMatrix* q, const GraphOptions& opt) {
  ForwardBundle fb;
  fb.fact = forward_factual(t, p, batch.students, opt.alpha);
  fb.cf = forward_counterfactual(t, p, fb.fact, anchors, opt.beta);
  Node* theta_d = debias(t, fb.fact.theta, fb.cf.theta_star, fb.cf.beta);
  attach_heads(t, p, fb, batch, q, theta_d);
  if (p.cfg.w2 != 0.0) fb.loss_cls = loss_cls(t, p, fb.fact.uf, batch.students);
  if (p.cfg.w3 != 0.0) fb.loss_rev = loss_rev(t, p, fb.fact.ud, fb.fact.uf, batch.students);
  if (p.cfg.w4 != 0.0) {
    ConsLoss cons = loss_cons(t, fb.y_theta_d, fb.y_ud, batch.groups);
    fb.loss_cons = cons.loss;
    fb.cons_missing_group = cons.missing_group;
  }
  fb.loss_total = weighted_total(t, p.cfg, fb);
  return fb;
}

ForwardBundle build_base_graph(Tape& t, PscrfParameters& p, const BatchInputs& batch, const QMatrix* q) {
  ForwardBundle fb;
  fb.fact.u = t.lookup(t.param(p.student_emb), batch.students);
  fb.fact.a = t.lookup(t.param(p.attr_emb), buckets_for(p, batch.students));
  fb.fact.ud = t.sigmoid(mlp_apply(t, p.mlp1, fb.fact.a));
  fb.fact.fusion_in = t.concat_cols(fb.fact.u, fb.fact.ud);
  fb.fact.uf = t.sigmoid(mlp_apply(t, p.mlp2, fb.fact.fusion_in));
  fb.fact.theta = t.sigmoid(fb.fact.uf);
  Node* theta_d = t.sigmoid(fb.fact.theta);
  attach_heads(t, p, fb, batch, q, theta_d);
  fb.loss_total = weighted_total(t, p.cfg, fb);
  return fb;
}

}  // namespace fairdiag
