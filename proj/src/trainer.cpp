#include "fairdiag/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fairdiag/errors.hpp"
#include "fairdiag/rng.hpp"

namespace fairdiag {

namespace {

constexpr uint64_t kShuffleStreamBase = 0x5e000000ull;

// theta_d for each listed student (no response head involved).
Tensor student_theta_d(PscrfParameters& p, const std::vector<int>& students, const Anchors& anchors,
                       bool base_mode) {
  Tape t;
  if (base_mode) {
    Node* u = t.lookup(t.param(p.student_emb), students);
    std::vector<int> buckets;
    buckets.reserve(students.size());
    for (int s : students) buckets.push_back(p.sens.bucket.at(s));
    Node* a = t.lookup(t.param(p.attr_emb), buckets);
    Node* ud = t.sigmoid(mlp_apply(t, p.mlp1, a));
    Node* uf = t.sigmoid(mlp_apply(t, p.mlp2, t.concat_cols(u, ud)));
    return t.sigmoid(t.sigmoid(uf))->value;
  }
  FactualNodes fact = forward_factual(t, p, students);
  CounterfactualNodes cf = forward_counterfactual(t, p, fact, anchors);
  return debias(t, fact.theta, cf.theta_star, cf.beta)->value;
}

std::vector<int> all_students(const PscrfParameters& p) {
  std::vector<int> s(p.num_students);
  for (int i = 0; i < p.num_students; ++i) s[i] = i;
  return s;
}

}  // namespace

PreparedData prepare_data(const LoadedDataset& ds, const TrainConfig& cfg) {
  PreparedData out;
  FilterResult filtered = filter_min_records(ds.log, cfg.min_records);
  out.log = std::move(filtered.log);
  out.kept_students = std::move(filtered.kept_students);
  out.attrs = realign_attributes(ds.attrs, out.kept_students);
  out.q = ds.q;
  out.groups = assign_groups(out.attrs, cfg.lower_q, cfg.upper_q);
  out.split = split_records(out.log, cfg.ratios, cfg.seed);
  return out;
}

void AdamState::init(const std::vector<Parameter*>& params) {
  slots.clear();
  slots.reserve(params.size());
  for (Parameter* p : params) {
    slots.push_back({Tensor(p->value.rows(), p->value.cols()), Tensor(p->value.rows(), p->value.cols())});
  }
  step = 0;
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state, double learning_rate) {
  if (state.slots.size() != params.size()) {
    throw std::invalid_argument("adam_step: state initialized for a different parameter set");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    AdamState::Slot& slot = state.slots[pi];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.at(i);
      slot.m.at(i) = state.beta1 * slot.m.at(i) + (1.0 - state.beta1) * g;
      slot.v.at(i) = state.beta2 * slot.v.at(i) + (1.0 - state.beta2) * g * g;
      const double mhat = slot.m.at(i) / bc1;
      const double vhat = slot.v.at(i) / bc2;
      p.value.at(i) -= learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

std::vector<double> predict(PscrfParameters& params, const PreparedData& data,
                            const std::vector<int>& record_indices, bool base_mode) {
  const Anchors anchors = base_mode ? Anchors{Tensor(1, params.dim), Tensor(1, params.dim)}
                                    : counterfactual_anchors(params);
  const Tensor theta_d = student_theta_d(params, all_students(params), anchors, base_mode);
  const QMatrix* q = data.q.empty() ? nullptr : &data.q;

  std::vector<double> preds;
  preds.reserve(record_indices.size());
  const size_t chunk = 4096;
  for (size_t start = 0; start < record_indices.size(); start += chunk) {
    const size_t end = std::min(record_indices.size(), start + chunk);
    Tensor th(static_cast<int>(end - start), params.dim);
    std::vector<int> exercises;
    exercises.reserve(end - start);
    for (size_t i = start; i < end; ++i) {
      const auto& rec = data.log.records[record_indices[i]];
      for (int j = 0; j < params.dim; ++j) th(static_cast<int>(i - start), j) = theta_d(rec.student, j);
      exercises.push_back(rec.exercise);
    }
    Tape t;
    Node* logit = cdm_logit(t, params.exercises, t.constant(std::move(th)), exercises, q);
    for (int i = 0; i < logit->value.rows(); ++i) preds.push_back(sigmoid(logit->value(i, 0)));
  }
  return preds;
}

Tensor proficiency_matrix(PscrfParameters& params, bool base_mode) {
  const Anchors anchors = base_mode ? Anchors{Tensor(1, params.dim), Tensor(1, params.dim)}
                                    : counterfactual_anchors(params);
  return student_theta_d(params, all_students(params), anchors, base_mode);
}

TrainResult train(const PreparedData& data, const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be positive");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

  PscrfParameters params = init_pscrf(cfg.model, data.log, data.attrs, data.q, cfg.seed);
  const std::vector<Parameter*> plist = params.parameters();
  AdamState adam;
  adam.init(plist);

  TrainResult result;
  result.best = params;
  if (cfg.max_epochs == 0) return result;

  const QMatrix* q = data.q.empty() ? nullptr : &data.q;
  std::vector<int> order = data.split.train;
  std::vector<int> val_labels;
  val_labels.reserve(data.split.validation.size());
  std::vector<Group> val_groups;
  for (int ri : data.split.validation) {
    val_labels.push_back(data.log.records[ri].correct);
    val_groups.push_back(data.groups.group[data.log.records[ri].student]);
  }

  double best_auc = -1.0;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const Anchors anchors = cfg.base_mode ? Anchors{Tensor(1, params.dim), Tensor(1, params.dim)}
                                          : counterfactual_anchors(params);
    Rng shuffler = Rng::derive(cfg.seed, kShuffleStreamBase + static_cast<uint64_t>(epoch));
    shuffler.shuffle(order);

    EpochLog ep;
    ep.epoch = epoch;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      BatchInputs batch;
      batch.labels = Tensor(static_cast<int>(end - start), 1);
      for (size_t i = start; i < end; ++i) {
        const auto& rec = data.log.records[order[i]];
        batch.students.push_back(rec.student);
        batch.exercises.push_back(rec.exercise);
        batch.labels(static_cast<int>(i - start), 0) = rec.correct;
        batch.groups.push_back(data.groups.group[rec.student]);
      }

      Tape t;
      GraphOptions opt;
      if (cfg.freeze_gates) {
        opt.alpha = GateMode::ForcedZero;
        opt.beta = GateMode::ForcedZero;
      }
      const ForwardBundle fb = cfg.base_mode ? build_base_graph(t, params, batch, q)
                                             : build_training_graph(t, params, batch, anchors, q, opt);
      const double loss = fb.loss_total->value(0, 0);
      if (!std::isfinite(loss)) {
        throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      ep.loss_total += loss;
      ep.loss_ce += fb.loss_ce->value(0, 0);
      if (fb.loss_cls != nullptr) ep.loss_cls += fb.loss_cls->value(0, 0);
      if (fb.loss_rev != nullptr) ep.loss_rev += fb.loss_rev->value(0, 0);
      if (fb.loss_cons != nullptr) ep.loss_cons += fb.loss_cons->value(0, 0);
      if (fb.cons_missing_group) ++ep.cons_skipped_batches;

      for (Parameter* p : plist) p->zero_grad();
      t.backward(fb.loss_total);
      adam_step(plist, adam, cfg.learning_rate);
      ++batches;
    }
    ep.loss_total /= batches;
    ep.loss_ce /= batches;
    ep.loss_cls /= batches;
    ep.loss_rev /= batches;
    ep.loss_cons /= batches;

    const std::vector<double> val_preds =
        predict(params, data, data.split.validation, cfg.base_mode || cfg.freeze_gates);
    ep.val_auc = auc(val_preds, val_labels);
    try {
      ep.val_eo = fairness_report(val_preds, val_labels, val_groups).eo;
    } catch (const NumericError&) {
      ep.val_eo = std::numeric_limits<double>::quiet_NaN();
    }
    result.log.push_back(ep);

    if (ep.val_auc > best_auc) {
      best_auc = ep.val_auc;
      result.best = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

GateStats gate_stats(PscrfParameters& params) {
  Tape t;
  FactualNodes fact = forward_factual(t, params, all_students(params));
  Node* beta = t.sigmoid(t.affine(fact.fusion_in, t.param(params.beta_gate.w), t.param(params.beta_gate.b)));
  auto moments = [&](const Tensor& col, double* mean, double* var) {
    double m = 0.0;
    for (int i = 0; i < col.rows(); ++i) m += col(i, 0);
    m /= col.rows();
    double v = 0.0;
    for (int i = 0; i < col.rows(); ++i) v += (col(i, 0) - m) * (col(i, 0) - m);
    *mean = m;
    *var = v / col.rows();
  };
  GateStats gs;
  moments(fact.alpha->value, &gs.mean_alpha, &gs.var_alpha);
  moments(beta->value, &gs.mean_beta, &gs.var_beta);
  return gs;
}

}  // namespace fairdiag
