#include "fairdiag/causal.hpp"

#include <cmath>
#include <limits>

namespace fairdiag {

namespace {

Tensor gather_rows(const Tensor& table, const std::vector<int>& rows) {
  Tensor out(static_cast<int>(rows.size()), table.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < table.cols(); ++j) out(static_cast<int>(i), j) = table(rows[i], j);
  }
  return out;
}

// Mean response probability over all exercises for each proficiency row.
std::vector<double> mean_response(PscrfParameters& p, const Tensor& theta, const QMatrix* q) {
  std::vector<double> out(theta.rows(), 0.0);
  for (int e = 0; e < p.num_exercises; ++e) {
    Tape t;
    std::vector<int> ids(theta.rows(), e);
    Node* logit = cdm_logit(t, p.exercises, t.constant(theta), ids, q);
    for (int i = 0; i < theta.rows(); ++i) out[i] += sigmoid(logit->value(i, 0));
  }
  for (double& v : out) v /= p.num_exercises;
  return out;
}

}  // namespace

Tensor theta_under(PscrfParameters& p, const Tensor& u_rows, const Tensor& a_rows) {
  const int n = std::max(u_rows.rows(), a_rows.rows());
  Tape t;
  Node* u = t.constant(u_rows);
  Node* a = t.constant(a_rows);
  Node* ud = t.sigmoid(mlp_apply(t, p.mlp1, a));
  // broadcast a 1-row u against a full ud (or vice versa) before the concat
  if (u->value.rows() == 1 && n > 1) u = t.add(u, t.constant(Tensor(n, u_rows.cols())));
  if (ud->value.rows() == 1 && n > 1) ud = t.add(ud, t.constant(Tensor(n, ud->value.cols())));
  Node* cat = t.concat_cols(u, ud);
  Node* uf = t.sigmoid(mlp_apply(t, p.mlp2, cat));
  Node* alpha = t.sigmoid(t.affine(cat, t.param(p.alpha_gate.w), t.param(p.alpha_gate.b)));
  Node* one = t.constant(Tensor::full(1, 1, 1.0));
  Node* theta = t.sigmoid(t.add(t.mul(t.sub(one, alpha), uf), t.mul(alpha, ud)));
  return theta->value;
}

EffectReport compute_effects(PscrfParameters& p, const std::vector<int>& students,
                             const GroupAssignment* groups, const QMatrix* q, bool probability_scale) {
  EffectReport rep;
  rep.students = students;

  std::vector<int> buckets;
  buckets.reserve(students.size());
  for (int s : students) buckets.push_back(p.sens.bucket.at(s));

  const Tensor u_fact = gather_rows(p.student_emb.value, students);
  const Tensor a_fact = gather_rows(p.attr_emb.value, buckets);
  const Anchors anchors = counterfactual_anchors(p);
  const Tensor a_star = mean_attribute_embedding(p);

  const Tensor th_fact = theta_under(p, u_fact, a_fact);          // theta(u, A)
  const Tensor th_cf_u = theta_under(p, anchors.u_star, a_fact);  // theta(u*, A)
  const Tensor th_cf_all = theta_under(p, anchors.u_star, a_star);  // theta(u*, A*), one row

  const int n = static_cast<int>(students.size());
  const int d = p.dim;
  rep.te = Tensor(n, d);
  rep.nde = Tensor(n, d);
  rep.tie = Tensor(n, d);
  rep.te_mean.resize(n);
  rep.nde_mean.resize(n);
  rep.tie_mean.resize(n);
  for (int i = 0; i < n; ++i) {
    double mt = 0.0, mn = 0.0, mi = 0.0;
    for (int j = 0; j < d; ++j) {
      const double te = th_fact(i, j) - th_cf_all(0, j);
      const double nde = th_cf_u(i, j) - th_cf_all(0, j);
      const double tie = te - nde;
      rep.te(i, j) = te;
      rep.nde(i, j) = nde;
      rep.tie(i, j) = tie;
      mt += te;
      mn += nde;
      mi += tie;
    }
    rep.te_mean[i] = mt / d;
    rep.nde_mean[i] = mn / d;
    rep.tie_mean[i] = mi / d;
  }

  if (groups != nullptr) {
    rep.has_groups = true;
    double sums[3][3] = {};
    int counts[3] = {};
    for (int i = 0; i < n; ++i) {
      const int g = static_cast<int>(groups->group.at(students[i]));
      sums[g][0] += rep.te_mean[i];
      sums[g][1] += rep.nde_mean[i];
      sums[g][2] += rep.tie_mean[i];
      ++counts[g];
    }
    for (int g = 0; g < 3; ++g) {
      const double c = counts[g] > 0 ? counts[g] : 1;
      rep.group_te[g] = counts[g] > 0 ? sums[g][0] / c : std::numeric_limits<double>::quiet_NaN();
      rep.group_nde[g] = counts[g] > 0 ? sums[g][1] / c : std::numeric_limits<double>::quiet_NaN();
      rep.group_tie[g] = counts[g] > 0 ? sums[g][2] / c : std::numeric_limits<double>::quiet_NaN();
    }
  }

  if (probability_scale) {
    const std::vector<double> pf = mean_response(p, th_fact, q);
    const std::vector<double> pu = mean_response(p, th_cf_u, q);
    const std::vector<double> pa = mean_response(p, th_cf_all, q);
    rep.prob_te.resize(n);
    rep.prob_nde.resize(n);
    rep.prob_tie.resize(n);
    for (int i = 0; i < n; ++i) {
      rep.prob_te[i] = pf[i] - pa[0];
      rep.prob_nde[i] = pu[i] - pa[0];
      rep.prob_tie[i] = rep.prob_te[i] - rep.prob_nde[i];
    }
  }
  return rep;
}

}  // namespace fairdiag
