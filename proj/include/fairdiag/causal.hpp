#pragma once

#include <array>
#include <vector>

#include "fairdiag/dataset.hpp"
#include "fairdiag/pscrf.hpp"

namespace fairdiag {

// Effect contrasts of the proficiency fusion under factual/counterfactual
// substitutions of the student embedding and the sensitive attribute.
struct EffectReport {
  std::vector<int> students;
  Tensor te, nde, tie;  // one row per student, dim columns
  std::vector<double> te_mean, nde_mean, tie_mean;  // per-student means over dims
  std::array<double, 3> group_te{}, group_nde{}, group_tie{};  // by Group, NaN without groups
  bool has_groups = false;
  // probability-scale contrasts through the response head, mean over all
  // exercises; filled only when requested
  std::vector<double> prob_te, prob_nde, prob_tie;
};

// theta evaluated with the given embedding substitutions: u_rows and a_rows
// hold one row per student (a 1-row tensor broadcasts to all students).
Tensor theta_under(PscrfParameters& p, const Tensor& u_rows, const Tensor& a_rows);

// TE = theta(u,A) - theta(u*,A*); NDE = theta(u*,A) - theta(u*,A*);
// TIE = TE - NDE. The counterfactual u* is the population-mean student
// embedding, the counterfactual A the population-mean attribute embedding.
EffectReport compute_effects(PscrfParameters& p, const std::vector<int>& students,
                             const GroupAssignment* groups = nullptr, const QMatrix* q = nullptr,
                             bool probability_scale = false);

}  // namespace fairdiag
