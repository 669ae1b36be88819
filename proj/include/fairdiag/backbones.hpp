#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairdiag/autodiff.hpp"
#include "fairdiag/dataset.hpp"

namespace fairdiag {

enum class Backbone { Irt, Mirt, Ncd };

Backbone parse_backbone(const std::string& name);
const char* backbone_name(Backbone b);

// Proficiency dimensionality per backbone: 1 for IRT, the latent dim for
// MIRT, the concept count for NCD.
int backbone_dim(Backbone b, int latent_dim, int num_concepts);

// Per-exercise response-model parameters. Positivity is structural:
// discrimination goes through softplus, NCD interaction weights are squared.
struct ExerciseParams {
  Backbone kind = Backbone::Irt;
  int dim = 1;
  Parameter difficulty;  // IRT/MIRT: Mx1; NCD: MxC
  Parameter raw_disc;    // IRT/NCD: Mx1
  Parameter slope;       // MIRT: Mxd
  Parameter net_w1_raw, net_b1, net_w2_raw, net_b2;  // NCD interaction layers

  std::vector<Parameter*> parameters();
};

ExerciseParams init_exercise_params(Backbone kind, int num_exercises, int dim, int ncd_hidden,
                                    uint64_t seed);

// Response logit for a batch of records: row i of `theta` is the proficiency
// of record i's student, exercise_ids[i] its exercise. The correct-response
// probability is sigmoid of the returned node.
Node* cdm_logit(Tape& t, ExerciseParams& phi, Node* theta, const std::vector<int>& exercise_ids,
                const QMatrix* q);

// Single-record probability forwards, evaluated through the same graph code.
double irt_forward(double theta, ExerciseParams& phi, int exercise);
double mirt_forward(const std::vector<double>& theta, ExerciseParams& phi, int exercise);
double ncd_forward(const std::vector<double>& theta, ExerciseParams& phi, int exercise, const QMatrix& q);

}  // namespace fairdiag
