#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fairdiag/dataset.hpp"
#include "fairdiag/tensor.hpp"

namespace fairdiag {

// Generator with two planted causal routes from the sensitive value: an
// indirect one through environment quality into true ability (rho_env,
// g_env) and a direct response-logit shift by group (delta_direct).
struct SynthConfig {
  int num_students = 2000;
  int num_exercises = 100;
  int num_concepts = 10;
  double rho_env = 0.7;       // sensitive -> environment coupling, in [0,1]
  double g_env = 0.5;         // environment -> ability gain, >= 0
  double delta_direct = 0.6;  // per-group response logit shift, in [0,1)
  uint64_t seed = 7;
  int num_context = 5;        // context attributes, increasingly noisy
  double lower_q = 0.25, upper_q = 0.25;
};

struct SynthResult {
  InteractionLog log;  // one record per (student, exercise) pair
  AttributeTable attrs;
  QMatrix q;
  std::vector<double> talent, environment, ability;
  std::vector<Group> group;
  Tensor probabilities;  // N x M pre-sampling response probabilities
};

SynthResult generate(const SynthConfig& config);

// interactions.csv, attributes.csv, qmatrix.csv, ground_truth.csv
void write_synth_csvs(const SynthResult& r, const std::filesystem::path& outdir);

}  // namespace fairdiag
