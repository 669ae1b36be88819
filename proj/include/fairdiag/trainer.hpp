#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fairdiag/dataset.hpp"
#include "fairdiag/metrics.hpp"
#include "fairdiag/pscrf.hpp"

namespace fairdiag {

struct TrainConfig {
  PscrfConfig model;
  double learning_rate = 0.001;
  int batch_size = 512;
  int max_epochs = 100;
  int patience = 10;
  uint64_t seed = 0;
  bool base_mode = false;    // plain-CDM variant, no gates / counterfactual / extras
  bool freeze_gates = false; // full graph with alpha and beta pinned to zero

  // data protocol
  int min_records = 10;
  double lower_q = 0.25, upper_q = 0.25;
  std::array<double, 3> ratios{0.7, 0.1, 0.2};
};

struct PreparedData {
  InteractionLog log;  // after the min-record filter
  AttributeTable attrs;
  QMatrix q;
  GroupAssignment groups;
  SplitDataset split;
  std::vector<int> kept_students;  // new dense index -> pre-filter index
};

PreparedData prepare_data(const LoadedDataset& ds, const TrainConfig& cfg);

struct AdamState {
  struct Slot {
    Tensor m, v;
  };
  std::vector<Slot> slots;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

  void init(const std::vector<Parameter*>& params);
};

// Bias-corrected Adam update from the gradients accumulated in `params`.
// Gradients are left untouched; the caller zeroes them between steps.
void adam_step(const std::vector<Parameter*>& params, AdamState& state, double learning_rate);

struct EpochLog {
  int epoch = 0;
  double loss_total = 0.0, loss_ce = 0.0, loss_cls = 0.0, loss_rev = 0.0, loss_cons = 0.0;
  double val_auc = 0.0;
  double val_eo = 0.0;  // NaN when undefined on the validation slice
  int cons_skipped_batches = 0;

  bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
  PscrfParameters best;
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

TrainResult train(const PreparedData& data, const TrainConfig& cfg);

// theta_d-head correct-response probabilities for the given records.
std::vector<double> predict(PscrfParameters& params, const PreparedData& data,
                            const std::vector<int>& record_indices, bool base_mode);

// Per-concept proficiency matrix (theta_d rows for every student); only
// meaningful for the NCD backbone.
Tensor proficiency_matrix(PscrfParameters& params, bool base_mode);

struct GateStats {
  double mean_alpha = 0.0, var_alpha = 0.0;
  double mean_beta = 0.0, var_beta = 0.0;
};

GateStats gate_stats(PscrfParameters& params);

}  // namespace fairdiag
