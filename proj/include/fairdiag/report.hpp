#pragma once

#include <string>
#include <vector>

#include "fairdiag/causal.hpp"
#include "fairdiag/metrics.hpp"
#include "fairdiag/trainer.hpp"

namespace fairdiag {

// Full evaluation of the theta_d head on the given records (AUC, ACC,
// fairness block, DOA for the NCD backbone).
MetricsReport compute_metrics(PscrfParameters& params, const PreparedData& data,
                              const std::vector<int>& record_indices, bool base_mode);

std::string metrics_to_json(const MetricsReport& rep);
std::string metrics_table(const MetricsReport& rep);

std::string epoch_log_to_jsonl(const std::vector<EpochLog>& log);

std::string effects_to_csv(const EffectReport& rep, const std::vector<std::string>& student_ids,
                           const std::vector<Group>& groups);
std::string effects_summary_json(const EffectReport& rep);

}  // namespace fairdiag
