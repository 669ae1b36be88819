#pragma once

#include <array>
#include <optional>
#include <vector>

#include "fairdiag/dataset.hpp"
#include "fairdiag/tensor.hpp"

namespace fairdiag {

// Mann-Whitney AUC with midranks for ties. Throws NumericError when only one
// class is present.
double auc(const std::vector<double>& preds, const std::vector<int>& labels);

// Fraction of records with (pred >= threshold) == label.
double acc(const std::vector<double>& preds, const std::vector<int>& labels, double threshold = 0.5);

// Rank agreement between per-concept proficiency and observed responses:
// over pairs of students answering a concept-covering exercise with differing
// correctness, the share where the higher-proficiency student is the correct
// one. Concepts with no eligible pair are skipped.
double doa(const Tensor& proficiency, const InteractionLog& log, const QMatrix& q,
           const std::vector<int>& record_indices);

struct GroupCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
  long positives() const { return tp + fn; }
  double tpr() const { return static_cast<double>(tp) / (tp + fn); }
  double fnr() const { return static_cast<double>(fn) / (tp + fn); }
  double fpr() const;  // NaN when no negatives
  double precision() const;
  double recall() const { return tpr(); }
};

struct FairnessReport {
  double eo = 0.0;       // population std of the three group TPRs
  double d_under = 0.0;  // FNR(disadvantaged) - FNR(advantaged)
  double ir = 0.0;       // F2 on the disadvantaged group, positive = correct
  double threshold = 0.5;
  std::array<GroupCounts, 3> groups;  // indexed by Group
};

FairnessReport fairness_report(const std::vector<double>& preds, const std::vector<int>& labels,
                               const std::vector<Group>& record_groups, double threshold = 0.5);

struct MetricsReport {
  double auc = 0.0;
  double acc = 0.0;
  std::optional<double> doa;  // NCD backbone only
  FairnessReport fairness;
  long num_records = 0;
};

double population_std(const std::vector<double>& xs);

}  // namespace fairdiag
