#include "fairdiag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fairdiag/errors.hpp"
#include "fairdiag/threads.hpp"

namespace fairdiag {

double population_std(const std::vector<double>& xs) {
  bool all_equal = true;
  for (double x : xs) all_equal = all_equal && (x == xs[0]);
  if (all_equal) return 0.0;  // keep the coincident case exact
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / xs.size());
}

double auc(const std::vector<double>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  const size_t n = preds.size();
  long n_pos = 0;
  for (int y : labels) n_pos += (y != 0);
  const long n_neg = static_cast<long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw NumericError("auc: undefined, all labels are " + std::to_string(n_pos == 0 ? 0 : 1));
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return preds[a] < preds[b]; });

  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && preds[order[j]] == preds[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;  // 1-based
    for (size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double acc(const std::vector<double>& preds, const std::vector<int>& labels, double threshold) {
  if (preds.size() != labels.size()) throw std::invalid_argument("acc: size mismatch");
  if (preds.empty()) return 0.0;
  long hit = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    hit += ((preds[i] >= threshold) ? 1 : 0) == labels[i];
  }
  return static_cast<double>(hit) / preds.size();
}

double doa(const Tensor& proficiency, const InteractionLog& log, const QMatrix& q,
           const std::vector<int>& record_indices) {
  if (q.empty()) throw std::invalid_argument("doa: Q-matrix required");
  if (proficiency.cols() != q.num_concepts) {
    throw std::invalid_argument("doa: proficiency has " + std::to_string(proficiency.cols()) +
                                " columns for " + std::to_string(q.num_concepts) + " concepts");
  }
  // response per (exercise -> correct/incorrect student lists)
  std::vector<std::vector<int>> correct(log.num_exercises), incorrect(log.num_exercises);
  for (int ri : record_indices) {
    const auto& r = log.records.at(ri);
    (r.correct ? correct : incorrect)[r.exercise].push_back(r.student);
  }

  std::vector<double> hits(q.num_concepts, 0.0), eligible(q.num_concepts, 0.0);
  parallel_shards(static_cast<size_t>(q.num_concepts), [&](int, size_t kb, size_t ke) {
    for (size_t k = kb; k < ke; ++k) {
      for (int e = 0; e < log.num_exercises; ++e) {
        if (!std::binary_search(q.concepts_of[e].begin(), q.concepts_of[e].end(), static_cast<int>(k))) {
          continue;
        }
        for (int a : correct[e]) {
          const double ta = proficiency(a, static_cast<int>(k));
          for (int b : incorrect[e]) {
            const double tb = proficiency(b, static_cast<int>(k));
            if (ta == tb) continue;
            eligible[k] += 1.0;
            if (ta > tb) hits[k] += 1.0;
          }
        }
      }
    }
  });

  double sum = 0.0;
  int used = 0;
  for (int k = 0; k < q.num_concepts; ++k) {
    if (eligible[k] > 0.0) {
      sum += hits[k] / eligible[k];
      ++used;
    }
  }
  if (used == 0) throw NumericError("doa: no concept has a discriminating pair");
  return sum / used;
}

double GroupCounts::fpr() const {
  const long negatives = fp + tn;
  if (negatives == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(fp) / negatives;
}

double GroupCounts::precision() const {
  const long predicted_pos = tp + fp;
  if (predicted_pos == 0) return 0.0;
  return static_cast<double>(tp) / predicted_pos;
}

FairnessReport fairness_report(const std::vector<double>& preds, const std::vector<int>& labels,
                               const std::vector<Group>& record_groups, double threshold) {
  if (preds.size() != labels.size() || preds.size() != record_groups.size()) {
    throw std::invalid_argument("fairness_report: size mismatch");
  }
  FairnessReport rep;
  rep.threshold = threshold;
  for (size_t i = 0; i < preds.size(); ++i) {
    GroupCounts& g = rep.groups[static_cast<int>(record_groups[i])];
    const bool predicted = preds[i] >= threshold;
    if (labels[i] != 0) {
      predicted ? ++g.tp : ++g.fn;
    } else {
      predicted ? ++g.fp : ++g.tn;
    }
  }
  for (int gi = 0; gi < 3; ++gi) {
    if (rep.groups[gi].positives() == 0) {
      throw NumericError(std::string("fairness_report: group '") + group_name(static_cast<Group>(gi)) +
                         "' has no positive-label record");
    }
  }
  rep.eo = population_std({rep.groups[0].tpr(), rep.groups[1].tpr(), rep.groups[2].tpr()});
  rep.d_under = rep.groups[0].fnr() - rep.groups[2].fnr();
  const GroupCounts& dis = rep.groups[0];
  const double p = dis.precision();
  const double r = dis.recall();
  rep.ir = (p == 0.0 && r == 0.0) ? 0.0 : 5.0 * p * r / (4.0 * p + r);
  return rep;
}

}  // namespace fairdiag
