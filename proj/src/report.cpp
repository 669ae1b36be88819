#include "fairdiag/report.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "fairdiag/csv.hpp"

namespace fairdiag {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json group_json(const GroupCounts& g) {
  ordered_json j;
  j["tp"] = g.tp;
  j["fp"] = g.fp;
  j["tn"] = g.tn;
  j["fn"] = g.fn;
  j["tpr"] = g.tpr();
  j["fnr"] = g.fnr();
  j["fpr"] = g.fpr();
  return j;
}

}  // namespace

MetricsReport compute_metrics(PscrfParameters& params, const PreparedData& data,
                              const std::vector<int>& record_indices, bool base_mode) {
  MetricsReport rep;
  rep.num_records = static_cast<long>(record_indices.size());
  const std::vector<double> preds = predict(params, data, record_indices, base_mode);
  std::vector<int> labels;
  std::vector<Group> groups;
  labels.reserve(record_indices.size());
  for (int ri : record_indices) {
    labels.push_back(data.log.records[ri].correct);
    groups.push_back(data.groups.group[data.log.records[ri].student]);
  }
  rep.auc = auc(preds, labels);
  rep.acc = acc(preds, labels);
  rep.fairness = fairness_report(preds, labels, groups);
  if (params.cfg.backbone == Backbone::Ncd) {
    rep.doa = doa(proficiency_matrix(params, base_mode), data.log, data.q, record_indices);
  }
  return rep;
}

std::string metrics_to_json(const MetricsReport& rep) {
  ordered_json j;
  j["auc"] = rep.auc;
  j["acc"] = rep.acc;
  if (rep.doa.has_value()) {
    j["doa"] = *rep.doa;
  } else {
    j["doa"] = nullptr;
  }
  j["eo"] = rep.fairness.eo;
  j["d_under"] = rep.fairness.d_under;
  j["ir"] = rep.fairness.ir;
  j["threshold"] = rep.fairness.threshold;
  j["num_records"] = rep.num_records;
  ordered_json groups;
  for (int g = 0; g < 3; ++g) {
    groups[group_name(static_cast<Group>(g))] = group_json(rep.fairness.groups[g]);
  }
  j["groups"] = groups;
  return j.dump();
}

std::string metrics_table(const MetricsReport& rep) {
  std::ostringstream os;
  auto line = [&os](const char* name, double v) {
    os << "  " << name;
    for (size_t i = std::strlen(name); i < 10; ++i) os << ' ';
    os << v << "\n";
  };
  os << "metrics (" << rep.num_records << " records, threshold " << rep.fairness.threshold << ")\n";
  line("auc", rep.auc);
  line("acc", rep.acc);
  if (rep.doa.has_value()) line("doa", *rep.doa);
  line("eo", rep.fairness.eo);
  line("d_under", rep.fairness.d_under);
  line("ir", rep.fairness.ir);
  os << "  group          n    tp    fp    tn    fn     tpr     fnr     fpr\n";
  for (int g = 0; g < 3; ++g) {
    const GroupCounts& c = rep.fairness.groups[g];
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %-13s %5ld %5ld %5ld %5ld %5ld  %.4f  %.4f  %.4f\n",
                  group_name(static_cast<Group>(g)), c.total(), c.tp, c.fp, c.tn, c.fn, c.tpr(), c.fnr(),
                  c.fpr());
    os << buf;
  }
  return os.str();
}

std::string epoch_log_to_jsonl(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  for (const EpochLog& e : log) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["loss_total"] = e.loss_total;
    j["loss_ce"] = e.loss_ce;
    j["loss_cls"] = e.loss_cls;
    j["loss_rev"] = e.loss_rev;
    j["loss_cons"] = e.loss_cons;
    j["val_auc"] = e.val_auc;
    if (std::isnan(e.val_eo)) {
      j["val_eo"] = nullptr;
    } else {
      j["val_eo"] = e.val_eo;
    }
    j["cons_skipped_batches"] = e.cons_skipped_batches;
    os << j.dump() << "\n";
  }
  return os.str();
}

std::string effects_to_csv(const EffectReport& rep, const std::vector<std::string>& student_ids,
                           const std::vector<Group>& groups) {
  std::ostringstream os;
  os << "student_id,group,TE_mean,NDE_mean,TIE_mean";
  const bool prob = !rep.prob_te.empty();
  if (prob) os << ",TE_prob,NDE_prob,TIE_prob";
  os << "\n";
  for (size_t i = 0; i < rep.students.size(); ++i) {
    const int s = rep.students[i];
    os << student_ids.at(s) << "," << group_name(groups.at(s)) << "," << format_double(rep.te_mean[i])
       << "," << format_double(rep.nde_mean[i]) << "," << format_double(rep.tie_mean[i]);
    if (prob) {
      os << "," << format_double(rep.prob_te[i]) << "," << format_double(rep.prob_nde[i]) << ","
         << format_double(rep.prob_tie[i]);
    }
    os << "\n";
  }
  return os.str();
}

std::string effects_summary_json(const EffectReport& rep) {
  ordered_json j;
  for (int g = 0; g < 3; ++g) {
    ordered_json gj;
    gj["te_mean"] = rep.group_te[g];
    gj["nde_mean"] = rep.group_nde[g];
    gj["tie_mean"] = rep.group_tie[g];
    j[group_name(static_cast<Group>(g))] = gj;
  }
  return j.dump();
}

}  // namespace fairdiag
