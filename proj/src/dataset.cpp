#include "fairdiag/dataset.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "fairdiag/csv.hpp"
#include "fairdiag/errors.hpp"
#include "fairdiag/rng.hpp"

namespace fairdiag {

std::vector<std::vector<int>> InteractionLog::records_by_student() const {
  std::vector<std::vector<int>> by(num_students);
  for (size_t i = 0; i < records.size(); ++i) by[records[i].student].push_back(static_cast<int>(i));
  return by;
}

std::vector<int> InteractionLog::record_counts() const {
  std::vector<int> counts(num_students, 0);
  for (const auto& r : records) ++counts[r.student];
  return counts;
}

std::vector<double> QMatrix::row(int exercise) const {
  std::vector<double> r(num_concepts, 0.0);
  for (int k : concepts_of.at(exercise)) r[k] = 1.0;
  return r;
}

const char* group_name(Group g) {
  switch (g) {
    case Group::Disadvantaged: return "disadvantaged";
    case Group::General: return "general";
    case Group::Advantaged: return "advantaged";
  }
  return "?";
}

int GroupAssignment::count(Group g) const {
  int n = 0;
  for (Group x : group) n += (x == g);
  return n;
}

namespace {

// Assigns dense indices in order of first appearance.
struct DenseIndex {
  std::unordered_map<std::string, int> index;
  std::vector<std::string> originals;

  int get_or_add(const std::string& id) {
    auto [it, added] = index.emplace(id, static_cast<int>(originals.size()));
    if (added) originals.push_back(id);
    return it->second;
  }
  const int* find(const std::string& id) const {
    auto it = index.find(id);
    return it == index.end() ? nullptr : &it->second;
  }
};

void require_header(const CsvFile& f, std::initializer_list<const char*> expected) {
  size_t i = 0;
  for (const char* name : expected) {
    if (i >= f.header.size() || f.header[i] != name) {
      throw DataError(f.path.string() + ": expected header column " + std::to_string(i + 1) + " to be '" +
                      name + "'");
    }
    ++i;
  }
}

}  // namespace

LoadedDataset load_dataset(const std::filesystem::path& interactions_path,
                           const std::filesystem::path& attributes_path,
                           const std::optional<std::filesystem::path>& qmatrix_path) {
  LoadedDataset ds;

  const CsvFile inter = read_csv(interactions_path);
  require_header(inter, {"student_id", "exercise_id", "correct"});
  DenseIndex students, exercises;
  std::unordered_map<int64_t, long> seen;  // (student,exercise) -> first line
  for (const CsvRow& row : inter.rows) {
    if (row.fields[0].empty() || row.fields[1].empty()) {
      throw DataError(interactions_path.string() + ":" + std::to_string(row.line) + ": empty id field");
    }
    const int s = students.get_or_add(row.fields[0]);
    const int e = exercises.get_or_add(row.fields[1]);
    const int correct = parse_binary(inter, row, 2);
    const int64_t key = static_cast<int64_t>(s) * (1 << 30) + e;
    auto [it, added] = seen.emplace(key, row.line);
    if (!added) {
      throw DataError(interactions_path.string() + ": duplicate record for (" + row.fields[0] + ", " +
                      row.fields[1] + ") at lines " + std::to_string(it->second) + " and " +
                      std::to_string(row.line));
    }
    ds.log.records.push_back({s, e, correct});
  }
  ds.log.num_students = static_cast<int>(students.originals.size());
  ds.log.num_exercises = static_cast<int>(exercises.originals.size());
  ds.log.student_ids = students.originals;
  ds.log.exercise_ids = exercises.originals;
  if (ds.log.records.empty()) throw DataError(interactions_path.string() + ": no interaction records");

  const CsvFile attrs = read_csv(attributes_path);
  if (attrs.header.size() < 2 || attrs.header[0] != "student_id") {
    throw DataError(attributes_path.string() + ": expected header 'student_id,<sensitive>,...'");
  }
  ds.attrs.sensitive_name = attrs.header[1];
  ds.attrs.context_names.assign(attrs.header.begin() + 2, attrs.header.end());
  const int n_ctx = static_cast<int>(ds.attrs.context_names.size());
  ds.attrs.sensitive.assign(ds.log.num_students, kMissing);
  ds.attrs.context.assign(n_ctx, std::vector<double>(ds.log.num_students, kMissing));
  std::vector<long> attr_line(ds.log.num_students, 0);
  for (const CsvRow& row : attrs.rows) {
    const int* s = students.find(row.fields[0]);
    if (s == nullptr) {
      throw DataError(attributes_path.string() + ":" + std::to_string(row.line) + ": student '" +
                      row.fields[0] + "' has no interaction records");
    }
    if (attr_line[*s] != 0) {
      throw DataError(attributes_path.string() + ": duplicate attribute row for '" + row.fields[0] +
                      "' at lines " + std::to_string(attr_line[*s]) + " and " + std::to_string(row.line));
    }
    attr_line[*s] = row.line;
    if (row.fields[1].empty()) {
      throw DataError(attributes_path.string() + ":" + std::to_string(row.line) +
                      ": missing sensitive value for '" + row.fields[0] + "'");
    }
    ds.attrs.sensitive[*s] = parse_double(attrs, row, 1);
    for (int k = 0; k < n_ctx; ++k) {
      if (!row.fields[2 + k].empty()) ds.attrs.context[k][*s] = parse_double(attrs, row, 2 + k);
    }
  }
  for (int i = 0; i < ds.log.num_students; ++i) {
    if (attr_line[i] == 0) {
      throw DataError(attributes_path.string() + ": no attribute row for student '" + ds.log.student_ids[i] +
                      "'");
    }
  }

  if (qmatrix_path.has_value()) {
    const CsvFile qf = read_csv(*qmatrix_path);
    require_header(qf, {"exercise_id", "concept_ids"});
    DenseIndex concepts;
    ds.q.concepts_of.assign(ds.log.num_exercises, {});
    std::vector<bool> covered(ds.log.num_exercises, false);
    for (const CsvRow& row : qf.rows) {
      const int* e = exercises.find(row.fields[0]);
      if (e == nullptr) continue;  // exercises absent from the log are irrelevant
      std::vector<int> ids;
      std::stringstream ss(row.fields[1]);
      std::string tok;
      while (std::getline(ss, tok, '|')) {
        if (!tok.empty()) ids.push_back(concepts.get_or_add(tok));
      }
      if (ids.empty()) {
        throw DataError(qmatrix_path->string() + ":" + std::to_string(row.line) + ": exercise '" +
                        row.fields[0] + "' has no concepts");
      }
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      ds.q.concepts_of[*e] = std::move(ids);
      covered[*e] = true;
    }
    for (int e = 0; e < ds.log.num_exercises; ++e) {
      if (!covered[e]) {
        throw DataError(qmatrix_path->string() + ": no concepts for exercise '" + ds.log.exercise_ids[e] +
                        "'");
      }
    }
    ds.q.num_exercises = ds.log.num_exercises;
    ds.q.num_concepts = static_cast<int>(concepts.originals.size());
    ds.q.concept_ids = concepts.originals;
  }

  return ds;
}

FilterResult filter_min_records(const InteractionLog& log, int min_records) {
  if (min_records < 1) throw std::invalid_argument("filter_min_records: min_records must be >= 1");
  const std::vector<int> counts = log.record_counts();
  FilterResult out;
  std::vector<int> remap(log.num_students, -1);
  for (int s = 0; s < log.num_students; ++s) {
    if (counts[s] >= min_records) {
      remap[s] = static_cast<int>(out.kept_students.size());
      out.kept_students.push_back(s);
      out.log.student_ids.push_back(log.student_ids[s]);
    }
  }
  if (out.kept_students.empty()) {
    throw DataError("filter_min_records: no student has at least " + std::to_string(min_records) +
                    " records");
  }
  for (const auto& r : log.records) {
    if (remap[r.student] >= 0) out.log.records.push_back({remap[r.student], r.exercise, r.correct});
  }
  out.log.num_students = static_cast<int>(out.kept_students.size());
  out.log.num_exercises = log.num_exercises;
  out.log.exercise_ids = log.exercise_ids;
  return out;
}

AttributeTable realign_attributes(const AttributeTable& attrs, const std::vector<int>& kept_students) {
  AttributeTable out;
  out.sensitive_name = attrs.sensitive_name;
  out.context_names = attrs.context_names;
  out.sensitive.reserve(kept_students.size());
  for (int old : kept_students) out.sensitive.push_back(attrs.sensitive.at(old));
  out.context.resize(attrs.context.size());
  for (size_t k = 0; k < attrs.context.size(); ++k) {
    out.context[k].reserve(kept_students.size());
    for (int old : kept_students) out.context[k].push_back(attrs.context[k].at(old));
  }
  return out;
}

SplitDataset split_records(const InteractionLog& log, std::array<double, 3> ratios, uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0 || std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split_records: ratios must be positive and sum to 1");
  }
  SplitDataset split;
  split.seed = seed;
  const auto by_student = log.records_by_student();
  for (int s = 0; s < log.num_students; ++s) {
    std::vector<int> recs = by_student[s];
    Rng rng = Rng::derive(seed, static_cast<uint64_t>(s));
    rng.shuffle(recs);
    const int n = static_cast<int>(recs.size());
    const int n_val = static_cast<int>(std::floor(ratios[1] * n));
    const int n_test = static_cast<int>(std::floor(ratios[2] * n));
    const int n_train = n - n_val - n_test;  // remainder goes to train
    for (int i = 0; i < n; ++i) {
      if (i < n_train) {
        split.train.push_back(recs[i]);
      } else if (i < n_train + n_val) {
        split.validation.push_back(recs[i]);
      } else {
        split.test.push_back(recs[i]);
      }
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

GroupAssignment assign_groups(const AttributeTable& attrs, double lower_q, double upper_q) {
  if (lower_q <= 0 || upper_q <= 0 || lower_q + upper_q >= 1.0) {
    throw std::invalid_argument("assign_groups: need 0 < lower_q, upper_q and lower_q + upper_q < 1");
  }
  const int n = attrs.num_students();
  for (double v : attrs.sensitive) {
    if (is_missing(v)) throw DataError("assign_groups: missing sensitive value");
  }
  std::vector<double> sorted = attrs.sensitive;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    throw DataError("assign_groups: sensitive values are constant, no partition possible");
  }
  const int quota_lo = static_cast<int>(std::floor(lower_q * n));
  const int quota_hi = static_cast<int>(std::floor(upper_q * n));

  GroupAssignment ga;
  ga.group.assign(n, Group::General);
  // A student is Disadvantaged only if everyone with a value <= theirs fits
  // in the lower quota; ties spilling over the quota go to General.
  for (int i = 0; i < n; ++i) {
    const double v = attrs.sensitive[i];
    const auto le = std::upper_bound(sorted.begin(), sorted.end(), v) - sorted.begin();
    const auto ge = sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), v);
    if (le <= quota_lo) {
      ga.group[i] = Group::Disadvantaged;
    } else if (ge <= quota_hi) {
      ga.group[i] = Group::Advantaged;
    }
  }
  ga.lower_cut = quota_lo > 0 ? sorted[quota_lo - 1] : sorted.front();
  ga.upper_cut = quota_hi > 0 ? sorted[n - quota_hi] : sorted.back();
  return ga;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  const size_t n = x.size();
  if (n < 2) throw std::invalid_argument("pearson: need at least 2 points");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson: correlation undefined for constant vector");
  return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

std::vector<ContextSelection> select_context_attributes(const AttributeTable& attrs, int k) {
  std::vector<ContextSelection> computable;
  for (int a = 0; a < attrs.num_context(); ++a) {
    std::vector<double> xs, ys;
    for (int i = 0; i < attrs.num_students(); ++i) {
      if (!is_missing(attrs.context[a][i])) {
        xs.push_back(attrs.context[a][i]);
        ys.push_back(attrs.sensitive[i]);
      }
    }
    if (xs.size() < 2) continue;
    bool const_x = std::all_of(xs.begin(), xs.end(), [&](double v) { return v == xs[0]; });
    bool const_y = std::all_of(ys.begin(), ys.end(), [&](double v) { return v == ys[0]; });
    if (const_x || const_y) continue;
    computable.push_back({a, pearson(xs, ys)});
  }
  if (k > static_cast<int>(computable.size())) {
    throw DataError("select_context_attributes: requested " + std::to_string(k) + " attributes but only " +
                    std::to_string(computable.size()) + " have a computable correlation");
  }
  std::stable_sort(computable.begin(), computable.end(), [](const ContextSelection& a, const ContextSelection& b) {
    const double fa = std::abs(a.correlation), fb = std::abs(b.correlation);
    if (fa != fb) return fa > fb;
    return a.attribute < b.attribute;
  });
  computable.resize(k);
  return computable;
}

void write_id_map(const std::filesystem::path& path, const std::vector<std::string>& original_ids) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(original_ids.size());
  for (size_t i = 0; i < original_ids.size(); ++i) {
    rows.push_back({original_ids[i], std::to_string(i)});
  }
  write_csv(path, {"original_id", "dense_index"}, rows);
}

}  // namespace fairdiag
