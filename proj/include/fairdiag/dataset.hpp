#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fairdiag/tensor.hpp"

namespace fairdiag {

struct InteractionRecord {
  int student;
  int exercise;
  int correct;  // 0 or 1
};

// Response log with dense ids. `student_ids` / `exercise_ids` map a dense
// index back to the original id string.
struct InteractionLog {
  std::vector<InteractionRecord> records;
  int num_students = 0;
  int num_exercises = 0;
  std::vector<std::string> student_ids;
  std::vector<std::string> exercise_ids;

  // Record indices per student, in file order.
  std::vector<std::vector<int>> records_by_student() const;
  std::vector<int> record_counts() const;
};

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

// Per-student sensitive value plus raw context-question answers. Context
// answers are numeric category/ordinal codes; NaN marks a missing cell.
struct AttributeTable {
  std::string sensitive_name;
  std::vector<std::string> context_names;
  std::vector<double> sensitive;               // size N, no missing allowed
  std::vector<std::vector<double>> context;    // context[k][i], NaN = missing

  int num_students() const { return static_cast<int>(sensitive.size()); }
  int num_context() const { return static_cast<int>(context.size()); }
};

struct QMatrix {
  int num_exercises = 0;
  int num_concepts = 0;
  std::vector<std::vector<int>> concepts_of;  // sorted concept ids per exercise
  std::vector<std::string> concept_ids;

  bool empty() const { return num_concepts == 0; }
  // Dense 0/1 row for one exercise.
  std::vector<double> row(int exercise) const;
};

enum class Group : int { Disadvantaged = 0, General = 1, Advantaged = 2 };

const char* group_name(Group g);

struct GroupAssignment {
  std::vector<Group> group;  // per student
  double lower_cut = 0.0;    // highest sensitive value still Disadvantaged
  double upper_cut = 0.0;    // lowest sensitive value already Advantaged

  int count(Group g) const;
};

struct SplitDataset {
  std::vector<int> train;       // record indices into InteractionLog::records
  std::vector<int> validation;
  std::vector<int> test;
  uint64_t seed = 0;
};

struct LoadedDataset {
  InteractionLog log;
  AttributeTable attrs;
  QMatrix q;
};

// CSV schemas: interactions `student_id,exercise_id,correct`; attributes
// `student_id,<sensitive>,<ctx...>` with empty fields as missing; qmatrix
// `exercise_id,concept_ids` with `|`-separated concept ids.
LoadedDataset load_dataset(const std::filesystem::path& interactions_path,
                           const std::filesystem::path& attributes_path,
                           const std::optional<std::filesystem::path>& qmatrix_path = std::nullopt);

struct FilterResult {
  InteractionLog log;
  std::vector<int> kept_students;  // new dense index -> old dense index
};

// Drops students with fewer than min_records responses and re-densifies ids.
// Attribute/group tables must be re-aligned via `kept_students`.
FilterResult filter_min_records(const InteractionLog& log, int min_records = 10);

AttributeTable realign_attributes(const AttributeTable& attrs, const std::vector<int>& kept_students);

// Per-student stratified shuffle split; train receives the rounding
// remainder so every student keeps at least one training record.
SplitDataset split_records(const InteractionLog& log, std::array<double, 3> ratios, uint64_t seed);

// Bottom lower_q quantile by sensitive value -> Disadvantaged, top upper_q ->
// Advantaged, rest General. Ties at a cutpoint go to General.
GroupAssignment assign_groups(const AttributeTable& attrs, double lower_q = 0.25, double upper_q = 0.25);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct ContextSelection {
  int attribute;       // index into AttributeTable::context
  double correlation;  // against the sensitive value
};

// Top-k context attributes by |pearson| against the sensitive value,
// descending; missing cells pairwise-dropped; ties break on lower index.
std::vector<ContextSelection> select_context_attributes(const AttributeTable& attrs, int k);

// Sidecar `original_id,dense_index` map.
void write_id_map(const std::filesystem::path& path, const std::vector<std::string>& original_ids);

}  // namespace fairdiag
