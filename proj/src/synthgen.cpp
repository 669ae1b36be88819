#include "fairdiag/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fairdiag/autodiff.hpp"
#include "fairdiag/csv.hpp"
#include "fairdiag/rng.hpp"
#include "fairdiag/threads.hpp"

namespace fairdiag {

namespace {

constexpr uint64_t kExerciseStream = 0x10000001ull;
constexpr uint64_t kStudentStreamBase = 0x20000000ull;
constexpr uint64_t kResponseStreamBase = 0x40000000ull;

// N(0,1) quartile boundaries; context answers are 4-level discretizations.
constexpr double kQuartiles[3] = {-0.6744897501960817, 0.0, 0.6744897501960817};

int quantize4(double z) {
  int level = 0;
  for (double c : kQuartiles) level += (z > c);
  return level;
}

double clamp_prob(double p) { return std::clamp(p, 0.01, 0.99); }

}  // namespace

SynthResult generate(const SynthConfig& config) {
  if (config.num_students < 1 || config.num_exercises < 1 || config.num_concepts < 1) {
    throw std::invalid_argument("generate: counts must be positive");
  }
  if (config.rho_env < 0.0 || config.rho_env > 1.0) throw std::invalid_argument("generate: rho_env in [0,1]");
  if (config.g_env < 0.0) throw std::invalid_argument("generate: g_env >= 0");
  if (config.delta_direct < 0.0 || config.delta_direct >= 1.0) {
    throw std::invalid_argument("generate: delta_direct in [0,1)");
  }
  const int n = config.num_students;
  const int m = config.num_exercises;
  const int c = config.num_concepts;

  SynthResult r;

  // exercises: 2PL difficulty/discrimination plus 1-3 concepts each
  std::vector<double> diff(m), disc(m);
  r.q.num_exercises = m;
  r.q.num_concepts = c;
  r.q.concepts_of.resize(m);
  for (int k = 0; k < c; ++k) r.q.concept_ids.push_back("k" + std::to_string(k));
  {
    Rng ex = Rng::derive(config.seed, kExerciseStream);
    const int max_concepts = std::min(3, c);
    for (int j = 0; j < m; ++j) {
      diff[j] = ex.normal();
      disc[j] = ex.uniform(0.5, 2.0);
      const int count = 1 + static_cast<int>(ex.below(static_cast<uint64_t>(max_concepts)));
      std::vector<int>& ids = r.q.concepts_of[j];
      while (static_cast<int>(ids.size()) < count) {
        const int k = static_cast<int>(ex.below(static_cast<uint64_t>(c)));
        if (!std::binary_search(ids.begin(), ids.end(), k)) {
          ids.insert(std::upper_bound(ids.begin(), ids.end(), k), k);
        }
      }
    }
  }

  // per-student latent state and context answers, order-independent streams
  r.talent.resize(n);
  r.environment.resize(n);
  r.ability.resize(n);
  r.attrs.sensitive_name = "escs";
  r.attrs.sensitive.resize(n);
  r.attrs.context.assign(config.num_context, std::vector<double>(n, 0.0));
  for (int k = 0; k < config.num_context; ++k) r.attrs.context_names.push_back("ctx" + std::to_string(k));
  parallel_shards(static_cast<size_t>(n), [&](int, size_t b, size_t e) {
    for (size_t i = b; i < e; ++i) {
      Rng rng = Rng::derive(config.seed, kStudentStreamBase + i);
      const double talent = rng.normal();
      const double sensitive = rng.normal();
      const double env_noise = rng.normal();
      const double env = config.rho_env * sensitive +
                         std::sqrt(1.0 - config.rho_env * config.rho_env) * env_noise;
      r.talent[i] = talent;
      r.attrs.sensitive[i] = sensitive;
      r.environment[i] = env;
      r.ability[i] = talent + config.g_env * env;
      for (int k = 0; k < config.num_context; ++k) {
        const double tau = 0.3 * k;
        const double z = (env + tau * rng.normal()) / std::sqrt(1.0 + tau * tau);
        r.attrs.context[k][i] = quantize4(z);
      }
    }
  });

  r.group = assign_groups(r.attrs, config.lower_q, config.upper_q).group;

  // responses: 2PL probability, group-shifted on the logit scale
  r.probabilities = Tensor(n, m);
  r.log.num_students = n;
  r.log.num_exercises = m;
  for (int i = 0; i < n; ++i) r.log.student_ids.push_back("s" + std::to_string(i));
  for (int j = 0; j < m; ++j) r.log.exercise_ids.push_back("q" + std::to_string(j));
  std::vector<uint8_t> responses(static_cast<size_t>(n) * m);
  parallel_shards(static_cast<size_t>(n), [&](int, size_t b, size_t e) {
    for (size_t i = b; i < e; ++i) {
      Rng rng = Rng::derive(config.seed, kResponseStreamBase + i);
      const double shift =
          r.group[i] == Group::Advantaged ? config.delta_direct
          : r.group[i] == Group::Disadvantaged ? -config.delta_direct : 0.0;
      for (int j = 0; j < m; ++j) {
        const double p = clamp_prob(sigmoid(disc[j] * (r.ability[i] - diff[j]) + shift));
        r.probabilities(static_cast<int>(i), j) = p;
        responses[i * m + j] = rng.uniform() < p ? 1 : 0;
      }
    }
  });
  r.log.records.reserve(static_cast<size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) r.log.records.push_back({i, j, responses[static_cast<size_t>(i) * m + j]});
  }
  return r;
}

void write_synth_csvs(const SynthResult& r, const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);

  std::vector<std::vector<std::string>> rows;
  rows.reserve(r.log.records.size());
  for (const auto& rec : r.log.records) {
    rows.push_back({r.log.student_ids[rec.student], r.log.exercise_ids[rec.exercise],
                    std::to_string(rec.correct)});
  }
  write_csv(outdir / "interactions.csv", {"student_id", "exercise_id", "correct"}, rows);

  rows.clear();
  std::vector<std::string> header = {"student_id", r.attrs.sensitive_name};
  for (const auto& name : r.attrs.context_names) header.push_back(name);
  for (int i = 0; i < r.log.num_students; ++i) {
    std::vector<std::string> row = {r.log.student_ids[i], format_double(r.attrs.sensitive[i])};
    for (const auto& ctx : r.attrs.context) row.push_back(format_double(ctx[i]));
    rows.push_back(std::move(row));
  }
  write_csv(outdir / "attributes.csv", header, rows);

  rows.clear();
  for (int j = 0; j < r.q.num_exercises; ++j) {
    std::string ids;
    for (size_t k = 0; k < r.q.concepts_of[j].size(); ++k) {
      if (k) ids += "|";
      ids += r.q.concept_ids[r.q.concepts_of[j][k]];
    }
    rows.push_back({r.log.exercise_ids[j], ids});
  }
  write_csv(outdir / "qmatrix.csv", {"exercise_id", "concept_ids"}, rows);

  rows.clear();
  for (int i = 0; i < r.log.num_students; ++i) {
    rows.push_back({r.log.student_ids[i], format_double(r.talent[i]), format_double(r.environment[i]),
                    format_double(r.ability[i]), group_name(r.group[i])});
  }
  write_csv(outdir / "ground_truth.csv", {"student_id", "talent", "environment", "ability", "group"}, rows);
}

}  // namespace fairdiag
