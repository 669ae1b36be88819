#include "fairdiag/backbones.hpp"

#include <stdexcept>

#include "fairdiag/param_init.hpp"

namespace fairdiag {

Backbone parse_backbone(const std::string& name) {
  if (name == "irt") return Backbone::Irt;
  if (name == "mirt") return Backbone::Mirt;
  if (name == "ncd") return Backbone::Ncd;
  throw std::invalid_argument("unknown backbone '" + name + "' (expected irt, mirt or ncd)");
}

const char* backbone_name(Backbone b) {
  switch (b) {
    case Backbone::Irt: return "irt";
    case Backbone::Mirt: return "mirt";
    case Backbone::Ncd: return "ncd";
  }
  return "?";
}

int backbone_dim(Backbone b, int latent_dim, int num_concepts) {
  switch (b) {
    case Backbone::Irt: return 1;
    case Backbone::Mirt: return latent_dim;
    case Backbone::Ncd:
      if (num_concepts <= 0) throw std::invalid_argument("ncd backbone requires a Q-matrix");
      return num_concepts;
  }
  return 1;
}

std::vector<Parameter*> ExerciseParams::parameters() {
  switch (kind) {
    case Backbone::Irt: return {&difficulty, &raw_disc};
    case Backbone::Mirt: return {&difficulty, &slope};
    case Backbone::Ncd: return {&difficulty, &raw_disc, &net_w1_raw, &net_b1, &net_w2_raw, &net_b2};
  }
  return {};
}

ExerciseParams init_exercise_params(Backbone kind, int num_exercises, int dim, int ncd_hidden,
                                    uint64_t seed) {
  ExerciseParams phi;
  phi.kind = kind;
  phi.dim = dim;
  switch (kind) {
    case Backbone::Irt:
      phi.difficulty = embedding_param("exercise.difficulty", num_exercises, 1, seed);
      phi.raw_disc = embedding_param("exercise.raw_disc", num_exercises, 1, seed);
      break;
    case Backbone::Mirt:
      phi.difficulty = embedding_param("exercise.difficulty", num_exercises, 1, seed);
      phi.slope = embedding_param("exercise.slope", num_exercises, dim, seed);
      break;
    case Backbone::Ncd:
      phi.difficulty = embedding_param("exercise.difficulty", num_exercises, dim, seed);
      phi.raw_disc = embedding_param("exercise.raw_disc", num_exercises, 1, seed);
      phi.net_w1_raw = dense_param("exercise.net_w1_raw", dim, dim, ncd_hidden, seed);
      phi.net_b1 = zeros_param("exercise.net_b1", 1, ncd_hidden);
      phi.net_w2_raw = dense_param("exercise.net_w2_raw", ncd_hidden, ncd_hidden, 1, seed);
      phi.net_b2 = zeros_param("exercise.net_b2", 1, 1);
      break;
  }
  return phi;
}

Node* cdm_logit(Tape& t, ExerciseParams& phi, Node* theta, const std::vector<int>& exercise_ids,
                const QMatrix* q) {
  switch (phi.kind) {
    case Backbone::Irt: {
      Node* diff = t.lookup(t.param(phi.difficulty), exercise_ids);
      Node* disc = t.softplus(t.lookup(t.param(phi.raw_disc), exercise_ids));
      return t.mul(disc, t.sub(theta, diff));
    }
    case Backbone::Mirt: {
      Node* a = t.lookup(t.param(phi.slope), exercise_ids);
      Node* b = t.lookup(t.param(phi.difficulty), exercise_ids);
      return t.sub(t.row_sum(t.mul(a, theta)), b);
    }
    case Backbone::Ncd: {
      if (q == nullptr || q->empty()) throw std::invalid_argument("ncd backbone requires a Q-matrix");
      const int batch = static_cast<int>(exercise_ids.size());
      Tensor mask(batch, phi.dim);
      for (int i = 0; i < batch; ++i) {
        const std::vector<double> row = q->row(exercise_ids[i]);
        for (int j = 0; j < phi.dim; ++j) mask(i, j) = row[j];
      }
      Node* hdiff = t.lookup(t.param(phi.difficulty), exercise_ids);
      Node* disc = t.softplus(t.lookup(t.param(phi.raw_disc), exercise_ids));
      Node* x = t.mul(t.mul(t.constant(std::move(mask)), t.sub(theta, hdiff)), disc);
      Node* w1r = t.param(phi.net_w1_raw);
      Node* w2r = t.param(phi.net_w2_raw);
      Node* h = t.sigmoid(t.affine(x, t.mul(w1r, w1r), t.param(phi.net_b1)));
      return t.affine(h, t.mul(w2r, w2r), t.param(phi.net_b2));
    }
  }
  throw std::logic_error("cdm_logit: unreachable");
}

namespace {

double single_probability(ExerciseParams& phi, const std::vector<double>& theta, int exercise,
                          const QMatrix* q) {
  Tape t;
  Tensor th(1, static_cast<int>(theta.size()));
  for (size_t j = 0; j < theta.size(); ++j) th(0, static_cast<int>(j)) = theta[j];
  Node* logit = cdm_logit(t, phi, t.constant(std::move(th)), {exercise}, q);
  return sigmoid(logit->value(0, 0));
}

}  // namespace

double irt_forward(double theta, ExerciseParams& phi, int exercise) {
  return single_probability(phi, {theta}, exercise, nullptr);
}

double mirt_forward(const std::vector<double>& theta, ExerciseParams& phi, int exercise) {
  if (static_cast<int>(theta.size()) != phi.dim) {
    throw std::invalid_argument("mirt_forward: theta dim " + std::to_string(theta.size()) +
                                " does not match latent dim " + std::to_string(phi.dim));
  }
  return single_probability(phi, theta, exercise, nullptr);
}

double ncd_forward(const std::vector<double>& theta, ExerciseParams& phi, int exercise, const QMatrix& q) {
  if (q.concepts_of.at(exercise).empty()) {
    throw std::invalid_argument("ncd_forward: exercise covers no concepts");
  }
  return single_probability(phi, theta, exercise, &q);
}

}  // namespace fairdiag
