#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairdiag/autodiff.hpp"
#include "fairdiag/backbones.hpp"
#include "fairdiag/dataset.hpp"

namespace fairdiag {

struct PscrfConfig {
  Backbone backbone = Backbone::Irt;
  int embed_dim = 16;  // latent dim; the effective dim is per-backbone
  int sensitive_bins = 10;
  int context_k = 3;
  int ncd_hidden = 32;
  std::string sensitive_type = "auto";  // auto | continuous | ordinal
  double w1 = 1.0, w2 = 0.1, w3 = 0.5, w4 = 1.0;
};

// How a sensitive value indexes the attribute embedding table: ordinal
// attributes get one bucket per level, continuous ones equal-frequency bins.
struct SensitiveEncoding {
  bool discrete = false;
  std::vector<double> levels;     // ordinal: sorted distinct values
  std::vector<double> edges;      // continuous: interior bin edges
  std::vector<int> bucket;        // per student
  std::vector<double> raw_value;  // per student, regression target when continuous
  double mean_value = 0.0;        // population mean of the raw sensitive value

  int num_buckets() const;
  int bucket_of(double value) const;  // ordinal values must match a level
};

SensitiveEncoding encode_sensitive(const std::vector<double>& values, const PscrfConfig& cfg);

// One selected context attribute with its per-student class labels (-1 for
// missing cells).
struct ContextHead {
  int attribute = -1;
  double correlation = 0.0;
  std::vector<double> levels;
  std::vector<int> labels;
};

std::vector<ContextHead> encode_context(const AttributeTable& attrs, int k);

struct Dense {
  Parameter w, b;
  std::vector<Parameter*> parameters() { return {&w, &b}; }
};

// Single hidden layer, tanh activation.
struct Mlp {
  Parameter w1, b1, w2, b2;
  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

Node* mlp_apply(Tape& t, Mlp& m, Node* x);

// All trainable state of one model instance. Copyable; a copy is a deep
// snapshot (used for best-checkpoint retention).
struct PscrfParameters {
  PscrfConfig cfg;
  int num_students = 0;
  int num_exercises = 0;
  int dim = 0;

  SensitiveEncoding sens;
  std::vector<ContextHead> ctx;

  Parameter student_emb;  // N x d
  Parameter attr_emb;     // buckets x d
  Mlp mlp1;               // sensitive feature generator, d -> d
  Mlp mlp2;               // diagnosis feature extractor, 2d -> d
  Dense alpha_gate;       // 2d -> 1
  Dense beta_gate;        // 2d -> 1
  Mlp smlp;               // shared sensitive-attribute predictor
  Dense cls_trunk;        // d -> 2d (tanh applied in graph)
  std::vector<Dense> cls_heads;
  ExerciseParams exercises;

  std::vector<Parameter*> parameters();  // stable order
};

PscrfParameters init_pscrf(const PscrfConfig& cfg, const InteractionLog& log, const AttributeTable& attrs,
                           const QMatrix& q, uint64_t seed);

// Allocates every parameter with the canonical ids and shapes; used by both
// seeded init and checkpoint loading.
PscrfParameters build_pscrf_shell(const PscrfConfig& cfg, int num_students, int num_exercises, int dim,
                                  SensitiveEncoding sens, std::vector<ContextHead> ctx, uint64_t seed);

// Re-applies a stored encoding to a (possibly different) attribute table:
// keeps levels/edges/mean, recomputes per-student buckets and raw values.
SensitiveEncoding rebind_sensitive(const SensitiveEncoding& stored, const std::vector<double>& values);
std::vector<ContextHead> rebind_context(const std::vector<ContextHead>& stored, const AttributeTable& attrs);

enum class GateMode { Learned, ForcedZero, ForcedOne };

struct FactualNodes {
  Node* u = nullptr;          // batch x d
  Node* a = nullptr;          // batch x d attribute-bucket embeddings
  Node* ud = nullptr;         // U_d
  Node* uf = nullptr;         // U_f
  Node* fusion_in = nullptr;  // concat(u, U_d), input of both gates
  Node* alpha = nullptr;      // batch x 1
  Node* theta = nullptr;      // batch x d
};

FactualNodes forward_factual(Tape& t, PscrfParameters& p, const std::vector<int>& students,
                             GateMode alpha_mode = GateMode::Learned);

// Population-mean counterfactual inputs; recomputed once per epoch with the
// current parameters and treated as constants inside the epoch.
struct Anchors {
  Tensor u_star;   // 1 x d
  Tensor ud_star;  // 1 x d
};

Anchors counterfactual_anchors(PscrfParameters& p);

// Mean attribute-bucket embedding over all students (the counterfactual
// sensitive-attribute input of the effect analysis).
Tensor mean_attribute_embedding(PscrfParameters& p);

struct CounterfactualNodes {
  Node* uf_star = nullptr;    // 1 x d, shared by the whole batch
  Node* theta_star = nullptr; // batch x d
  Node* beta = nullptr;       // batch x 1
};

CounterfactualNodes forward_counterfactual(Tape& t, PscrfParameters& p, const FactualNodes& fact,
                                           const Anchors& anchors, GateMode beta_mode = GateMode::Learned);

Node* debias(Tape& t, Node* theta, Node* theta_star, Node* beta);

Node* loss_cls(Tape& t, PscrfParameters& p, Node* uf, const std::vector<int>& students);

Node* loss_rev(Tape& t, PscrfParameters& p, Node* ud, Node* uf, const std::vector<int>& students);

struct ConsLoss {
  Node* loss = nullptr;
  bool missing_group = false;  // batch lacked a group; loss is a zero constant
};

ConsLoss loss_cons(Tape& t, Node* y_theta_d, Node* y_ud, const std::vector<Group>& record_groups);

struct BatchInputs {
  std::vector<int> students;   // per record
  std::vector<int> exercises;  // per record
  Tensor labels;               // batch x 1, values 0/1
  std::vector<Group> groups;   // per record
};

struct GraphOptions {
  GateMode alpha = GateMode::Learned;
  GateMode beta = GateMode::Learned;
};

struct ForwardBundle {
  FactualNodes fact;
  CounterfactualNodes cf;
  Node* theta_d = nullptr;
  Node* y_uf = nullptr;  // per-head correct-response probabilities
  Node* y_ud = nullptr;
  Node* y_theta = nullptr;
  Node* y_theta_d = nullptr;
  Node* loss_ce = nullptr;   // unweighted terms
  Node* loss_cls = nullptr;
  Node* loss_rev = nullptr;
  Node* loss_cons = nullptr;
  Node* loss_total = nullptr;
  bool cons_missing_group = false;
};

// Full training graph: factual + counterfactual branches, debiased head and
// the four-term objective. Loss terms with zero weight are not built.
ForwardBundle build_training_graph(Tape& t, PscrfParameters& p, const BatchInputs& batch,
                                   const Anchors& anchors, const QMatrix* q, const GraphOptions& opt = {});

// Independent plain-CDM assembly: same encoder, no gates, no counterfactual
// branch, no auxiliary losses. Used by the reduction-to-base check and by
// base-mode training.
ForwardBundle build_base_graph(Tape& t, PscrfParameters& p, const BatchInputs& batch, const QMatrix* q);

}  // namespace fairdiag
