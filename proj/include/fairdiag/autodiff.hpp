#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fairdiag/tensor.hpp"

namespace fairdiag {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Raw value r with softplus(r) == y, for y > 0.
inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

// Trainable tensor with an accumulated gradient. Gradients are added to by
// Tape::backward and must be zeroed between optimizer steps.
struct Parameter {
  std::string id;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string id_, Tensor value_) : id(std::move(id_)), value(std::move(value_)), grad(value.rows(), value.cols()) {
    value.require_finite(id.c_str());
  }

  void zero_grad() { grad.zero(); }
};

class Tape;

struct Node {
  Tensor value;
  Tensor grad;  // same shape as value; populated during backward
  std::vector<Node*> inputs;
  std::function<void(Node&)> backprop;  // adds into inputs' grad fields
  Parameter* param = nullptr;           // set on parameter leaves
  const Tape* owner = nullptr;
  const char* op = "";
  bool needs_grad = false;
};

// Records one forward evaluation over the fixed primitive set. Nodes are
// appended in execution order, which is also a topological order, so the
// reverse pass is a single backward sweep. One tape per batch; parameters
// outlive tapes and collect gradients across backward calls.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Node* constant(Tensor v);
  Node* param(Parameter& p);

  // Embedding-row lookup: out.row(i) = table.row(rows[i]).
  Node* lookup(Node* table, std::vector<int> rows);

  // x(n,k) * w(k,m) + b(1,m)
  Node* affine(Node* x, Node* w, Node* b);

  Node* sigmoid(Node* x);
  Node* tanh(Node* x);
  Node* softplus(Node* x);

  Node* concat_cols(Node* a, Node* b);

  Node* row_sum(Node* x);   // (n,c) -> (n,1)
  Node* row_mean(Node* x);  // (n,c) -> (n,1)
  Node* col_mean(Node* x);  // (n,c) -> (1,c)

  // Population standard deviation of a set of scalar (1x1) nodes.
  Node* pop_std(const std::vector<Node*>& scalars);

  // Elementwise with broadcasting: shapes must match, or a dimension of one
  // operand must be 1 (row vector, column vector, or scalar broadcast).
  Node* add(Node* a, Node* b);
  Node* sub(Node* a, Node* b);
  Node* mul(Node* a, Node* b);
  Node* scale(Node* x, double c);

  // Mean losses, each producing a scalar (1x1) node. Labels/targets are data,
  // not differentiated through.
  Node* bce_probs(Node* probs, const Tensor& labels);
  Node* bce_logits(Node* logits, const Tensor& labels);
  Node* mse(Node* pred, const Tensor& target);
  // Rows with label -1 are excluded from the average; all rows excluded
  // yields a zero-valued node.
  Node* softmax_ce(Node* logits, const std::vector<int>& labels);
  // Cross-entropy against the uniform distribution over columns.
  Node* softmax_ce_uniform(Node* logits);

  // Reverse pass from a scalar loss node belonging to this tape. Adds
  // dloss/dparam into every reachable Parameter's grad.
  void backward(Node* loss);

  size_t size() const { return nodes_.size(); }

 private:
  Node* make(Tensor value, std::vector<Node*> inputs, const char* op, std::function<void(Node&)> backprop);
  std::vector<std::unique_ptr<Node>> nodes_;
};

// Central-difference check of d(loss)/d(param) for every scalar entry of
// `params`. `loss_and_grad` must zero nothing itself: it builds a fresh graph
// from the parameters' current values, runs backward, and returns the loss.
// Returns the maximum relative error, with max(|analytic|,|numeric|,1e-8) in
// the denominator.
double grad_check(const std::function<double()>& loss_and_grad, const std::vector<Parameter*>& params,
                  double epsilon = 1e-5);

}  // namespace fairdiag
