#include "fairdiag/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fairdiag {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

bool broadcastable(int a, int b) { return a == b || a == 1 || b == 1; }

// log(1 + exp(x)) without overflow; used by the logit losses.
double log1pexp(double x) { return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x))); }

constexpr double kProbFloor = 1e-12;

}  // namespace

Node* Tape::make(Tensor value, std::vector<Node*> inputs, const char* op, std::function<void(Node&)> backprop) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->grad = Tensor(node->value.rows(), node->value.cols());
  node->inputs = std::move(inputs);
  node->backprop = std::move(backprop);
  node->op = op;
  node->owner = this;
  for (Node* in : node->inputs) {
    if (in->owner != this) throw std::invalid_argument(std::string(op) + ": input node from another tape");
    node->needs_grad = node->needs_grad || in->needs_grad;
  }
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

Node* Tape::constant(Tensor v) {
  return make(std::move(v), {}, "constant", nullptr);
}

Node* Tape::param(Parameter& p) {
  Node* n = make(p.value, {}, "param", nullptr);
  n->param = &p;
  n->needs_grad = true;
  return n;
}

Node* Tape::lookup(Node* table, std::vector<int> rows) {
  const Tensor& t = table->value;
  Tensor out(static_cast<int>(rows.size()), t.cols());
  for (int i = 0; i < out.rows(); ++i) {
    const int r = rows[i];
    if (r < 0 || r >= t.rows()) throw std::invalid_argument("lookup: row index out of range");
    for (int j = 0; j < t.cols(); ++j) out(i, j) = t(r, j);
  }
  return make(std::move(out), {table}, "lookup", [rows = std::move(rows)](Node& n) {
    Tensor& g = n.inputs[0]->grad;
    for (int i = 0; i < n.grad.rows(); ++i) {
      const int r = rows[i];
      for (int j = 0; j < n.grad.cols(); ++j) g(r, j) += n.grad(i, j);
    }
  });
}

Node* Tape::affine(Node* x, Node* w, Node* b) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  const Tensor& bv = b->value;
  if (xv.cols() != wv.rows()) shape_error("affine", xv, wv);
  if (bv.rows() != 1 || bv.cols() != wv.cols()) shape_error("affine", wv, bv);
  Tensor out(xv.rows(), wv.cols());
  for (int i = 0; i < xv.rows(); ++i) {
    for (int j = 0; j < wv.cols(); ++j) {
      double acc = bv(0, j);
      for (int k = 0; k < xv.cols(); ++k) acc += xv(i, k) * wv(k, j);
      out(i, j) = acc;
    }
  }
  return make(std::move(out), {x, w, b}, "affine", [](Node& n) {
    const Tensor& xv = n.inputs[0]->value;
    const Tensor& wv = n.inputs[1]->value;
    Tensor& gx = n.inputs[0]->grad;
    Tensor& gw = n.inputs[1]->grad;
    Tensor& gb = n.inputs[2]->grad;
    const Tensor& g = n.grad;
    // dx = g * w^T, dw = x^T * g, db = column sums of g
    for (int i = 0; i < xv.rows(); ++i) {
      for (int k = 0; k < wv.rows(); ++k) {
        double acc = 0.0;
        for (int j = 0; j < wv.cols(); ++j) acc += g(i, j) * wv(k, j);
        gx(i, k) += acc;
      }
    }
    for (int k = 0; k < wv.rows(); ++k) {
      for (int j = 0; j < wv.cols(); ++j) {
        double acc = 0.0;
        for (int i = 0; i < xv.rows(); ++i) acc += xv(i, k) * g(i, j);
        gw(k, j) += acc;
      }
    }
    for (int j = 0; j < wv.cols(); ++j) {
      double acc = 0.0;
      for (int i = 0; i < xv.rows(); ++i) acc += g(i, j);
      gb(0, j) += acc;
    }
  });
}

Node* Tape::sigmoid(Node* x) {
  Tensor out = x->value;
  for (size_t i = 0; i < out.size(); ++i) out.at(i) = fairdiag::sigmoid(out.at(i));
  return make(std::move(out), {x}, "sigmoid", [](Node& n) {
    Tensor& gx = n.inputs[0]->grad;
    for (size_t i = 0; i < gx.size(); ++i) {
      const double s = n.value.at(i);
      gx.at(i) += n.grad.at(i) * s * (1.0 - s);
    }
  });
}

Node* Tape::tanh(Node* x) {
  Tensor out = x->value;
  for (size_t i = 0; i < out.size(); ++i) out.at(i) = std::tanh(out.at(i));
  return make(std::move(out), {x}, "tanh", [](Node& n) {
    Tensor& gx = n.inputs[0]->grad;
    for (size_t i = 0; i < gx.size(); ++i) {
      const double t = n.value.at(i);
      gx.at(i) += n.grad.at(i) * (1.0 - t * t);
    }
  });
}

Node* Tape::softplus(Node* x) {
  Tensor out = x->value;
  for (size_t i = 0; i < out.size(); ++i) out.at(i) = fairdiag::softplus(out.at(i));
  return make(std::move(out), {x}, "softplus", [](Node& n) {
    const Tensor& xv = n.inputs[0]->value;
    Tensor& gx = n.inputs[0]->grad;
    for (size_t i = 0; i < gx.size(); ++i) gx.at(i) += n.grad.at(i) * fairdiag::sigmoid(xv.at(i));
  });
}

Node* Tape::concat_cols(Node* a, Node* b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  if (av.rows() != bv.rows()) shape_error("concat", av, bv);
  Tensor out(av.rows(), av.cols() + bv.cols());
  for (int i = 0; i < av.rows(); ++i) {
    for (int j = 0; j < av.cols(); ++j) out(i, j) = av(i, j);
    for (int j = 0; j < bv.cols(); ++j) out(i, av.cols() + j) = bv(i, j);
  }
  return make(std::move(out), {a, b}, "concat", [](Node& n) {
    Tensor& ga = n.inputs[0]->grad;
    Tensor& gb = n.inputs[1]->grad;
    const int ca = ga.cols();
    for (int i = 0; i < n.grad.rows(); ++i) {
      for (int j = 0; j < ca; ++j) ga(i, j) += n.grad(i, j);
      for (int j = 0; j < gb.cols(); ++j) gb(i, j) += n.grad(i, ca + j);
    }
  });
}

Node* Tape::row_sum(Node* x) {
  const Tensor& xv = x->value;
  Tensor out(xv.rows(), 1);
  for (int i = 0; i < xv.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < xv.cols(); ++j) acc += xv(i, j);
    out(i, 0) = acc;
  }
  return make(std::move(out), {x}, "row_sum", [](Node& n) {
    Tensor& gx = n.inputs[0]->grad;
    for (int i = 0; i < gx.rows(); ++i) {
      for (int j = 0; j < gx.cols(); ++j) gx(i, j) += n.grad(i, 0);
    }
  });
}

Node* Tape::row_mean(Node* x) {
  const Tensor& xv = x->value;
  const double inv = 1.0 / xv.cols();
  Tensor out(xv.rows(), 1);
  for (int i = 0; i < xv.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < xv.cols(); ++j) acc += xv(i, j);
    out(i, 0) = acc * inv;
  }
  return make(std::move(out), {x}, "row_mean", [inv](Node& n) {
    Tensor& gx = n.inputs[0]->grad;
    for (int i = 0; i < gx.rows(); ++i) {
      for (int j = 0; j < gx.cols(); ++j) gx(i, j) += n.grad(i, 0) * inv;
    }
  });
}

Node* Tape::col_mean(Node* x) {
  const Tensor& xv = x->value;
  const double inv = 1.0 / xv.rows();
  Tensor out(1, xv.cols());
  for (int j = 0; j < xv.cols(); ++j) {
    double acc = 0.0;
    for (int i = 0; i < xv.rows(); ++i) acc += xv(i, j);
    out(0, j) = acc * inv;
  }
  return make(std::move(out), {x}, "col_mean", [inv](Node& n) {
    Tensor& gx = n.inputs[0]->grad;
    for (int i = 0; i < gx.rows(); ++i) {
      for (int j = 0; j < gx.cols(); ++j) gx(i, j) += n.grad(0, j) * inv;
    }
  });
}

Node* Tape::pop_std(const std::vector<Node*>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("pop_std: empty scalar set");
  std::vector<Node*> ins;
  double mean = 0.0;
  for (Node* s : scalars) {
    if (s->value.rows() != 1 || s->value.cols() != 1) {
      throw std::invalid_argument("pop_std: non-scalar input " + s->value.shape_str());
    }
    mean += s->value(0, 0);
    ins.push_back(s);
  }
  const int k = static_cast<int>(scalars.size());
  mean /= k;
  bool all_equal = true;
  for (Node* s : scalars) all_equal = all_equal && (s->value(0, 0) == scalars[0]->value(0, 0));
  double var = 0.0;
  for (Node* s : scalars) {
    const double d = s->value(0, 0) - mean;
    var += d * d;
  }
  var /= k;
  Tensor out(1, 1);
  out(0, 0) = all_equal ? 0.0 : std::sqrt(var);  // coincident means stay exactly zero
  return make(std::move(out), std::move(ins), "pop_std", [mean, k](Node& n) {
    const double s = n.value(0, 0);
    if (s <= 0.0) return;  // subgradient 0 at the non-differentiable point
    const double g = n.grad(0, 0);
    for (Node* in : n.inputs) {
      in->grad(0, 0) += g * (in->value(0, 0) - mean) / (k * s);
    }
  });
}

namespace {

// Shared machinery for broadcasting binary elementwise ops.
struct Broadcast {
  int rows, cols;
  static Broadcast of(const char* op, const Tensor& a, const Tensor& b) {
    if (!broadcastable(a.rows(), b.rows()) || !broadcastable(a.cols(), b.cols())) shape_error(op, a, b);
    return {std::max(a.rows(), b.rows()), std::max(a.cols(), b.cols())};
  }
};

inline double bval(const Tensor& t, int i, int j) {
  return t(t.rows() == 1 ? 0 : i, t.cols() == 1 ? 0 : j);
}

inline void badd(Tensor& g, int i, int j, double v) {
  g(g.rows() == 1 ? 0 : i, g.cols() == 1 ? 0 : j) += v;
}

}  // namespace

Node* Tape::add(Node* a, Node* b) {
  const Broadcast bc = Broadcast::of("add", a->value, b->value);
  Tensor out(bc.rows, bc.cols);
  for (int i = 0; i < bc.rows; ++i)
    for (int j = 0; j < bc.cols; ++j) out(i, j) = bval(a->value, i, j) + bval(b->value, i, j);
  return make(std::move(out), {a, b}, "add", [](Node& n) {
    for (int i = 0; i < n.grad.rows(); ++i)
      for (int j = 0; j < n.grad.cols(); ++j) {
        badd(n.inputs[0]->grad, i, j, n.grad(i, j));
        badd(n.inputs[1]->grad, i, j, n.grad(i, j));
      }
  });
}

Node* Tape::sub(Node* a, Node* b) {
  const Broadcast bc = Broadcast::of("sub", a->value, b->value);
  Tensor out(bc.rows, bc.cols);
  for (int i = 0; i < bc.rows; ++i)
    for (int j = 0; j < bc.cols; ++j) out(i, j) = bval(a->value, i, j) - bval(b->value, i, j);
  return make(std::move(out), {a, b}, "sub", [](Node& n) {
    for (int i = 0; i < n.grad.rows(); ++i)
      for (int j = 0; j < n.grad.cols(); ++j) {
        badd(n.inputs[0]->grad, i, j, n.grad(i, j));
        badd(n.inputs[1]->grad, i, j, -n.grad(i, j));
      }
  });
}

Node* Tape::mul(Node* a, Node* b) {
  const Broadcast bc = Broadcast::of("mul", a->value, b->value);
  Tensor out(bc.rows, bc.cols);
  for (int i = 0; i < bc.rows; ++i)
    for (int j = 0; j < bc.cols; ++j) out(i, j) = bval(a->value, i, j) * bval(b->value, i, j);
  return make(std::move(out), {a, b}, "mul", [](Node& n) {
    for (int i = 0; i < n.grad.rows(); ++i)
      for (int j = 0; j < n.grad.cols(); ++j) {
        badd(n.inputs[0]->grad, i, j, n.grad(i, j) * bval(n.inputs[1]->value, i, j));
        badd(n.inputs[1]->grad, i, j, n.grad(i, j) * bval(n.inputs[0]->value, i, j));
      }
  });
}

Node* Tape::scale(Node* x, double c) {
  Tensor out = x->value;
  for (size_t i = 0; i < out.size(); ++i) out.at(i) *= c;
  return make(std::move(out), {x}, "scale", [c](Node& n) {
    Tensor& gx = n.inputs[0]->grad;
    for (size_t i = 0; i < gx.size(); ++i) gx.at(i) += n.grad.at(i) * c;
  });
}

Node* Tape::bce_probs(Node* probs, const Tensor& labels) {
  const Tensor& p = probs->value;
  if (!p.same_shape(labels)) shape_error("bce_probs", p, labels);
  const double inv = 1.0 / p.size();
  double loss = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double pi = std::clamp(p.at(i), kProbFloor, 1.0 - kProbFloor);
    const double y = labels.at(i);
    loss -= y * std::log(pi) + (1.0 - y) * std::log(1.0 - pi);
  }
  Tensor out(1, 1);
  out(0, 0) = loss * inv;
  return make(std::move(out), {probs}, "bce_probs", [labels, inv](Node& n) {
    const double g = n.grad(0, 0) * inv;
    Tensor& gp = n.inputs[0]->grad;
    const Tensor& p = n.inputs[0]->value;
    for (size_t i = 0; i < gp.size(); ++i) {
      const double pi = std::clamp(p.at(i), kProbFloor, 1.0 - kProbFloor);
      const double y = labels.at(i);
      gp.at(i) += g * (pi - y) / (pi * (1.0 - pi));
    }
  });
}

Node* Tape::bce_logits(Node* logits, const Tensor& labels) {
  const Tensor& z = logits->value;
  if (!z.same_shape(labels)) shape_error("bce_logits", z, labels);
  const double inv = 1.0 / z.size();
  double loss = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    // log(1+e^z) - y*z, stable for large |z|
    loss += log1pexp(z.at(i)) - labels.at(i) * z.at(i);
  }
  Tensor out(1, 1);
  out(0, 0) = loss * inv;
  return make(std::move(out), {logits}, "bce_logits", [labels, inv](Node& n) {
    const double g = n.grad(0, 0) * inv;
    Tensor& gz = n.inputs[0]->grad;
    const Tensor& z = n.inputs[0]->value;
    for (size_t i = 0; i < gz.size(); ++i) {
      gz.at(i) += g * (fairdiag::sigmoid(z.at(i)) - labels.at(i));
    }
  });
}

Node* Tape::mse(Node* pred, const Tensor& target) {
  const Tensor& p = pred->value;
  if (!p.same_shape(target)) shape_error("mse", p, target);
  const double inv = 1.0 / p.size();
  double loss = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double d = p.at(i) - target.at(i);
    loss += d * d;
  }
  Tensor out(1, 1);
  out(0, 0) = loss * inv;
  return make(std::move(out), {pred}, "mse", [target, inv](Node& n) {
    const double g = n.grad(0, 0) * inv;
    Tensor& gp = n.inputs[0]->grad;
    const Tensor& p = n.inputs[0]->value;
    for (size_t i = 0; i < gp.size(); ++i) gp.at(i) += g * 2.0 * (p.at(i) - target.at(i));
  });
}

namespace {

// Row-wise log-softmax into `ls`; returns nothing. `z` is (n,c).
void log_softmax_rows(const Tensor& z, Tensor& ls) {
  for (int i = 0; i < z.rows(); ++i) {
    double m = z(i, 0);
    for (int j = 1; j < z.cols(); ++j) m = std::max(m, z(i, j));
    double sum = 0.0;
    for (int j = 0; j < z.cols(); ++j) sum += std::exp(z(i, j) - m);
    const double lse = m + std::log(sum);
    for (int j = 0; j < z.cols(); ++j) ls(i, j) = z(i, j) - lse;
  }
}

}  // namespace

Node* Tape::softmax_ce(Node* logits, const std::vector<int>& labels) {
  const Tensor& z = logits->value;
  if (static_cast<int>(labels.size()) != z.rows()) {
    throw std::invalid_argument("softmax_ce: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(z.rows()) + " rows");
  }
  int kept = 0;
  for (int y : labels) {
    if (y >= z.cols()) throw std::invalid_argument("softmax_ce: label out of range");
    if (y >= 0) ++kept;
  }
  Tensor ls(z.rows(), z.cols());
  log_softmax_rows(z, ls);
  double loss = 0.0;
  for (int i = 0; i < z.rows(); ++i) {
    if (labels[i] >= 0) loss -= ls(i, labels[i]);
  }
  Tensor out(1, 1);
  out(0, 0) = kept > 0 ? loss / kept : 0.0;
  return make(std::move(out), {logits}, "softmax_ce", [labels, kept, ls = std::move(ls)](Node& n) {
    if (kept == 0) return;
    const double g = n.grad(0, 0) / kept;
    Tensor& gz = n.inputs[0]->grad;
    for (int i = 0; i < gz.rows(); ++i) {
      if (labels[i] < 0) continue;
      for (int j = 0; j < gz.cols(); ++j) {
        const double p = std::exp(ls(i, j));
        gz(i, j) += g * (p - (j == labels[i] ? 1.0 : 0.0));
      }
    }
  });
}

Node* Tape::softmax_ce_uniform(Node* logits) {
  const Tensor& z = logits->value;
  Tensor ls(z.rows(), z.cols());
  log_softmax_rows(z, ls);
  const double invc = 1.0 / z.cols();
  double loss = 0.0;
  for (int i = 0; i < z.rows(); ++i) {
    for (int j = 0; j < z.cols(); ++j) loss -= invc * ls(i, j);
  }
  Tensor out(1, 1);
  out(0, 0) = loss / z.rows();
  return make(std::move(out), {logits}, "softmax_ce_uniform", [invc, ls = std::move(ls)](Node& n) {
    const double g = n.grad(0, 0) / n.inputs[0]->value.rows();
    Tensor& gz = n.inputs[0]->grad;
    for (int i = 0; i < gz.rows(); ++i) {
      for (int j = 0; j < gz.cols(); ++j) gz(i, j) += g * (std::exp(ls(i, j)) - invc);
    }
  });
}

void Tape::backward(Node* loss) {
  if (nodes_.empty()) throw std::invalid_argument("backward: no forward pass recorded");
  if (loss == nullptr || loss->owner != this) throw std::invalid_argument("backward: loss node not on this tape");
  if (loss->value.rows() != 1 || loss->value.cols() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + loss->value.shape_str());
  }
  for (auto& n : nodes_) n->grad.zero();
  loss->grad(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.needs_grad && n.param == nullptr) continue;
    if (n.backprop) n.backprop(n);
  }
  for (auto& n : nodes_) {
    if (n->param != nullptr) {
      Tensor& pg = n->param->grad;
      for (size_t i = 0; i < pg.size(); ++i) pg.at(i) += n->grad.at(i);
    }
  }
}

double grad_check(const std::function<double()>& loss_and_grad, const std::vector<Parameter*>& params,
                  double epsilon) {
  for (Parameter* p : params) p->zero_grad();
  loss_and_grad();
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  double max_err = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value.at(i);
      p.value.at(i) = orig + epsilon;
      for (Parameter* q : params) q->zero_grad();
      const double up = loss_and_grad();
      p.value.at(i) = orig - epsilon;
      for (Parameter* q : params) q->zero_grad();
      const double down = loss_and_grad();
      p.value.at(i) = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[pi].at(i);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return max_err;
}

}  // namespace fairdiag
