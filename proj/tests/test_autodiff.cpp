#include <doctest.h>

#include <cmath>

#include "fairdiag/autodiff.hpp"
#include "fairdiag/rng.hpp"

using namespace fairdiag;

namespace {

Tensor random_tensor(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

Parameter random_param(const std::string& id, int rows, int cols, Rng& rng, double lo = -1.0,
                       double hi = 1.0) {
  return Parameter(id, random_tensor(rows, cols, rng, lo, hi));
}

// Reduce an arbitrary node to a scalar through mse against a fixed target.
Node* to_scalar(Tape& t, Node* x, Rng& rng) {
  return t.mse(x, random_tensor(x->value.rows(), x->value.cols(), rng));
}

}  // namespace

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("sigmoid at zero") {
  Tape t;
  Node* out = t.sigmoid(t.constant(Tensor(1, 1)));
  CHECK(out->value(0, 0) == 0.5);
}

TEST_CASE("affine with identity weights is the identity") {
  Tape t;
  Tensor w(3, 3);
  for (int i = 0; i < 3; ++i) w(i, i) = 1.0;
  Tensor x = Tensor::row({0.3, -1.2, 5.0});
  Node* out = t.affine(t.constant(x), t.constant(w), t.constant(Tensor(1, 3)));
  for (int j = 0; j < 3; ++j) CHECK(out->value(0, j) == x(0, j));
}

TEST_CASE("concat shape arithmetic") {
  Tape t;
  Node* out = t.concat_cols(t.constant(Tensor(1, 2)), t.constant(Tensor(1, 3)));
  CHECK(out->value.rows() == 1);
  CHECK(out->value.cols() == 5);
}

TEST_CASE("gradient of a plain sum is all-ones") {
  Rng rng(1);
  Parameter w = random_param("w", 3, 4, rng);
  Tape t;
  Node* sum = t.scale(t.col_mean(t.row_sum(t.param(w))), 3.0 * 4.0 / 4.0);
  // row_sum -> (3x1), col_mean -> mean of 3 row sums; scale by 3 restores the sum
  t.backward(t.scale(sum, 1.0));
  for (size_t i = 0; i < w.grad.size(); ++i) CHECK(w.grad.at(i) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sigmoid gate gradient at zero is a quarter of the scale") {
  Parameter w("w", Tensor(1, 1));
  Tape t;
  const double c = 3.0;
  Node* loss = t.scale(t.sigmoid(t.param(w)), c);
  t.backward(loss);
  CHECK(w.grad(0, 0) == 0.25 * c);
}

TEST_CASE("backward twice accumulates exactly twice the gradient") {
  Rng rng(2);
  Parameter w = random_param("w", 2, 2, rng);
  Tape t;
  Node* loss = to_scalar(t, t.sigmoid(t.param(w)), rng);
  t.backward(loss);
  const Tensor once = w.grad;
  t.backward(loss);
  for (size_t i = 0; i < once.size(); ++i) CHECK(w.grad.at(i) == 2.0 * once.at(i));
}

TEST_CASE("forward evaluation is deterministic") {
  Rng rng(3);
  const Tensor x = random_tensor(4, 3, rng);
  const Tensor w = random_tensor(3, 2, rng);
  auto run = [&] {
    Tape t;
    return t.sigmoid(t.affine(t.constant(x), t.constant(w), t.constant(Tensor(1, 2))))->value;
  };
  const Tensor a = run();
  const Tensor b = run();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("shape mismatch names the primitive and both shapes") {
  Tape t;
  try {
    t.affine(t.constant(Tensor(2, 3)), t.constant(Tensor(4, 5)), t.constant(Tensor(1, 5)));
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("affine") != std::string::npos);
    CHECK(msg.find("(2x3)") != std::string::npos);
    CHECK(msg.find("(4x5)") != std::string::npos);
  }
}

TEST_CASE("backward without a forward pass fails") {
  Tape t;
  CHECK_THROWS_AS(t.backward(nullptr), std::invalid_argument);
  Tape other;
  Node* loss = other.constant(Tensor(1, 1));
  CHECK_THROWS_AS(t.backward(loss), std::invalid_argument);
}

TEST_CASE("backward requires a scalar loss") {
  Tape t;
  Node* v = t.constant(Tensor(2, 2));
  CHECK_THROWS_AS(t.backward(v), std::invalid_argument);
}

TEST_CASE("grad_check on a linear loss is near-exact") {
  Rng rng(4);
  Parameter w = random_param("w", 2, 3, rng);
  const Tensor coef = random_tensor(2, 3, rng);
  auto loss = [&] {
    Tape t;
    Node* l = t.col_mean(t.row_sum(t.mul(t.param(w), t.constant(coef))));
    t.backward(l);
    return l->value(0, 0);
  };
  CHECK(grad_check(loss, {&w}) < 1e-10);
}

TEST_CASE("grad_check on a single sigmoid neuron") {
  Rng rng(0);
  Parameter w = random_param("w", 3, 1, rng);
  Parameter b = random_param("b", 1, 1, rng);
  const Tensor x = random_tensor(5, 3, rng);
  const Tensor y = random_tensor(5, 1, rng, 0.0, 1.0);
  auto loss = [&] {
    Tape t;
    Node* out = t.sigmoid(t.affine(t.constant(x), t.param(w), t.param(b)));
    Node* l = t.mse(out, y);
    t.backward(l);
    return l->value(0, 0);
  };
  CHECK(grad_check(loss, {&w, &b}) < 1e-6);
}

TEST_CASE("every primitive matches central differences") {
  Rng rng(7);

  auto check = [&](const char* name, auto&& build, std::vector<Parameter*> params) {
    auto loss = [&] {
      Tape t;
      Node* l = build(t);
      t.backward(l);
      return l->value(0, 0);
    };
    INFO(name);
    CHECK(grad_check(loss, params) < 1e-6);
  };

  {
    Parameter table = random_param("table", 5, 3, rng);
    const Tensor target = random_tensor(4, 3, rng);
    check("lookup", [&](Tape& t) {
      return t.mse(t.lookup(t.param(table), {1, 3, 3, 0}), target);
    }, {&table});
  }
  {
    Parameter w = random_param("w", 3, 2, rng);
    Parameter b = random_param("b", 1, 2, rng);
    const Tensor x = random_tensor(4, 3, rng);
    const Tensor target = random_tensor(4, 2, rng);
    check("affine", [&](Tape& t) {
      return t.mse(t.affine(t.constant(x), t.param(w), t.param(b)), target);
    }, {&w, &b});
  }
  for (const char* fn : {"sigmoid", "tanh", "softplus"}) {
    Parameter x = random_param("x", 3, 3, rng);
    const Tensor target = random_tensor(3, 3, rng);
    check(fn, [&, fn](Tape& t) -> Node* {
      Node* in = t.param(x);
      Node* out = fn == std::string("sigmoid") ? t.sigmoid(in)
                  : fn == std::string("tanh") ? t.tanh(in)
                                              : t.softplus(in);
      return t.mse(out, target);
    }, {&x});
  }
  {
    Parameter a = random_param("a", 2, 2, rng);
    Parameter b = random_param("b", 2, 3, rng);
    const Tensor target = random_tensor(2, 5, rng);
    check("concat", [&](Tape& t) {
      return t.mse(t.concat_cols(t.param(a), t.param(b)), target);
    }, {&a, &b});
  }
  {
    Parameter x = random_param("x", 3, 4, rng);
    const Tensor t1 = random_tensor(3, 1, rng);
    const Tensor t2 = random_tensor(1, 4, rng);
    check("row_sum", [&](Tape& t) { return t.mse(t.row_sum(t.param(x)), t1); }, {&x});
    check("row_mean", [&](Tape& t) { return t.mse(t.row_mean(t.param(x)), t1); }, {&x});
    check("col_mean", [&](Tape& t) { return t.mse(t.col_mean(t.param(x)), t2); }, {&x});
  }
  {
    Parameter a = random_param("a", 1, 1, rng);
    Parameter b = random_param("b", 1, 1, rng);
    Parameter c = random_param("c", 1, 1, rng);
    b.value(0, 0) += 2.0;  // keep the three scalars clearly distinct
    c.value(0, 0) -= 2.0;
    check("pop_std", [&](Tape& t) {
      return t.pop_std({t.param(a), t.param(b), t.param(c)});
    }, {&a, &b, &c});
  }
  {
    Parameter a = random_param("a", 3, 4, rng);
    Parameter col = random_param("col", 3, 1, rng);
    Parameter row = random_param("row", 1, 4, rng);
    const Tensor target = random_tensor(3, 4, rng);
    check("add broadcast", [&](Tape& t) {
      return t.mse(t.add(t.param(a), t.param(col)), target);
    }, {&a, &col});
    check("sub broadcast", [&](Tape& t) {
      return t.mse(t.sub(t.param(a), t.param(row)), target);
    }, {&a, &row});
    check("mul broadcast", [&](Tape& t) {
      return t.mse(t.mul(t.param(a), t.param(col)), target);
    }, {&a, &col});
    check("scale", [&](Tape& t) { return t.mse(t.scale(t.param(a), -1.7), target); }, {&a});
  }
  {
    Parameter probs = random_param("probs", 4, 1, rng, 0.2, 0.8);
    Parameter logits = random_param("logits", 4, 1, rng);
    Tensor labels(4, 1);
    labels(1, 0) = 1.0;
    labels(3, 0) = 1.0;
    check("bce_probs", [&](Tape& t) { return t.bce_probs(t.param(probs), labels); }, {&probs});
    check("bce_logits", [&](Tape& t) { return t.bce_logits(t.param(logits), labels); }, {&logits});
  }
  {
    Parameter pred = random_param("pred", 3, 2, rng);
    const Tensor target = random_tensor(3, 2, rng);
    check("mse", [&](Tape& t) { return t.mse(t.param(pred), target); }, {&pred});
  }
  {
    Parameter logits = random_param("logits", 4, 3, rng);
    check("softmax_ce", [&](Tape& t) {
      return t.softmax_ce(t.param(logits), {0, 2, -1, 1});
    }, {&logits});
    check("softmax_ce_uniform", [&](Tape& t) {
      return t.softmax_ce_uniform(t.param(logits));
    }, {&logits});
  }
}

TEST_CASE("unreachable parameters keep a zero gradient") {
  Rng rng(9);
  Parameter used = random_param("used", 2, 2, rng);
  Parameter unused = random_param("unused", 2, 2, rng);
  Tape t;
  Node* loss = to_scalar(t, t.param(used), rng);
  used.zero_grad();
  unused.zero_grad();
  t.backward(loss);
  for (size_t i = 0; i < unused.grad.size(); ++i) CHECK(unused.grad.at(i) == 0.0);
}

TEST_CASE("softmax cross-entropy values") {
  // uniform logits over 2 classes -> ln 2 per row
  Tape t;
  Node* ce = t.softmax_ce(t.constant(Tensor(3, 2)), {0, 1, 0});
  CHECK(ce->value(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // rows with label -1 are excluded
  Tensor z(2, 2);
  z(1, 0) = 40.0;  // would dominate if wrongly included
  Node* ce2 = t.softmax_ce(t.constant(z), {0, -1});
  CHECK(ce2->value(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_SUITE_END();
