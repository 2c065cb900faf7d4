#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "imsvd/autodiff.hpp"
#include "imsvd/error.hpp"
#include "imsvd/rng.hpp"
#include "testutil.hpp"

using imsvd::Matrix;
using imsvd::Tape;
using imsvd::Var;

namespace {

// Finite-difference check of a one- or two-input graph that ends in a
// scalar. build() must consume the leaves in order and return the loss.
double check_graph(
    const std::vector<Matrix>& inputs,
    const std::function<Var(Tape&, std::vector<Var>&)>& build,
    double h = 1e-6) {
  auto value_fn = [&](const std::vector<Matrix>& p) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& m : p) leaves.push_back(tape.leaf(m));
    return build(tape, leaves).value()(0, 0);
  };
  auto grad_fn = [&](const std::vector<Matrix>& p) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& m : p) leaves.push_back(tape.leaf(m));
    Var loss = build(tape, leaves);
    tape.backward(loss);
    std::vector<Matrix> grads;
    for (Var v : leaves) grads.push_back(v.grad());
    return grads;
  };
  return imsvd::grad_check(value_fn, grad_fn, inputs, h);
}

Matrix randm(size_t r, size_t c, uint64_t seed) {
  imsvd::Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("matmul gradient matches finite differences") {
  std::vector<Matrix> in{randm(3, 4, 1), randm(4, 2, 2)};
  double err = check_graph(in, [](Tape&, std::vector<Var>& l) {
    return imsvd::total_sum(imsvd::hadamard(imsvd::matmul(l[0], l[1]),
                                            imsvd::matmul(l[0], l[1])));
  });
  CHECK(err < 1e-7);
}

TEST_CASE("add, sub, scale gradients match finite differences") {
  std::vector<Matrix> in{randm(3, 3, 3), randm(3, 3, 4)};
  double err = check_graph(in, [](Tape&, std::vector<Var>& l) {
    Var s = imsvd::sub(imsvd::add(l[0], imsvd::scale(l[1], 2.5)), l[1]);
    return imsvd::total_sum(imsvd::hadamard(s, s));
  });
  CHECK(err < 1e-7);
}

TEST_CASE("hadamard and transpose gradients match finite differences") {
  std::vector<Matrix> in{randm(2, 5, 5), randm(5, 2, 6)};
  double err = check_graph(in, [](Tape&, std::vector<Var>& l) {
    return imsvd::total_sum(
        imsvd::hadamard(l[0], imsvd::transpose(l[1])));
  });
  CHECK(err < 1e-7);
}

TEST_CASE("row_sum, mean gradients match finite differences") {
  std::vector<Matrix> in{randm(4, 3, 7)};
  double err = check_graph(in, [](Tape&, std::vector<Var>& l) {
    Var r = imsvd::row_sum(l[0]);
    return imsvd::add(imsvd::total_sum(imsvd::hadamard(r, r)),
                      imsvd::mean(l[0]));
  });
  CHECK(err < 1e-7);
}

TEST_CASE("relu gradient matches finite differences away from the kink") {
  Matrix m = randm(4, 4, 8);
  // Keep all entries away from 0 so the central difference is valid.
  for (double& v : m.data)
    if (std::fabs(v) < 1e-2) v = 0.5;
  double err = check_graph({m}, [](Tape&, std::vector<Var>& l) {
    return imsvd::total_sum(imsvd::relu(l[0]));
  });
  CHECK(err < 1e-7);
}

TEST_CASE("exp and log_eps gradients match finite differences") {
  Matrix m = randm(3, 3, 9);
  for (double& v : m.data) v = 0.5 + std::fabs(v);  // strictly positive
  double err = check_graph({m}, [](Tape&, std::vector<Var>& l) {
    return imsvd::total_sum(imsvd::log_eps(imsvd::exp(l[0]), 1e-8));
  });
  CHECK(err < 1e-7);
}

TEST_CASE("log_eps clamps below eps and gates the gradient there") {
  Matrix m(1, 2);
  m(0, 0) = -3.0;    // clamped, and gated to zero gradient
  m(0, 1) = 2.0;     // pass-through
  Tape tape;
  Var x = tape.leaf(m);
  Var loss = imsvd::total_sum(imsvd::log_eps(x, 1e-8));
  CHECK(loss.value()(0, 0) ==
        doctest::Approx(std::log(1e-8) + std::log(2.0)).epsilon(1e-12));
  tape.backward(loss);
  CHECK(x.grad()(0, 0) == 0.0);
  CHECK(x.grad()(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("block_softmax forward matches the worked example") {
  Matrix z(1, 2);
  z(0, 0) = std::log(3.0);
  z(0, 1) = 0.0;
  Tape tape;
  Var q = imsvd::block_softmax(tape.leaf(z), 1, 2);
  CHECK(q.value()(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(q.value()(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("block_softmax is invariant to a large common shift") {
  Matrix z = randm(2, 6, 10);
  Matrix shifted = z;
  for (double& v : shifted.data) v += 500.0;  // would overflow a naive exp
  Tape tape;
  Var a = imsvd::block_softmax(tape.leaf(z), 3, 2);
  Var b = imsvd::block_softmax(tape.leaf(shifted), 3, 2);
  for (size_t i = 0; i < a.value().size(); ++i)
    CHECK(a.value().data[i] ==
          doctest::Approx(b.value().data[i]).epsilon(1e-12));
}

TEST_CASE("block_softmax rows sum to one per block") {
  Matrix z = randm(5, 12, 11);
  Tape tape;
  Var q = imsvd::block_softmax(tape.leaf(z), 3, 4);
  for (size_t i = 0; i < 5; ++i)
    for (size_t m = 0; m < 3; ++m) {
      double s = 0.0;
      for (size_t d = 0; d < 4; ++d) s += q.value()(i, m * 4 + d);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("block_softmax gradient matches finite differences") {
  std::vector<Matrix> in{randm(4, 6, 12)};
  double err = check_graph(in, [](Tape&, std::vector<Var>& l) {
    Var q = imsvd::block_softmax(l[0], 2, 3);
    return imsvd::total_sum(imsvd::log_eps(q, 1e-8));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("gradients accumulate when a node is used twice") {
  Matrix m(1, 1, 3.0);
  Tape tape;
  Var x = tape.leaf(m);
  Var loss = imsvd::total_sum(imsvd::hadamard(x, x));  // x^2
  tape.backward(loss);
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward demands a scalar and refuses to run twice") {
  Tape tape;
  Var x = tape.leaf(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(x), imsvd::Error);
  Var s = imsvd::total_sum(x);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), imsvd::Error);
}

TEST_CASE("grad_check flags a deliberately wrong gradient") {
  std::vector<Matrix> p{Matrix(1, 1, 2.0)};
  auto value_fn = [](const std::vector<Matrix>& v) {
    return v[0](0, 0) * v[0](0, 0);
  };
  auto bad_grad = [](const std::vector<Matrix>& v) {
    std::vector<Matrix> g{Matrix(1, 1, 3.0 * v[0](0, 0))};  // should be 2x
    return g;
  };
  CHECK(imsvd::grad_check(value_fn, bad_grad, p, 1e-6) > 0.1);
}
