#pragma once

#include <functional>
#include <vector>

#include "imsvd/matrix.hpp"

namespace imsvd {

class Tape;

// Handle to a tape node. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  size_t rows() const { return value().rows; }
  size_t cols() const { return value().cols; }
};

// Reverse-mode tape over dense double matrices. Nodes are appended in
// evaluation order (which is already topological), values are computed
// eagerly, and backward() walks the tape once in reverse. The tape is
// first-order only: a second backward() without a fresh tape is rejected,
// and gradients themselves are plain matrices, not differentiable nodes.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients for every node.
  // `loss` must be 1x1. Calling backward twice on one tape is an error.
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  friend struct Var;
  friend Var matmul(Var a, Var b);
  friend Var add(Var a, Var b);
  friend Var sub(Var a, Var b);
  friend Var scale(Var a, double s);
  friend Var hadamard(Var a, Var b);
  friend Var transpose(Var a);
  friend Var row_sum(Var a);
  friend Var total_sum(Var a);
  friend Var mean(Var a);
  friend Var relu(Var a);
  friend Var log_eps(Var a, double eps);
  friend Var exp(Var a);
  friend Var block_softmax(Var a, size_t m, size_t dm);

  enum class Op {
    kLeaf,
    kMatmul,
    kAdd,
    kSub,
    kScale,
    kHadamard,
    kTranspose,
    kRowSum,
    kTotalSum,
    kMean,
    kRelu,
    kLogEps,
    kExp,
    kBlockSoftmax,
  };

  struct Node {
    Op op = Op::kLeaf;
    int a = -1;
    int b = -1;
    double aux = 0.0;  // scale factor or log epsilon
    size_t block_m = 0;
    size_t block_dm = 0;
    Matrix value;
    Matrix grad;
  };

  Var push(Node node);
  const Node& node(int id) const { return nodes_[id]; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var hadamard(Var a, Var b);
Var transpose(Var a);
Var row_sum(Var a);    // NxM -> Nx1
Var total_sum(Var a);  // NxM -> 1x1
Var mean(Var a);       // NxM -> 1x1
Var relu(Var a);
// ln(max(x, eps)) elementwise. Backward is 1/max(x, eps), gated to zero
// where x <= 0, so clamped-away zeros contribute no gradient.
Var log_eps(Var a, double eps);
Var exp(Var a);
// Softmax within each of m contiguous blocks of width dm per row, with the
// usual max subtraction so large logits cannot overflow.
Var block_softmax(Var a, size_t m, size_t dm);

// Central-difference check of an analytic gradient. `value_fn` evaluates the
// scalar objective at a parameter set; `grad_fn` returns analytic gradients
// of the same objective (one matrix per parameter, matching shapes). Returns
// the max over all parameter elements of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(
    const std::function<double(const std::vector<Matrix>&)>& value_fn,
    const std::function<std::vector<Matrix>(const std::vector<Matrix>&)>&
        grad_fn,
    const std::vector<Matrix>& params, double h);

}  // namespace imsvd
