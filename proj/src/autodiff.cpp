#include "imsvd/autodiff.hpp"

#include <cmath>
#include <string>

#include "imsvd/error.hpp"

namespace imsvd {

namespace {
void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape)
    fail(ErrorKind::kContract,
         std::string(op) + ": operands must live on the same tape");
}
}  // namespace

const Matrix& Var::value() const { return tape->node(id).value; }
const Matrix& Var::grad() const { return tape->node(id).grad; }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tape::Node n;
  n.op = Tape::Op::kMatmul;
  n.a = a.id;
  n.b = b.id;
  n.value = matmul(a.value(), b.value());
  return a.tape->push(std::move(n));
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tape::Node n;
  n.op = Tape::Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.value = a.value();
  const Matrix& bv = b.value();
  for (size_t i = 0; i < n.value.size(); ++i) n.value.data[i] += bv.data[i];
  return a.tape->push(std::move(n));
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tape::Node n;
  n.op = Tape::Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.value = a.value();
  const Matrix& bv = b.value();
  for (size_t i = 0; i < n.value.size(); ++i) n.value.data[i] -= bv.data[i];
  return a.tape->push(std::move(n));
}

Var scale(Var a, double s) {
  Tape::Node n;
  n.op = Tape::Op::kScale;
  n.a = a.id;
  n.aux = s;
  n.value = a.value();
  for (double& v : n.value.data) v *= s;
  return a.tape->push(std::move(n));
}

Var hadamard(Var a, Var b) {
  require_same_tape(a, b, "hadamard");
  require_same_shape(a.value(), b.value(), "hadamard");
  Tape::Node n;
  n.op = Tape::Op::kHadamard;
  n.a = a.id;
  n.b = b.id;
  n.value = a.value();
  const Matrix& bv = b.value();
  for (size_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= bv.data[i];
  return a.tape->push(std::move(n));
}

Var transpose(Var a) {
  Tape::Node n;
  n.op = Tape::Op::kTranspose;
  n.a = a.id;
  n.value = transpose(a.value());
  return a.tape->push(std::move(n));
}

Var row_sum(Var a) {
  Tape::Node n;
  n.op = Tape::Op::kRowSum;
  n.a = a.id;
  const Matrix& av = a.value();
  n.value = Matrix(av.rows, 1);
  for (size_t i = 0; i < av.rows; ++i) {
    double s = 0.0;
    const double* r = av.row(i);
    for (size_t j = 0; j < av.cols; ++j) s += r[j];
    n.value(i, 0) = s;
  }
  return a.tape->push(std::move(n));
}

Var total_sum(Var a) {
  Tape::Node n;
  n.op = Tape::Op::kTotalSum;
  n.a = a.id;
  n.value = Matrix(1, 1);
  double s = 0.0;
  for (double v : a.value().data) s += v;
  n.value(0, 0) = s;
  return a.tape->push(std::move(n));
}

Var mean(Var a) {
  if (a.value().size() == 0) fail(ErrorKind::kShape, "mean: empty operand");
  Tape::Node n;
  n.op = Tape::Op::kMean;
  n.a = a.id;
  n.value = Matrix(1, 1);
  double s = 0.0;
  for (double v : a.value().data) s += v;
  n.value(0, 0) = s / static_cast<double>(a.value().size());
  return a.tape->push(std::move(n));
}

Var relu(Var a) {
  Tape::Node n;
  n.op = Tape::Op::kRelu;
  n.a = a.id;
  n.value = a.value();
  for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return a.tape->push(std::move(n));
}

Var log_eps(Var a, double eps) {
  if (eps <= 0.0) fail(ErrorKind::kContract, "log_eps: eps must be positive");
  Tape::Node n;
  n.op = Tape::Op::kLogEps;
  n.a = a.id;
  n.aux = eps;
  n.value = a.value();
  for (double& v : n.value.data) v = std::log(v > eps ? v : eps);
  return a.tape->push(std::move(n));
}

Var exp(Var a) {
  Tape::Node n;
  n.op = Tape::Op::kExp;
  n.a = a.id;
  n.value = a.value();
  for (double& v : n.value.data) v = std::exp(v);
  return a.tape->push(std::move(n));
}

Var block_softmax(Var a, size_t m, size_t dm) {
  if (m < 1 || dm < 2)
    fail(ErrorKind::kContract, "block_softmax: need m >= 1 and dm >= 2");
  const Matrix& av = a.value();
  if (av.cols != m * dm)
    fail(ErrorKind::kShape, "block_softmax: expected " +
                                std::to_string(m * dm) + " columns, got " +
                                std::to_string(av.cols));
  Tape::Node n;
  n.op = Tape::Op::kBlockSoftmax;
  n.a = a.id;
  n.block_m = m;
  n.block_dm = dm;
  n.value = Matrix(av.rows, av.cols);
  for (size_t i = 0; i < av.rows; ++i) {
    const double* in = av.row(i);
    double* out = n.value.row(i);
    for (size_t blk = 0; blk < m; ++blk) {
      const double* x = in + blk * dm;
      double* y = out + blk * dm;
      double mx = x[0];
      for (size_t d = 1; d < dm; ++d) mx = x[d] > mx ? x[d] : mx;
      double z = 0.0;
      for (size_t d = 0; d < dm; ++d) {
        y[d] = std::exp(x[d] - mx);
        z += y[d];
      }
      for (size_t d = 0; d < dm; ++d) y[d] /= z;
    }
  }
  return a.tape->push(std::move(n));
}

void Tape::backward(Var loss) {
  if (loss.tape != this)
    fail(ErrorKind::kContract, "backward: loss lives on a different tape");
  if (backward_done_)
    fail(ErrorKind::kContract,
         "backward: tape already consumed; build a fresh tape per step");
  const Matrix& lv = nodes_[loss.id].value;
  if (lv.rows != 1 || lv.cols != 1)
    fail(ErrorKind::kShape,
         "backward: loss must be 1x1, got " + shape_str(lv));
  backward_done_ = true;

  for (Node& n : nodes_) n.grad = Matrix(n.value.rows, n.value.cols);
  nodes_[loss.id].grad(0, 0) = 1.0;

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatmul: {
        // dA += g * B^T, dB += A^T * g
        const Matrix& av = nodes_[n.a].value;
        const Matrix& bv = nodes_[n.b].value;
        Matrix da = matmul(g, transpose(bv));
        Matrix db = matmul(transpose(av), g);
        Matrix& ga = nodes_[n.a].grad;
        Matrix& gb = nodes_[n.b].grad;
        for (size_t i = 0; i < ga.size(); ++i) ga.data[i] += da.data[i];
        for (size_t i = 0; i < gb.size(); ++i) gb.data[i] += db.data[i];
        break;
      }
      case Op::kAdd: {
        Matrix& ga = nodes_[n.a].grad;
        Matrix& gb = nodes_[n.b].grad;
        for (size_t i = 0; i < g.size(); ++i) {
          ga.data[i] += g.data[i];
          gb.data[i] += g.data[i];
        }
        break;
      }
      case Op::kSub: {
        Matrix& ga = nodes_[n.a].grad;
        Matrix& gb = nodes_[n.b].grad;
        for (size_t i = 0; i < g.size(); ++i) {
          ga.data[i] += g.data[i];
          gb.data[i] -= g.data[i];
        }
        break;
      }
      case Op::kScale: {
        Matrix& ga = nodes_[n.a].grad;
        for (size_t i = 0; i < g.size(); ++i) ga.data[i] += n.aux * g.data[i];
        break;
      }
      case Op::kHadamard: {
        const Matrix& av = nodes_[n.a].value;
        const Matrix& bv = nodes_[n.b].value;
        Matrix& ga = nodes_[n.a].grad;
        Matrix& gb = nodes_[n.b].grad;
        for (size_t i = 0; i < g.size(); ++i) {
          ga.data[i] += g.data[i] * bv.data[i];
          gb.data[i] += g.data[i] * av.data[i];
        }
        break;
      }
      case Op::kTranspose: {
        Matrix gt = transpose(g);
        Matrix& ga = nodes_[n.a].grad;
        for (size_t i = 0; i < ga.size(); ++i) ga.data[i] += gt.data[i];
        break;
      }
      case Op::kRowSum: {
        Matrix& ga = nodes_[n.a].grad;
        for (size_t i = 0; i < ga.rows; ++i) {
          double gi = g(i, 0);
          double* r = ga.row(i);
          for (size_t j = 0; j < ga.cols; ++j) r[j] += gi;
        }
        break;
      }
      case Op::kTotalSum: {
        Matrix& ga = nodes_[n.a].grad;
        double gs = g(0, 0);
        for (double& v : ga.data) v += gs;
        break;
      }
      case Op::kMean: {
        Matrix& ga = nodes_[n.a].grad;
        double gs = g(0, 0) / static_cast<double>(ga.size());
        for (double& v : ga.data) v += gs;
        break;
      }
      case Op::kRelu: {
        const Matrix& av = nodes_[n.a].value;
        Matrix& ga = nodes_[n.a].grad;
        for (size_t i = 0; i < g.size(); ++i)
          if (av.data[i] > 0.0) ga.data[i] += g.data[i];
        break;
      }
      case Op::kLogEps: {
        const Matrix& av = nodes_[n.a].value;
        Matrix& ga = nodes_[n.a].grad;
        double eps = n.aux;
        for (size_t i = 0; i < g.size(); ++i) {
          double x = av.data[i];
          if (x > 0.0) ga.data[i] += g.data[i] / (x > eps ? x : eps);
        }
        break;
      }
      case Op::kExp: {
        Matrix& ga = nodes_[n.a].grad;
        for (size_t i = 0; i < g.size(); ++i)
          ga.data[i] += g.data[i] * n.value.data[i];
        break;
      }
      case Op::kBlockSoftmax: {
        // Per block: dx = y * (g - <g, y>)
        Matrix& ga = nodes_[n.a].grad;
        size_t m = n.block_m, dm = n.block_dm;
        for (size_t i = 0; i < n.value.rows; ++i) {
          const double* y = n.value.row(i);
          const double* gr = g.row(i);
          double* gx = ga.row(i);
          for (size_t blk = 0; blk < m; ++blk) {
            const double* yb = y + blk * dm;
            const double* gb = gr + blk * dm;
            double dot = 0.0;
            for (size_t d = 0; d < dm; ++d) dot += gb[d] * yb[d];
            for (size_t d = 0; d < dm; ++d)
              gx[blk * dm + d] += yb[d] * (gb[d] - dot);
          }
        }
        break;
      }
    }
  }
}

double grad_check(
    const std::function<double(const std::vector<Matrix>&)>& value_fn,
    const std::function<std::vector<Matrix>(const std::vector<Matrix>&)>&
        grad_fn,
    const std::vector<Matrix>& params, double h) {
  if (h <= 0.0) fail(ErrorKind::kContract, "grad_check: h must be positive");
  std::vector<Matrix> analytic = grad_fn(params);
  if (analytic.size() != params.size())
    fail(ErrorKind::kContract,
         "grad_check: grad_fn returned " + std::to_string(analytic.size()) +
             " gradients for " + std::to_string(params.size()) +
             " parameters");
  std::vector<Matrix> work = params;
  double worst = 0.0;
  for (size_t p = 0; p < work.size(); ++p) {
    if (!analytic[p].same_shape(params[p]))
      fail(ErrorKind::kShape, "grad_check: gradient shape mismatch at " +
                                  std::to_string(p));
    for (size_t i = 0; i < work[p].size(); ++i) {
      double saved = work[p].data[i];
      work[p].data[i] = saved + h;
      double fp = value_fn(work);
      work[p].data[i] = saved - h;
      double fm = value_fn(work);
      work[p].data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        fail(ErrorKind::kNumeric,
             "grad_check: objective is non-finite near the probe point");
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic[p].data[i];
      double rel =
          std::fabs(a - numeric) /
          std::max(1e-8, std::fabs(a) + std::fabs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace imsvd
