#include "imsvd/matrix.hpp"

#include <cmath>
#include <thread>

#include "imsvd/error.hpp"

namespace imsvd {

namespace {
int g_max_threads = 1;

// Rows [lo, hi) of a*b accumulated into c. The k loop is outermost per row so
// every c(i,j) sums its k terms in ascending order; the row partition cannot
// change that order, which keeps multithreaded results bitwise equal.
void matmul_rows(const Matrix& a, const Matrix& b, Matrix& c, size_t lo,
                 size_t hi) {
  for (size_t i = lo; i < hi; ++i) {
    double* crow = c.row(i);
    const double* arow = a.row(i);
    for (size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k);
      for (size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}
}  // namespace

void set_max_threads(int n) {
  if (n < 1) fail(ErrorKind::kContract, "set_max_threads: n must be >= 1");
  g_max_threads = n;
}

int max_threads() { return g_max_threads; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    fail(ErrorKind::kShape,
         "matmul: inner dimensions differ: " + shape_str(a) + " * " +
             shape_str(b));
  Matrix c(a.rows, b.cols);
  int nt = g_max_threads;
  if (nt <= 1 || a.rows < 64) {
    matmul_rows(a, b, c, 0, a.rows);
    return c;
  }
  size_t chunks = std::min<size_t>(static_cast<size_t>(nt), a.rows);
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  size_t step = (a.rows + chunks - 1) / chunks;
  for (size_t t = 0; t < chunks; ++t) {
    size_t lo = t * step;
    size_t hi = std::min(a.rows, lo + step);
    if (lo >= hi) break;
    pool.emplace_back(matmul_rows, std::cref(a), std::cref(b), std::ref(c), lo,
                      hi);
  }
  for (auto& th : pool) th.join();
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

std::string shape_str(const Matrix& m) {
  return "[" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + "]";
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    fail(ErrorKind::kShape, std::string(op) + ": shape mismatch " +
                                shape_str(a) + " vs " + shape_str(b));
}

bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace imsvd
