#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace imsvd {

// Dense row-major matrix of doubles. This is the only numeric container in
// the library; vectors are 1xN or Nx1 matrices.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(size_t i, size_t j) { return data[i * cols + j]; }
  double operator()(size_t i, size_t j) const { return data[i * cols + j]; }

  size_t size() const { return rows * cols; }
  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }

  double* row(size_t i) { return data.data() + i * cols; }
  const double* row(size_t i) const { return data.data() + i * cols; }
};

// Worker cap for row-parallel matmul. 1 (the default) means fully
// sequential; any value keeps results bitwise identical because each output
// element is reduced in a fixed order regardless of the partition.
void set_max_threads(int n);
int max_threads();

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Shape helpers shared by the autodiff ops.
std::string shape_str(const Matrix& m);
void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

bool all_finite(const Matrix& m);

}  // namespace imsvd
