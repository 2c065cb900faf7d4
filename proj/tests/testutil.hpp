#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "imsvd/discretize.hpp"
#include "imsvd/matrix.hpp"
#include "imsvd/rng.hpp"

namespace imsvd::test {

// Random logits, N x (m * dm), standard normal entries.
inline Matrix rand_logits(size_t n, BlockLayout layout, uint64_t seed) {
  Rng rng(seed);
  Matrix z(n, layout.width());
  for (double& v : z.data) v = rng.normal();
  return z;
}

inline DiscretizedBatch rand_batch(size_t n, BlockLayout layout,
                                   uint64_t seed) {
  return discretize_batch(rand_logits(n, layout, seed), layout);
}

// Exactly one-hot batch from integer codes[i][m] in [0, dm).
inline DiscretizedBatch onehot_batch(
    const std::vector<std::vector<size_t>>& codes, BlockLayout layout) {
  Matrix q(codes.size(), layout.width());
  for (size_t i = 0; i < codes.size(); ++i)
    for (size_t m = 0; m < layout.m; ++m)
      q(i, m * layout.dm + codes[i][m]) = 1.0;
  return DiscretizedBatch::from_matrix(std::move(q), layout);
}

// Constructed minimizer batches: hard one-hot codes whose marginals are
// uniform and whose variables are pairwise independent, so both views equal
// and the loss sits at its analytic minimum -(2 - 1/M) * ln(dm).
//
// M=2, dm=2: the full 2x2 grid over 4 samples.
inline DiscretizedBatch fixed_point_2x2() {
  return onehot_batch({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, BlockLayout(2, 2));
}

// M=3, dm=3: v_m = (x + m*y) mod 3 over the 9 (x, y) pairs. Any two of the
// three variables determine (x, y) jointly but are pairwise uniform.
inline DiscretizedBatch fixed_point_3x3() {
  std::vector<std::vector<size_t>> codes;
  for (size_t x = 0; x < 3; ++x)
    for (size_t y = 0; y < 3; ++y)
      codes.push_back({x, (x + y) % 3, (x + 2 * y) % 3});
  return onehot_batch(codes, BlockLayout(3, 3));
}

// M=4, dm=2: three free bits plus their parity over 8 samples.
inline DiscretizedBatch fixed_point_4x2() {
  std::vector<std::vector<size_t>> codes;
  for (size_t a = 0; a < 2; ++a)
    for (size_t b = 0; b < 2; ++b)
      for (size_t c = 0; c < 2; ++c)
        codes.push_back({a, b, c, (a + b + c) % 2});
  return onehot_batch(codes, BlockLayout(4, 2));
}

// Brute-force joint estimator: plain nested loops over every index tuple,
// accumulating q products sample by sample in batch order and dividing by N
// once per entry. Mirrors the arithmetic (acc * (1/N)) of the production
// estimator so agreement is bitwise under the fixed summation order.
inline std::vector<double> brute_joint(const DiscretizedBatch& batch,
                                       const std::vector<size_t>& vars) {
  size_t dm = batch.layout.dm;
  size_t r = vars.size();
  size_t entries = 1;
  for (size_t i = 0; i < r; ++i) entries *= dm;
  std::vector<double> out(entries, 0.0);
  double inv = 1.0 / static_cast<double>(batch.n());
  for (size_t e = 0; e < entries; ++e) {
    std::vector<size_t> idx(r);
    size_t rem = e;
    for (size_t j = r; j-- > 0;) {
      idx[j] = rem % dm;
      rem /= dm;
    }
    double acc = 0.0;
    for (size_t i = 0; i < batch.n(); ++i) {
      double prod = 1.0;
      for (size_t j = 0; j < r; ++j)
        prod *= batch.q(i, vars[j] * dm + idx[j]);
      acc += prod;
    }
    out[e] = acc * inv;
  }
  return out;
}

// Straight-loop reference of the full loss (no tape): ti + lambda*(de+oe)
// with the same clamps and averaging order as the graph version.
struct ReferenceLoss {
  double total, ti, de, oe;
};

inline ReferenceLoss reference_loss(const Matrix& q1, const Matrix& q2,
                                    BlockLayout layout, double lambda) {
  size_t n = q1.rows, m = layout.m, dm = layout.dm;
  double ti = 0.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t b = 0; b < m; ++b) {
      double dot = 0.0;
      for (size_t d = 0; d < dm; ++d)
        dot += q1(i, b * dm + d) * q2(i, b * dm + d);
      ti += std::log(std::max(dot, 1e-8));
    }
  ti *= -1.0 / (static_cast<double>(n) * static_cast<double>(m));

  // Cross joint c = q1^T q2 / n, then the masked entropy sums.
  size_t w = m * dm;
  Matrix c(w, w);
  for (size_t a = 0; a < w; ++a)
    for (size_t b = 0; b < w; ++b) {
      double acc = 0.0;
      for (size_t i = 0; i < n; ++i) acc += q1(i, a) * q2(i, b);
      c(a, b) = acc / static_cast<double>(n);
    }
  double de = 0.0, oe = 0.0;
  double inv_m2 = 1.0 / (static_cast<double>(m) * static_cast<double>(m));
  for (size_t b = 0; b < m; ++b)
    for (size_t d = 0; d < dm; ++d) {
      double v = c(b * dm + d, b * dm + d);
      de += v * std::log(std::max(v, 1e-12));
    }
  for (size_t b1 = 0; b1 < m; ++b1)
    for (size_t b2 = 0; b2 < m; ++b2) {
      if (b1 == b2) continue;
      for (size_t d1 = 0; d1 < dm; ++d1)
        for (size_t d2 = 0; d2 < dm; ++d2) {
          double v = c(b1 * dm + d1, b2 * dm + d2);
          oe += v * std::log(std::max(v, 1e-12));
        }
    }
  de *= inv_m2;
  oe *= inv_m2;
  return {ti + lambda * (de + oe), ti, de, oe};
}

}  // namespace imsvd::test
