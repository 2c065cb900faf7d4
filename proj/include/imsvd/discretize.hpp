#pragma once

#include <string>
#include <vector>

#include "imsvd/autodiff.hpp"
#include "imsvd/matrix.hpp"

namespace imsvd {

// M soft categorical variables of D_M units each, laid out as contiguous
// blocks of one row: unit d of variable m lives at column m * dm + d.
struct BlockLayout {
  size_t m = 0;
  size_t dm = 0;

  BlockLayout() = default;
  BlockLayout(size_t m_, size_t dm_);
  size_t width() const { return m * dm; }
};

// Batch of N rows of block-softmax outputs. Every block of every row is a
// distribution: entries in [0, 1], block sums within 1e-10 of 1.
struct DiscretizedBatch {
  Matrix q;  // N x (m * dm)
  BlockLayout layout;

  size_t n() const { return q.rows; }
  static DiscretizedBatch from_matrix(Matrix q, BlockLayout layout);
};

// Per-variable marginals, p(m, d) = mean over the batch of q_i(m, d).
struct MarginalTable {
  Matrix p;  // m x dm; each row is a distribution
};

// Joint distribution of a small subset of variables, estimated from a batch.
// Entries are indexed lexicographically with the last variable fastest.
struct JointTable {
  std::vector<size_t> vars;
  size_t dm = 0;
  std::vector<double> p;

  size_t order() const { return vars.size(); }
  double at(const std::vector<size_t>& idx) const;
};

// Cross-view joint: c(m1*dm+d1, m2*dm+d2) = mean over the batch of
// q1_i(m1, d1) * q2_i(m2, d2). Rows index view 1, columns view 2; the two
// views are never swapped or symmetrized.
struct CrossJointTable {
  Matrix c;  // width x width
  BlockLayout layout;
};

// Plain forward of the block softmax, for analysis paths without a tape.
DiscretizedBatch discretize_batch(const Matrix& z, BlockLayout layout);
// Tape-backed form used by the training graph.
Var discretize_batch(Var z, BlockLayout layout);

MarginalTable estimate_marginals(const DiscretizedBatch& batch);

// Fraction of (sample, variable) blocks whose max activation exceeds the
// threshold; 1.0 means every block is saturated past it.
double onehot_fraction(const DiscretizedBatch& batch, double threshold);

// Estimates the joint over `vars`. The order is capped at 4 (the table is
// dm^r entries); repeated variable indices are rejected unless
// allow_duplicates is set. Summation runs over samples in batch order per
// entry, so results are bitwise reproducible.
JointTable estimate_joint(const DiscretizedBatch& batch,
                          const std::vector<size_t>& vars,
                          bool allow_duplicates = false);

CrossJointTable cross_joint(const DiscretizedBatch& q1,
                            const DiscretizedBatch& q2);
// Tape form: transpose(q1) * q2 / N, as one matrix of m*dm x m*dm.
Var cross_joint(Var q1, Var q2);

// CSV round trip for cross-joint tables. The header names each row/column by
// its (variable, unit) pair; values are printed with enough digits to
// round-trip a double exactly.
void write_cross_joint_csv(const CrossJointTable& table,
                           const std::string& path);
CrossJointTable read_cross_joint_csv(const std::string& path);

}  // namespace imsvd
