#include "imsvd/loss.hpp"

#include <cmath>
#include <string>

#include "imsvd/error.hpp"

namespace imsvd {

namespace {
constexpr double kTiEps = 1e-8;
constexpr double kPlogpEps = 1e-12;

void require_views(Var q1, Var q2, BlockLayout layout, const char* op) {
  if (!q1.value().same_shape(q2.value()))
    fail(ErrorKind::kShape, std::string(op) + ": view shapes differ");
  if (q1.cols() != layout.width())
    fail(ErrorKind::kShape,
         std::string(op) + ": views do not match the block layout");
}

// D x M indicator: column m selects the units of block m.
Matrix block_indicator(BlockLayout layout) {
  Matrix s(layout.width(), layout.m);
  for (size_t j = 0; j < s.rows; ++j) s(j, j / layout.dm) = 1.0;
  return s;
}
}  // namespace

Var ti_term(Var q1, Var q2, BlockLayout layout) {
  require_views(q1, q2, layout, "ti_term");
  size_t n = q1.rows();
  Var prod = hadamard(q1, q2);
  Var inner = matmul(prod, q1.tape->leaf(block_indicator(layout)));
  Var logs = log_eps(inner, kTiEps);
  return scale(total_sum(logs),
               -1.0 / static_cast<double>(n * layout.m));
}

Var tic_term(Var q1, Var q2, BlockLayout layout) {
  require_views(q1, q2, layout, "tic_term");
  size_t n = q1.rows();
  Var ce = hadamard(q1, log_eps(q2, kTiEps));
  return scale(total_sum(ce), -1.0 / static_cast<double>(n * layout.m));
}

std::pair<Var, Var> entropy_terms(Var c, BlockLayout layout) {
  size_t width = layout.width();
  if (c.rows() != width || c.cols() != width)
    fail(ErrorKind::kContract,
         "entropy_terms: cross-joint is " + shape_str(c.value()) +
             ", layout wants " + std::to_string(width) + " square");
  Matrix de_mask(width, width);
  Matrix oe_mask(width, width);
  for (size_t i = 0; i < width; ++i) {
    for (size_t j = 0; j < width; ++j) {
      if (i / layout.dm != j / layout.dm)
        oe_mask(i, j) = 1.0;
      else if (i == j)
        de_mask(i, j) = 1.0;
      // same block, different units: excluded from both terms
    }
  }
  Var plogp = hadamard(c, log_eps(c, kPlogpEps));
  double inv_m2 = 1.0 / static_cast<double>(layout.m * layout.m);
  Var de = scale(total_sum(hadamard(c.tape->leaf(std::move(de_mask)), plogp)),
                 inv_m2);
  Var oe = scale(total_sum(hadamard(c.tape->leaf(std::move(oe_mask)), plogp)),
                 inv_m2);
  return {de, oe};
}

std::pair<double, double> entropy_terms(const CrossJointTable& table) {
  size_t width = table.layout.width();
  if (table.c.rows != width || table.c.cols != width)
    fail(ErrorKind::kContract, "entropy_terms: table/layout mismatch");
  double de = 0.0, oe = 0.0;
  for (size_t i = 0; i < width; ++i) {
    for (size_t j = 0; j < width; ++j) {
      double v = table.c(i, j);
      double term = v * std::log(v > kPlogpEps ? v : kPlogpEps);
      if (i / table.layout.dm != j / table.layout.dm)
        oe += term;
      else if (i == j)
        de += term;
    }
  }
  double inv_m2 = 1.0 / static_cast<double>(table.layout.m * table.layout.m);
  return {de * inv_m2, oe * inv_m2};
}

LossGraph imsvd_loss(Var q1, Var q2, BlockLayout layout, LossWeights weights,
                     LossVariant variant) {
  require_views(q1, q2, layout, "imsvd_loss");
  if (weights.lambda < 0.0)
    fail(ErrorKind::kContract, "imsvd_loss: lambda must be nonnegative");

  Var c = cross_joint(q1, q2);
  auto [de, oe] = entropy_terms(c, layout);

  LossGraph out;
  LossBreakdown& v = out.values;
  switch (variant) {
    case LossVariant::kFull: {
      Var ti = ti_term(q1, q2, layout);
      out.total = add(ti, scale(add(de, oe), weights.lambda));
      v.ti = ti.value()(0, 0);
      v.de = de.value()(0, 0);
      v.oe = oe.value()(0, 0);
      break;
    }
    case LossVariant::kDeOe: {
      out.total = scale(add(de, oe), weights.lambda);
      v.de = de.value()(0, 0);
      v.oe = oe.value()(0, 0);
      break;
    }
    case LossVariant::kOeTi: {
      Var ti = ti_term(q1, q2, layout);
      out.total = add(ti, scale(oe, weights.lambda));
      v.ti = ti.value()(0, 0);
      v.oe = oe.value()(0, 0);
      break;
    }
    case LossVariant::kDeOeTic: {
      Var tic = tic_term(q1, q2, layout);
      out.total = add(tic, scale(add(de, oe), weights.lambda));
      v.ti = tic.value()(0, 0);
      v.de = de.value()(0, 0);
      v.oe = oe.value()(0, 0);
      break;
    }
  }
  v.total = out.total.value()(0, 0);
  return out;
}

double ti_mean(const DiscretizedBatch& q1, const DiscretizedBatch& q2) {
  if (!q1.q.same_shape(q2.q) || q1.layout.m != q2.layout.m ||
      q1.layout.dm != q2.layout.dm)
    fail(ErrorKind::kShape, "ti_mean: view shapes differ");
  size_t n = q1.n(), m = q1.layout.m, dm = q1.layout.dm;
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double* a = q1.q.row(i);
    const double* b = q2.q.row(i);
    for (size_t blk = 0; blk < m; ++blk) {
      double dot = 0.0;
      for (size_t d = 0; d < dm; ++d)
        dot += a[blk * dm + d] * b[blk * dm + d];
      acc += dot;
    }
  }
  return acc / static_cast<double>(n * m);
}

const char* variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::kDeOe:
      return "de-oe";
    case LossVariant::kOeTi:
      return "oe-ti";
    case LossVariant::kDeOeTic:
      return "de-oe-tic";
    case LossVariant::kFull:
      return "full";
  }
  return "full";
}

LossVariant variant_from_name(const std::string& name) {
  if (name == "de-oe") return LossVariant::kDeOe;
  if (name == "oe-ti") return LossVariant::kOeTi;
  if (name == "de-oe-tic") return LossVariant::kDeOeTic;
  if (name == "full") return LossVariant::kFull;
  fail(ErrorKind::kContract,
       "unknown loss variant '" + name +
           "' (expected de-oe, oe-ti, de-oe-tic, or full)");
}

}  // namespace imsvd
