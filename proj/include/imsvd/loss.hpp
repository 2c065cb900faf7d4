#pragma once

#include <utility>

#include "imsvd/autodiff.hpp"
#include "imsvd/discretize.hpp"

namespace imsvd {

// Weight on the masked-entropy part of the loss. beta is retained for the
// objective-level decomposition report and is not a separate runtime knob;
// the operational loss uses lambda over the whole masked set.
struct LossWeights {
  double lambda = 1.0;
  double beta = 1.0;
};

// Ablation variants. kFull = invariance + diagonal + off-diagonal entropy;
// kDeOeTic swaps the log-inner-product invariance for a cross-entropy one.
// lambda = 0 under kFull degenerates to the invariance term alone, which is
// the collapse-diagnostic configuration.
enum class LossVariant { kDeOe, kOeTi, kDeOeTic, kFull };

// Scalar values of the assembled loss. Inactive terms of a variant are
// reported as 0, so total == ti + lambda * (de + oe) holds for every
// variant; for kDeOeTic the ti slot carries the cross-entropy term.
struct LossBreakdown {
  double total = 0.0;
  double ti = 0.0;
  double de = 0.0;
  double oe = 0.0;
};

// Tape handle plus the scalar breakdown for logging.
struct LossGraph {
  Var total;
  LossBreakdown values;
};

// Transform invariance: -(1/(N*M)) sum over samples and blocks of
// log(max(eps, <q1 block, q2 block>)), eps = 1e-8. Identical hard one-hot
// views score exactly 0; orthogonal one-hot views score -log(eps) per block.
Var ti_term(Var q1, Var q2, BlockLayout layout);

// Cross-entropy invariance: -(1/(N*M)) sum of q1 * log(max(eps, q2)),
// view 1 as target, view 2 as prediction. Not symmetric in its arguments.
Var tic_term(Var q1, Var q2, BlockLayout layout);

// Masked-entropy terms of the cross-joint matrix:
//   de over the diagonal entries of the diagonal blocks,
//   oe over every entry of the off-diagonal blocks,
// each as (1/M^2) sum of c * log(max(c, 1e-12)). Off-diagonal entries of
// diagonal blocks are excluded. Both are <= 0; minimizing them maximizes
// the selected-entry entropy.
std::pair<Var, Var> entropy_terms(Var c, BlockLayout layout);
// Analysis form over a plain table; same arithmetic, no tape.
std::pair<double, double> entropy_terms(const CrossJointTable& c);

LossGraph imsvd_loss(Var q1, Var q2, BlockLayout layout, LossWeights weights,
                     LossVariant variant);

// Mean per-block inner product between the two views (the invariance
// statistic itself, without the log). 1.0 iff all blocks agree one-hot.
double ti_mean(const DiscretizedBatch& q1, const DiscretizedBatch& q2);

const char* variant_name(LossVariant v);
LossVariant variant_from_name(const std::string& name);

}  // namespace imsvd
