#pragma once

#include <vector>

#include "imsvd/discretize.hpp"

namespace imsvd {

// Shannon entropy in nats of a finite distribution. Entries must be
// nonnegative and sum to 1 within 1e-6. The 0*log(0) = 0 convention is
// realized by clamping the log argument at 1e-12.
double entropy(const std::vector<double>& p);
double entropy(const JointTable& joint);

// Mean joint entropy over all M-choose-r variable subsets, enumerated in
// lexicographic order. r = 1 is the mean marginal entropy.
double avg_subset_entropy(const DiscretizedBatch& batch, size_t r);

// Total correlation of order r: r * S_bar(1) - S_bar(r). Zero iff the
// variables in every r-subset are independent (at the batch level).
double total_correlation(const DiscretizedBatch& batch, size_t r);

// Pairwise mutual information S(a) + S(b) - S(a, b), clamped at 0 from
// below for reporting. Requires two distinct variables.
double mutual_information(const DiscretizedBatch& batch, size_t a, size_t b);

}  // namespace imsvd
