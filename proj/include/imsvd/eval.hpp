#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imsvd/data.hpp"
#include "imsvd/loss.hpp"
#include "imsvd/model.hpp"

namespace imsvd {

// How close the learned codes sit to the loss's optimum structure: one-hot
// blocks, uniform per-variable marginals, pairwise-independent variables,
// and view-invariant assignments.
struct FixedPointReport {
  double onehot_frac_090 = 0.0;  // blocks whose max activation exceeds 0.9
  double onehot_frac_099 = 0.0;
  double marginal_entropy_ratio = 0.0;  // mean marginal entropy / ln(dm)
  double max_pairwise_mi = 0.0;         // nats
  double mean_pairwise_mi = 0.0;
  double ti_mean = 0.0;  // mean per-block inner product across the two views
  double offdiag_uniformity = 0.0;  // max |entry - 1/dm^2|, off-diag blocks
};

// Computes q over the full set in fixed-size batches. Marginal, MI and
// one-hot statistics use the clean inputs; ti_mean pairs two augmented
// views drawn deterministically from `seed`.
FixedPointReport fixed_point_report(const ModelParams& params,
                                    const Dataset& data,
                                    const AugmentPolicy& policy,
                                    uint64_t seed);

// One-line JSON rendering of the report.
std::string report_json(const FixedPointReport& r);

// Majority vote among the k nearest training rows by Euclidean distance.
// Vote ties break toward the candidate with the smaller summed distance,
// then the lower label. Throws if k is 0 or exceeds the training size.
double knn_accuracy(const Matrix& train_x, const std::vector<int>& train_y,
                    const Matrix& test_x, const std::vector<int>& test_y,
                    size_t k);

struct ProbeConfig {
  size_t iterations = 500;
  double lr = 0.1;
};

// Multinomial logistic regression on frozen embeddings, trained from zero
// initialization by full-batch gradient descent with no regularization.
// Labels must contain at least two classes. Returns test accuracy.
double linear_probe(const Matrix& train_x, const std::vector<int>& train_y,
                    const Matrix& test_x, const std::vector<int>& test_y,
                    const ProbeConfig& config = {});

// Hard-assigns every block to its argmax unit and reports the fraction of
// samples whose code tuple is shared with a sample carrying a different
// label tuple. 1.0 on fully collapsed codes; ~0 when codes separate labels.
double code_collision_fraction(const ModelParams& params,
                               const Dataset& data);

// Writes the cross-joint matrix of the clean codes against themselves to
// `path`, plus the per-variable marginals beside it (".csv" replaced by
// "_marginals.csv").
void export_joint(const ModelParams& params, const Dataset& data,
                  const std::string& path);

// Encoder outputs with their label columns, in the dataset CSV format.
void export_embeddings(const ModelParams& params, const Dataset& data,
                       const std::string& path);

// End-to-end finite-difference check of the loss gradient through the twin
// model: random parameters and batch from `seed`, central differences with
// step h. Returns the max relative error over every parameter element.
double model_loss_grad_error(BlockLayout layout, size_t n, size_t input_dim,
                             const std::vector<size_t>& encoder_hidden,
                             size_t projector_hidden, LossVariant variant,
                             const LossWeights& weights, uint64_t seed,
                             double h = 1e-5);

}  // namespace imsvd
