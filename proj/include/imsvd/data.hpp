#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imsvd/matrix.hpp"

namespace imsvd {

// Synthetic attribute world: each sample is G independent uniform
// categorical attributes, rendered to an ambient observation through a
// fixed random linear map plus tanh, plus Gaussian observation noise.
// The attributes are the ground-truth factors evaluation decodes.
struct AttributeWorldSpec {
  size_t attributes = 4;   // G
  size_t values = 8;       // values per attribute
  size_t ambient_dim = 64;
  double noise_sigma = 0.25;
  size_t train_size = 8192;
  size_t test_size = 2048;
  uint64_t seed = 0;
};

struct Dataset {
  Matrix x;                // n x ambient_dim observations
  std::vector<int> labels; // n x label_width, row-major attribute tuples
  size_t label_width = 1;

  size_t size() const { return x.rows; }
  int label(size_t i, size_t g = 0) const {
    return labels[i * label_width + g];
  }
};

struct World {
  Dataset train;
  Dataset test;
  size_t num_values = 0;  // attribute cardinality, for eval bookkeeping
};

World generate_world(const AttributeWorldSpec& spec);

// Per-sample view distortion: additive Gaussian noise, then coordinate
// dropout, then one global scale factor per sample.
struct AugmentPolicy {
  double noise_sigma = 0.1;
  double dropout = 0.2;   // fraction of coordinates zeroed
  double scale = 0.1;     // scale drawn from [1 - scale, 1 + scale)
};

Matrix augment(const Matrix& x, const AugmentPolicy& policy, uint64_t seed);

// Two augmented views of one batch; rows of x1 and x2 are index-aligned to
// the same underlying samples.
struct MultiviewBatch {
  Matrix x1, x2;
  std::vector<int> labels;
  size_t label_width = 1;
  std::vector<size_t> indices;  // source row in the dataset
};

// Epoch-wise shuffled batches, last partial batch dropped, each batch
// augmented twice with independent derived seeds. Access is stateless in
// (epoch, index), so any position of the stream can be reproduced directly.
class BatchStream {
 public:
  BatchStream(const Dataset& dataset, size_t batch_size,
              const AugmentPolicy& policy, uint64_t shuffle_seed);

  size_t batches_per_epoch() const { return per_epoch_; }
  MultiviewBatch get(size_t epoch, size_t index) const;

 private:
  const Dataset& dataset_;
  size_t batch_size_;
  AugmentPolicy policy_;
  uint64_t shuffle_seed_;
  size_t per_epoch_;
};

// IDX ingestion (the common small-image archive format): big-endian
// headers, magic 0x00000803 for images and 0x00000801 for labels; pixel
// bytes are scaled to [0, 1] and images flattened to rows.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

// CSV round trip. Header names label columns a0..a{G-1} and feature
// columns x0..x{D-1}; rows are plain decimal values.
void save_csv(const Dataset& dataset, const std::string& path);
Dataset load_csv(const std::string& path);

}  // namespace imsvd
