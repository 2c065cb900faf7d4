#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imsvd/autodiff.hpp"
#include "imsvd/discretize.hpp"

namespace imsvd {

// Twin MLP: encoder f producing the representation h, projector g producing
// the pre-softmax embedding z. Both branches of the twin share this single
// parameter store; there is no second copy and no momentum branch.
struct ModelParams {
  std::vector<size_t> encoder_sizes;    // input, hidden..., representation
  std::vector<size_t> projector_sizes;  // representation, hidden..., m*dm
  std::vector<Matrix> enc_w, enc_b;     // b stored as 1 x out
  std::vector<Matrix> proj_w, proj_b;
  BlockLayout layout;

  size_t input_dim() const { return encoder_sizes.front(); }
  size_t repr_dim() const { return encoder_sizes.back(); }

  // All parameter matrices in checkpoint/optimizer order: encoder (w, b)
  // per layer, then projector (w, b) per layer.
  std::vector<Matrix*> param_list();
  std::vector<const Matrix*> param_list() const;
};

// Tape leaves for one training step, same order as ModelParams::param_list.
struct ParamLeaves {
  std::vector<Var> leaves;
  std::vector<Var> enc_w, enc_b, proj_w, proj_b;
};

// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases,
// deterministic per seed.
ModelParams init_params(const std::vector<size_t>& encoder_sizes,
                        const std::vector<size_t>& projector_sizes,
                        BlockLayout layout, uint64_t seed);

ParamLeaves make_leaves(Tape& tape, const ModelParams& params);

struct ForwardResult {
  Var h;  // N x repr_dim, encoder output
  Var z;  // N x (m*dm), projector output (pre-softmax)
};

// relu between encoder layers (the representation h itself is linear);
// relu between projector layers, linear projector output. Biases are
// broadcast via a ones-column matmul so the tape stays within its closed
// op set.
ForwardResult forward(Tape& tape, const ParamLeaves& leaves, Var x);

struct TwinResult {
  Var q1, q2;  // block-softmax outputs of the two views
  Var h1, h2;
};

// Same leaves applied to both views; gradients from both branches
// accumulate into the shared parameters.
TwinResult twin_forward(Tape& tape, const ParamLeaves& leaves,
                        const ModelParams& params, Var x1, Var x2);

// Plain (tape-free) forward passes for evaluation.
Matrix encode(const ModelParams& params, const Matrix& x);
DiscretizedBatch soft_codes(const ModelParams& params, const Matrix& x);

// Checkpoint sidecar content; stored as key=value text at <path>.manifest.
struct CheckpointMeta {
  uint64_t seed_model = 0;
  uint64_t seed_data = 0;
  uint64_t seed_shuffle = 0;
  std::string variant = "full";
  std::string optimizer = "adam";
  size_t epoch = 0;
};

// Binary format: magic "IMSVD001", u64 matrix count, then (rows, cols) u64
// pairs for every matrix, then row-major f64 payloads; all little-endian.
void save_checkpoint(const ModelParams& params, const CheckpointMeta& meta,
                     const std::string& path);

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace imsvd
