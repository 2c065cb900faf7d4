#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imsvd/data.hpp"
#include "imsvd/loss.hpp"
#include "imsvd/model.hpp"

namespace imsvd {

enum class OptimizerKind { kAdam, kSgdMomentum };

struct TrainConfig {
  size_t epochs = 200;
  size_t batch_size = 256;
  double base_lr = 1e-3;
  size_t warmup_epochs = 10;
  double final_lr = 1e-5;
  double weight_decay = 1e-6;

  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double momentum = 0.9;  // sgd_momentum only

  LossVariant variant = LossVariant::kFull;
  LossWeights weights;

  uint64_t seed_model = 0;
  uint64_t seed_data = 0;
  uint64_t seed_shuffle = 0;

  BlockLayout layout{4, 8};
  std::vector<size_t> encoder_hidden{64, 64};
  size_t projector_hidden = 128;
  AugmentPolicy augment;

  size_t checkpoint_every = 50;  // epochs
  std::string out_dir;           // empty: keep everything in memory
};

void validate(const TrainConfig& config);

// Learning-rate schedule: linear ramp 0 -> base_lr across the warmup steps,
// then cosine decay base_lr -> final_lr across the remaining steps. The
// boundary value is base_lr exactly from both sides.
double lr_at(size_t step, size_t total_steps, const TrainConfig& config);

// Optimizer slots, one entry per parameter in ModelParams::param_list
// order. Adam uses both slots; SGD momentum uses only the first.
struct OptState {
  std::vector<Matrix> slot1;  // adam m / sgd velocity
  std::vector<Matrix> slot2;  // adam v
  uint64_t t = 0;             // completed update count
};

OptState init_opt_state(const ModelParams& params);

struct StepResult {
  LossBreakdown loss;
  Matrix q1, q2;  // soft codes of the two views, for epoch diagnostics
};

// One optimization step: twin forward, loss, backward, decoupled weight
// decay (p <- p - lr*wd*p), then the gradient update. Throws a numeric
// error with batch statistics if the loss is non-finite.
StepResult train_step(ModelParams& params, OptState& opt,
                      const MultiviewBatch& batch, const TrainConfig& config,
                      size_t step, size_t total_steps);

struct FitResult {
  ModelParams params;
  std::vector<std::string> metric_lines;  // JSON lines, also written to disk
  std::string checkpoint_path;            // empty if out_dir was empty
  std::string metrics_path;
};

// Epoch loop with JSON-lines metrics (per-step loss terms and per-epoch
// aggregates with information measures), periodic checkpoints, and a final
// checkpoint with optimizer state for resuming. Passing resume_from
// restarts bitwise-exactly from that checkpoint's epoch boundary.
FitResult fit(const TrainConfig& config, const Dataset& train,
              const std::string& resume_from = "");

// Optimizer state sidecar used by resume; format mirrors the parameter
// checkpoint with magic "IMSVDOS1" plus the step counter.
void save_opt_state(const OptState& opt, const std::string& path);
OptState load_opt_state(const std::string& path);

const char* optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_name(const std::string& name);

}  // namespace imsvd
