#include "imsvd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "imsvd/error.hpp"
#include "imsvd/infotheory.hpp"

namespace imsvd {

namespace {
constexpr char kOptMagic[8] = {'I', 'M', 'S', 'V', 'D', 'O', 'S', '1'};

std::string batch_stats(const Matrix& x) {
  double lo = x.data.empty() ? 0.0 : x.data[0];
  double hi = lo, sum = 0.0;
  for (double v : x.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  return "min=" + std::to_string(lo) + " max=" + std::to_string(hi) +
         " mean=" + std::to_string(sum / static_cast<double>(x.size()));
}

}  // namespace

void validate(const TrainConfig& config) {
  if (config.epochs > 0 && config.warmup_epochs >= config.epochs)
    fail(ErrorKind::kContract, "config: warmup_epochs must be below epochs");
  if (config.base_lr <= 0.0)
    fail(ErrorKind::kContract, "config: base_lr must be positive");
  if (config.final_lr < 0.0 || config.final_lr > config.base_lr)
    fail(ErrorKind::kContract,
         "config: final_lr must lie in [0, base_lr]");
  if (config.batch_size < 2)
    fail(ErrorKind::kContract,
         "config: batch size must be at least 2 (distribution estimation "
         "needs multiple samples)");
  if (config.weight_decay < 0.0)
    fail(ErrorKind::kContract, "config: negative weight decay");
  if (config.weights.lambda < 0.0)
    fail(ErrorKind::kContract, "config: lambda must be nonnegative");
  if (config.checkpoint_every < 1)
    fail(ErrorKind::kContract, "config: checkpoint_every must be >= 1");
  if (config.encoder_hidden.empty())
    fail(ErrorKind::kContract, "config: encoder needs hidden layers");
}

double lr_at(size_t step, size_t total_steps, const TrainConfig& config) {
  if (total_steps == 0 || step >= total_steps)
    fail(ErrorKind::kContract, "lr_at: step out of range");
  size_t warmup =
      config.epochs == 0
          ? 0
          : (total_steps / config.epochs) * config.warmup_epochs;
  if (step < warmup)
    return config.base_lr * static_cast<double>(step) /
           static_cast<double>(warmup);
  size_t span = total_steps - 1 - warmup;
  double progress =
      span == 0 ? 1.0
                : static_cast<double>(step - warmup) /
                      static_cast<double>(span);
  return config.final_lr +
         0.5 * (config.base_lr - config.final_lr) *
             (1.0 + std::cos(3.14159265358979323846 * progress));
}

OptState init_opt_state(const ModelParams& params) {
  OptState s;
  for (const Matrix* p : params.param_list()) {
    s.slot1.push_back(Matrix(p->rows, p->cols));
    s.slot2.push_back(Matrix(p->rows, p->cols));
  }
  return s;
}

StepResult train_step(ModelParams& params, OptState& opt,
                      const MultiviewBatch& batch, const TrainConfig& config,
                      size_t step, size_t total_steps) {
  double lr = lr_at(step, total_steps, config);

  // The relu forward maps NaN to 0, so a bad input batch would train
  // silently instead of tripping the non-finite loss guard below.
  for (const Matrix* x : {&batch.x1, &batch.x2})
    for (double v : x->data)
      if (!std::isfinite(v))
        fail(ErrorKind::kNumeric, "train_step: non-finite input batch");

  Tape tape;
  ParamLeaves leaves = make_leaves(tape, params);
  Var x1 = tape.leaf(batch.x1);
  Var x2 = tape.leaf(batch.x2);
  TwinResult twin = twin_forward(tape, leaves, params, x1, x2);
  LossGraph loss =
      imsvd_loss(twin.q1, twin.q2, params.layout, config.weights,
                 config.variant);
  if (!std::isfinite(loss.values.total))
    fail(ErrorKind::kNumeric,
         "train_step: non-finite loss at step " + std::to_string(step) +
             "; view1 " + batch_stats(batch.x1) + "; view2 " +
             batch_stats(batch.x2));
  tape.backward(loss.total);

  auto mats = params.param_list();
  if (config.weight_decay > 0.0)
    for (Matrix* p : mats)
      for (double& v : p->data) v -= lr * config.weight_decay * v;

  opt.t += 1;
  if (config.optimizer == OptimizerKind::kAdam) {
    double b1 = config.adam_beta1, b2 = config.adam_beta2;
    double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.t));
    double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.t));
    for (size_t i = 0; i < mats.size(); ++i) {
      const Matrix& g = leaves.leaves[i].grad();
      Matrix& m = opt.slot1[i];
      Matrix& v = opt.slot2[i];
      Matrix& p = *mats[i];
      for (size_t j = 0; j < p.size(); ++j) {
        double gj = g.data[j];
        m.data[j] = b1 * m.data[j] + (1.0 - b1) * gj;
        v.data[j] = b2 * v.data[j] + (1.0 - b2) * gj * gj;
        double mhat = m.data[j] / c1;
        double vhat = v.data[j] / c2;
        p.data[j] -= lr * mhat / (std::sqrt(vhat) + config.adam_eps);
      }
    }
  } else {
    for (size_t i = 0; i < mats.size(); ++i) {
      const Matrix& g = leaves.leaves[i].grad();
      Matrix& vel = opt.slot1[i];
      Matrix& p = *mats[i];
      for (size_t j = 0; j < p.size(); ++j) {
        vel.data[j] = config.momentum * vel.data[j] + g.data[j];
        p.data[j] -= lr * vel.data[j];
      }
    }
  }
  return StepResult{loss.values, twin.q1.value(), twin.q2.value()};
}

namespace {
void write_u64(std::ofstream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint64_t read_u64(std::ifstream& in, const std::string& path) {
  uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    fail(ErrorKind::kFormat, "optimizer state truncated: " + path);
  return v;
}

void write_matrices(std::ofstream& out, const std::vector<Matrix>& mats) {
  write_u64(out, mats.size());
  for (const Matrix& m : mats) {
    write_u64(out, m.rows);
    write_u64(out, m.cols);
  }
  for (const Matrix& m : mats)
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
}

std::vector<Matrix> read_matrices(std::ifstream& in,
                                  const std::string& path) {
  uint64_t count = read_u64(in, path);
  std::vector<std::pair<uint64_t, uint64_t>> dims(count);
  for (auto& d : dims) {
    d.first = read_u64(in, path);
    d.second = read_u64(in, path);
  }
  std::vector<Matrix> mats;
  mats.reserve(count);
  for (auto& d : dims) {
    Matrix m(d.first, d.second);
    if (!in.read(reinterpret_cast<char*>(m.data.data()),
                 static_cast<std::streamsize>(m.size() * sizeof(double))))
      fail(ErrorKind::kFormat, "optimizer state truncated: " + path);
    mats.push_back(std::move(m));
  }
  return mats;
}
}  // namespace

void save_opt_state(const OptState& opt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot open for writing: " + path);
  out.write(kOptMagic, sizeof kOptMagic);
  write_u64(out, opt.t);
  write_matrices(out, opt.slot1);
  write_matrices(out, opt.slot2);
  if (!out) fail(ErrorKind::kIo, "short write: " + path);
}

OptState load_opt_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open: " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) ||
      std::string(magic, 8) != std::string(kOptMagic, 8))
    fail(ErrorKind::kFormat, "bad optimizer-state magic in " + path);
  OptState s;
  s.t = read_u64(in, path);
  s.slot1 = read_matrices(in, path);
  s.slot2 = read_matrices(in, path);
  return s;
}

FitResult fit(const TrainConfig& config, const Dataset& train,
              const std::string& resume_from) {
  validate(config);

  std::vector<size_t> enc_sizes{train.x.cols};
  enc_sizes.insert(enc_sizes.end(), config.encoder_hidden.begin(),
                   config.encoder_hidden.end());
  std::vector<size_t> proj_sizes{enc_sizes.back(), config.projector_hidden,
                                 config.layout.width()};

  ModelParams params;
  OptState opt;
  size_t start_epoch = 0;
  if (resume_from.empty()) {
    params = init_params(enc_sizes, proj_sizes, config.layout,
                         config.seed_model);
    opt = init_opt_state(params);
  } else {
    Checkpoint ck = load_checkpoint(resume_from);
    params = std::move(ck.params);
    opt = load_opt_state(resume_from + ".opt");
    start_epoch = ck.meta.epoch;
    if (start_epoch > config.epochs)
      fail(ErrorKind::kContract,
           "fit: checkpoint is past the configured epoch count");
  }

  BatchStream stream(train, config.batch_size, config.augment,
                     config.seed_shuffle);
  size_t per_epoch = stream.batches_per_epoch();
  size_t total_steps = config.epochs * per_epoch;

  FitResult result;
  std::ofstream metrics;
  bool to_disk = !config.out_dir.empty();
  if (to_disk) {
    std::filesystem::create_directories(config.out_dir);
    result.metrics_path = config.out_dir + "/metrics.jsonl";
    metrics.open(result.metrics_path,
                 resume_from.empty() ? std::ios::trunc : std::ios::app);
    if (!metrics)
      fail(ErrorKind::kIo, "cannot open for writing: " + result.metrics_path);
  }
  auto emit = [&](const nlohmann::json& j) {
    std::string line = j.dump();
    result.metric_lines.push_back(line);
    if (to_disk) {
      metrics << line << "\n";
      if (!metrics)
        fail(ErrorKind::kIo, "short write: " + result.metrics_path);
    }
  };

  CheckpointMeta meta;
  meta.seed_model = config.seed_model;
  meta.seed_data = config.seed_data;
  meta.seed_shuffle = config.seed_shuffle;
  meta.variant = variant_name(config.variant);
  meta.optimizer = optimizer_name(config.optimizer);

  auto save_at = [&](const std::string& name, size_t epoch_done) {
    if (!to_disk) return std::string();
    meta.epoch = epoch_done;
    std::string path = config.out_dir + "/" + name;
    save_checkpoint(params, meta, path);
    save_opt_state(opt, path + ".opt");
    return path;
  };

  for (size_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    LossBreakdown sum;
    StepResult last;
    for (size_t idx = 0; idx < per_epoch; ++idx) {
      size_t step = epoch * per_epoch + idx;
      last = train_step(params, opt, stream.get(epoch, idx), config, step,
                        total_steps);
      sum.total += last.loss.total;
      sum.ti += last.loss.ti;
      sum.de += last.loss.de;
      sum.oe += last.loss.oe;
      emit(nlohmann::json{{"type", "step"},
                          {"step", step},
                          {"total", last.loss.total},
                          {"ti", last.loss.ti},
                          {"de", last.loss.de},
                          {"oe", last.loss.oe}});
    }
    double inv = 1.0 / static_cast<double>(per_epoch);

    DiscretizedBatch b1 =
        DiscretizedBatch::from_matrix(last.q1, config.layout);
    DiscretizedBatch b2 =
        DiscretizedBatch::from_matrix(last.q2, config.layout);
    double s1 = avg_subset_entropy(b1, 1);
    double c2 = 0.0, mi_max = 0.0, mi_mean = 0.0;
    if (config.layout.m >= 2) {
      c2 = total_correlation(b1, 2);
      size_t pairs = 0;
      for (size_t a = 0; a < config.layout.m; ++a)
        for (size_t b = a + 1; b < config.layout.m; ++b) {
          double mi = mutual_information(b1, a, b);
          mi_max = std::max(mi_max, mi);
          mi_mean += mi;
          ++pairs;
        }
      mi_mean /= static_cast<double>(pairs);
    }
    emit(nlohmann::json{
        {"type", "epoch"},
        {"epoch", epoch},
        {"lr", lr_at(epoch * per_epoch, total_steps, config)},
        {"total", sum.total * inv},
        {"ti", sum.ti * inv},
        {"de", sum.de * inv},
        {"oe", sum.oe * inv},
        {"s1", s1},
        {"c2", c2},
        {"mi_max", mi_max},
        {"mi_mean", mi_mean},
        {"onehot090", onehot_fraction(b1, 0.9)},
        {"ti_mean", ti_mean(b1, b2)}});

    if ((epoch + 1) % config.checkpoint_every == 0 &&
        epoch + 1 < config.epochs)
      save_at("checkpoint_ep" + std::to_string(epoch + 1) + ".bin",
              epoch + 1);
  }

  result.checkpoint_path = save_at("checkpoint_final.bin", config.epochs);
  result.params = std::move(params);
  return result;
}

const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd_momentum";
}

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  fail(ErrorKind::kContract,
       "unknown optimizer '" + name + "' (expected adam or sgd_momentum)");
}

}  // namespace imsvd
