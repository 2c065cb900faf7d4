#include "imsvd/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "imsvd/error.hpp"
#include "imsvd/rng.hpp"

namespace imsvd {

namespace {
// Stream tags so the map, the two splits and per-batch augmentations never
// share RNG sequences.
constexpr uint64_t kMapStream = 0x11;
constexpr uint64_t kTrainStream = 0x22;
constexpr uint64_t kTestStream = 0x33;
constexpr uint64_t kShuffleStream = 0x44;
constexpr uint64_t kAugStream = 0x55;

void validate(const AttributeWorldSpec& spec) {
  if (spec.attributes < 1)
    fail(ErrorKind::kContract, "world: need at least one attribute");
  if (spec.values < 2)
    fail(ErrorKind::kContract, "world: attributes need at least 2 values");
  if (spec.ambient_dim < spec.attributes * spec.values)
    fail(ErrorKind::kContract,
         "world: ambient_dim must be at least the one-hot width " +
             std::to_string(spec.attributes * spec.values));
  if (spec.noise_sigma < 0.0)
    fail(ErrorKind::kContract, "world: negative noise_sigma");
  if (spec.train_size < 1 || spec.test_size < 1)
    fail(ErrorKind::kContract, "world: splits need at least one sample");
}

Dataset sample_split(const AttributeWorldSpec& spec, const Matrix& map,
                     size_t n, uint64_t seed) {
  Dataset ds;
  ds.label_width = spec.attributes;
  ds.labels.resize(n * spec.attributes);
  ds.x = Matrix(n, spec.ambient_dim);
  Rng rng(seed);
  for (size_t i = 0; i < n; ++i) {
    // The observation before noise is the sum of one map column per
    // attribute, squashed by tanh.
    double* row = ds.x.row(i);
    for (size_t g = 0; g < spec.attributes; ++g) {
      int v = static_cast<int>(rng.below(spec.values));
      ds.labels[i * spec.attributes + g] = v;
      size_t col = g * spec.values + static_cast<size_t>(v);
      for (size_t j = 0; j < spec.ambient_dim; ++j)
        row[j] += map(j, col);
    }
    for (size_t j = 0; j < spec.ambient_dim; ++j) row[j] = std::tanh(row[j]);
    if (spec.noise_sigma > 0.0)
      for (size_t j = 0; j < spec.ambient_dim; ++j)
        row[j] += spec.noise_sigma * rng.normal();
  }
  return ds;
}
}  // namespace

World generate_world(const AttributeWorldSpec& spec) {
  validate(spec);
  Matrix map(spec.ambient_dim, spec.attributes * spec.values);
  Rng map_rng(derive_seed(spec.seed, kMapStream));

  // Every value of every attribute owns a private group of ambient
  // coordinates and a random direction of norm kValueScale inside it; the
  // map column for value v is exactly that direction. Observations then
  // light up one group per attribute. Because the values of one attribute
  // are mutually exclusive, a readout whose units each watch one value
  // group of a single attribute has exactly one active unit per sample,
  // while units pooling values of different attributes co-activate and
  // hedge, so the view-agreement term favors single-attribute readouts.
  // Disjoint supports also mean a network amplifying the features it
  // already uses can never attenuate an unused one as a side effect: every
  // value stays recoverable until something learns to read it. validate()
  // guarantees ambient_dim >= attributes * values, so every group has at
  // least one coordinate. Per-coordinate activations stay small enough
  // that tanh squashes gently instead of flattening the geometry.
  constexpr double kValueScale = 2.0;
  size_t total = spec.attributes * spec.values;
  size_t base = spec.ambient_dim / total, rem = spec.ambient_dim % total;
  size_t off = 0;
  for (size_t c = 0; c < total; ++c) {
    size_t len = base + (c < rem ? 1 : 0);
    double norm = 0.0;
    for (size_t j = off; j < off + len; ++j) {
      map(j, c) = map_rng.normal();
      norm += map(j, c) * map(j, c);
    }
    norm = std::sqrt(norm);
    if (norm < 1e-9)
      fail(ErrorKind::kNumeric, "world: degenerate random map column");
    for (size_t j = off; j < off + len; ++j) map(j, c) *= kValueScale / norm;
    off += len;
  }

  World w;
  w.num_values = spec.values;
  w.train = sample_split(spec, map, spec.train_size,
                         derive_seed(spec.seed, kTrainStream));
  w.test = sample_split(spec, map, spec.test_size,
                        derive_seed(spec.seed, kTestStream));
  return w;
}

Matrix augment(const Matrix& x, const AugmentPolicy& policy, uint64_t seed) {
  if (policy.dropout >= 1.0)
    fail(ErrorKind::kContract, "augment: dropout fraction must be below 1");
  if (policy.dropout < 0.0 || policy.noise_sigma < 0.0 || policy.scale < 0.0)
    fail(ErrorKind::kContract, "augment: negative policy magnitude");
  if (policy.scale > 1.0)
    fail(ErrorKind::kContract, "augment: scale range must stay within [0,1]");
  Matrix out = x;
  Rng rng(seed);
  for (size_t i = 0; i < out.rows; ++i) {
    double* row = out.row(i);
    if (policy.noise_sigma > 0.0)
      for (size_t j = 0; j < out.cols; ++j)
        row[j] += policy.noise_sigma * rng.normal();
    if (policy.dropout > 0.0)
      for (size_t j = 0; j < out.cols; ++j)
        if (rng.uniform() < policy.dropout) row[j] = 0.0;
    if (policy.scale > 0.0) {
      double s = rng.uniform(1.0 - policy.scale, 1.0 + policy.scale);
      for (size_t j = 0; j < out.cols; ++j) row[j] *= s;
    }
  }
  return out;
}

BatchStream::BatchStream(const Dataset& dataset, size_t batch_size,
                         const AugmentPolicy& policy, uint64_t shuffle_seed)
    : dataset_(dataset),
      batch_size_(batch_size),
      policy_(policy),
      shuffle_seed_(shuffle_seed) {
  if (batch_size == 0)
    fail(ErrorKind::kContract, "BatchStream: batch size must be positive");
  if (batch_size > dataset.size())
    fail(ErrorKind::kContract,
         "BatchStream: batch size " + std::to_string(batch_size) +
             " exceeds dataset size " + std::to_string(dataset.size()));
  per_epoch_ = dataset.size() / batch_size;
}

MultiviewBatch BatchStream::get(size_t epoch, size_t index) const {
  if (index >= per_epoch_)
    fail(ErrorKind::kContract, "BatchStream: batch index out of range");
  Rng shuffle_rng(derive_seed(shuffle_seed_, kShuffleStream, epoch));
  std::vector<size_t> perm = shuffle_rng.permutation(dataset_.size());

  MultiviewBatch b;
  b.label_width = dataset_.label_width;
  b.indices.assign(perm.begin() + static_cast<long>(index * batch_size_),
                   perm.begin() + static_cast<long>((index + 1) * batch_size_));
  Matrix rows(batch_size_, dataset_.x.cols);
  b.labels.resize(batch_size_ * dataset_.label_width);
  for (size_t i = 0; i < batch_size_; ++i) {
    const double* src = dataset_.x.row(b.indices[i]);
    std::copy(src, src + dataset_.x.cols, rows.row(i));
    for (size_t g = 0; g < dataset_.label_width; ++g)
      b.labels[i * dataset_.label_width + g] =
          dataset_.label(b.indices[i], g);
  }
  b.x1 = augment(rows, policy_,
                 derive_seed(shuffle_seed_, kAugStream, epoch * per_epoch_ + index, 1));
  b.x2 = augment(rows, policy_,
                 derive_seed(shuffle_seed_, kAugStream, epoch * per_epoch_ + index, 2));
  return b;
}

namespace {
uint32_t read_be32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    fail(ErrorKind::kFormat, "idx file truncated in header: " + path);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) |
         (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}
}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) fail(ErrorKind::kIo, "cannot open: " + images_path);
  uint32_t magic = read_be32(img, images_path);
  if (magic != 0x00000803u)
    fail(ErrorKind::kFormat,
         "bad image magic in " + images_path + ": got " +
             std::to_string(magic) + ", expected 2051 (0x00000803)");
  uint32_t n = read_be32(img, images_path);
  uint32_t rows = read_be32(img, images_path);
  uint32_t cols = read_be32(img, images_path);
  size_t pixels = size_t(n) * rows * cols;
  std::vector<unsigned char> buf(pixels);
  if (!img.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(pixels))) {
    fail(ErrorKind::kFormat,
         "idx image payload truncated in " + images_path + ": expected " +
             std::to_string(pixels) + " bytes, got " +
             std::to_string(img.gcount()));
  }

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) fail(ErrorKind::kIo, "cannot open: " + labels_path);
  uint32_t lmagic = read_be32(lab, labels_path);
  if (lmagic != 0x00000801u)
    fail(ErrorKind::kFormat,
         "bad label magic in " + labels_path + ": got " +
             std::to_string(lmagic) + ", expected 2049 (0x00000801)");
  uint32_t ln = read_be32(lab, labels_path);
  if (ln != n)
    fail(ErrorKind::kFormat,
         "idx count mismatch: " + std::to_string(n) + " images vs " +
             std::to_string(ln) + " labels");
  std::vector<unsigned char> lbuf(ln);
  if (!lab.read(reinterpret_cast<char*>(lbuf.data()),
                static_cast<std::streamsize>(ln))) {
    fail(ErrorKind::kFormat,
         "idx label payload truncated in " + labels_path + ": expected " +
             std::to_string(ln) + " bytes, got " +
             std::to_string(lab.gcount()));
  }

  Dataset ds;
  ds.label_width = 1;
  ds.x = Matrix(n, size_t(rows) * cols);
  for (size_t i = 0; i < pixels; ++i)
    ds.x.data[i] = static_cast<double>(buf[i]) / 255.0;
  ds.labels.assign(lbuf.begin(), lbuf.end());
  return ds;
}

void save_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot open for writing: " + path);
  for (size_t g = 0; g < dataset.label_width; ++g)
    out << (g ? "," : "") << 'a' << g;
  for (size_t j = 0; j < dataset.x.cols; ++j) out << ",x" << j;
  out << "\n";
  char buf[40];
  for (size_t i = 0; i < dataset.size(); ++i) {
    for (size_t g = 0; g < dataset.label_width; ++g)
      out << (g ? "," : "") << dataset.label(i, g);
    const double* row = dataset.x.row(i);
    for (size_t j = 0; j < dataset.x.cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", row[j]);
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) fail(ErrorKind::kIo, "short write: " + path);
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open: " + path);
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorKind::kFormat, "csv missing header: " + path);
  std::vector<std::string> names;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      names.push_back(cell);
    }
  }
  size_t label_cols = 0;
  while (label_cols < names.size() && names[label_cols].size() > 1 &&
         names[label_cols][0] == 'a')
    ++label_cols;
  if (label_cols == 0)
    fail(ErrorKind::kFormat,
         "csv header needs at least one a<k> label column: " + path);
  for (size_t j = label_cols; j < names.size(); ++j)
    if (names[j].empty() || names[j][0] != 'x')
      fail(ErrorKind::kFormat,
           "csv header: unrecognized column '" + names[j] + "' in " + path);
  size_t feat_cols = names.size() - label_cols;
  if (feat_cols == 0)
    fail(ErrorKind::kFormat, "csv header has no feature columns: " + path);

  std::vector<double> values;
  std::vector<int> labels;
  size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col < label_cols)
        labels.push_back(std::stoi(cell));
      else
        values.push_back(std::stod(cell));
      ++col;
    }
    if (col != names.size())
      fail(ErrorKind::kFormat, "csv row " + std::to_string(n) + " has " +
                                   std::to_string(col) + " cells, expected " +
                                   std::to_string(names.size()));
    ++n;
  }
  if (n == 0) fail(ErrorKind::kFormat, "csv has no data rows: " + path);

  Dataset ds;
  ds.label_width = label_cols;
  ds.labels = std::move(labels);
  ds.x = Matrix(n, feat_cols);
  ds.x.data = std::move(values);
  return ds;
}

}  // namespace imsvd
