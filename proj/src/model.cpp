#include "imsvd/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "imsvd/error.hpp"
#include "imsvd/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace imsvd {

namespace {
constexpr char kMagic[8] = {'I', 'M', 'S', 'V', 'D', '0', '0', '1'};

void check_sizes(const std::vector<size_t>& sizes, const char* which) {
  if (sizes.size() < 2)
    fail(ErrorKind::kContract,
         std::string(which) + ": need at least input and output widths");
  for (size_t s : sizes)
    if (s < 1)
      fail(ErrorKind::kContract, std::string(which) + ": zero-width layer");
}

Matrix glorot(size_t fan_in, size_t fan_out, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  return w;
}

// One dense layer on the tape; bias broadcast through a ones column.
Var dense(Tape& tape, Var x, Var w, Var b) {
  Var ones = tape.leaf(Matrix(x.rows(), 1, 1.0));
  return add(matmul(x, w), matmul(ones, b));
}

// Plain mirror of dense(); identical arithmetic per element.
Matrix dense_plain(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = matmul(x, w);
  for (size_t i = 0; i < y.rows; ++i) {
    double* r = y.row(i);
    for (size_t j = 0; j < y.cols; ++j) r[j] += b(0, j);
  }
  return y;
}

void relu_plain(Matrix& x) {
  for (double& v : x.data) v = v > 0.0 ? v : 0.0;
}
}  // namespace

std::vector<Matrix*> ModelParams::param_list() {
  std::vector<Matrix*> out;
  for (size_t i = 0; i < enc_w.size(); ++i) {
    out.push_back(&enc_w[i]);
    out.push_back(&enc_b[i]);
  }
  for (size_t i = 0; i < proj_w.size(); ++i) {
    out.push_back(&proj_w[i]);
    out.push_back(&proj_b[i]);
  }
  return out;
}

std::vector<const Matrix*> ModelParams::param_list() const {
  std::vector<const Matrix*> out;
  for (size_t i = 0; i < enc_w.size(); ++i) {
    out.push_back(&enc_w[i]);
    out.push_back(&enc_b[i]);
  }
  for (size_t i = 0; i < proj_w.size(); ++i) {
    out.push_back(&proj_w[i]);
    out.push_back(&proj_b[i]);
  }
  return out;
}

ModelParams init_params(const std::vector<size_t>& encoder_sizes,
                        const std::vector<size_t>& projector_sizes,
                        BlockLayout layout, uint64_t seed) {
  check_sizes(encoder_sizes, "init_params: encoder");
  check_sizes(projector_sizes, "init_params: projector");
  if (encoder_sizes.back() != projector_sizes.front())
    fail(ErrorKind::kContract,
         "init_params: projector input width must equal encoder output");
  if (projector_sizes.back() != layout.width())
    fail(ErrorKind::kContract,
         "init_params: projector output width " +
             std::to_string(projector_sizes.back()) +
             " does not match layout width " +
             std::to_string(layout.width()));

  ModelParams p;
  p.encoder_sizes = encoder_sizes;
  p.projector_sizes = projector_sizes;
  p.layout = layout;
  Rng rng(seed);
  for (size_t i = 0; i + 1 < encoder_sizes.size(); ++i) {
    p.enc_w.push_back(glorot(encoder_sizes[i], encoder_sizes[i + 1], rng));
    p.enc_b.push_back(Matrix(1, encoder_sizes[i + 1]));
  }
  for (size_t i = 0; i + 1 < projector_sizes.size(); ++i) {
    p.proj_w.push_back(glorot(projector_sizes[i], projector_sizes[i + 1], rng));
    p.proj_b.push_back(Matrix(1, projector_sizes[i + 1]));
  }
  return p;
}

ParamLeaves make_leaves(Tape& tape, const ModelParams& params) {
  ParamLeaves l;
  for (size_t i = 0; i < params.enc_w.size(); ++i) {
    l.enc_w.push_back(tape.leaf(params.enc_w[i]));
    l.enc_b.push_back(tape.leaf(params.enc_b[i]));
    l.leaves.push_back(l.enc_w.back());
    l.leaves.push_back(l.enc_b.back());
  }
  for (size_t i = 0; i < params.proj_w.size(); ++i) {
    l.proj_w.push_back(tape.leaf(params.proj_w[i]));
    l.proj_b.push_back(tape.leaf(params.proj_b[i]));
    l.leaves.push_back(l.proj_w.back());
    l.leaves.push_back(l.proj_b.back());
  }
  return l;
}

ForwardResult forward(Tape& tape, const ParamLeaves& leaves, Var x) {
  if (leaves.enc_w.empty() || leaves.proj_w.empty())
    fail(ErrorKind::kContract, "forward: empty parameter set");
  if (x.cols() != leaves.enc_w[0].rows())
    fail(ErrorKind::kShape,
         "forward: input width " + std::to_string(x.cols()) +
             " does not match first layer " +
             std::to_string(leaves.enc_w[0].rows()));
  Var a = x;
  for (size_t i = 0; i < leaves.enc_w.size(); ++i) {
    a = dense(tape, a, leaves.enc_w[i], leaves.enc_b[i]);
    if (i + 1 < leaves.enc_w.size()) a = relu(a);
  }
  Var h = a;
  for (size_t i = 0; i + 1 < leaves.proj_w.size(); ++i)
    a = relu(dense(tape, a, leaves.proj_w[i], leaves.proj_b[i]));
  Var z = dense(tape, a, leaves.proj_w.back(), leaves.proj_b.back());
  return ForwardResult{h, z};
}

TwinResult twin_forward(Tape& tape, const ParamLeaves& leaves,
                        const ModelParams& params, Var x1, Var x2) {
  if (!x1.value().same_shape(x2.value()))
    fail(ErrorKind::kShape, "twin_forward: view shapes differ");
  ForwardResult f1 = forward(tape, leaves, x1);
  ForwardResult f2 = forward(tape, leaves, x2);
  Var q1 = discretize_batch(f1.z, params.layout);
  Var q2 = discretize_batch(f2.z, params.layout);
  return TwinResult{q1, q2, f1.h, f2.h};
}

Matrix encode(const ModelParams& params, const Matrix& x) {
  if (x.cols != params.input_dim())
    fail(ErrorKind::kShape, "encode: input width mismatch");
  Matrix a = x;
  for (size_t i = 0; i < params.enc_w.size(); ++i) {
    a = dense_plain(a, params.enc_w[i], params.enc_b[i]);
    if (i + 1 < params.enc_w.size()) relu_plain(a);
  }
  return a;
}

DiscretizedBatch soft_codes(const ModelParams& params, const Matrix& x) {
  Matrix a = encode(params, x);
  for (size_t i = 0; i + 1 < params.proj_w.size(); ++i) {
    a = dense_plain(a, params.proj_w[i], params.proj_b[i]);
    relu_plain(a);
  }
  a = dense_plain(a, params.proj_w.back(), params.proj_b.back());
  return discretize_batch(a, params.layout);
}

namespace {
void write_u64(std::ofstream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint64_t read_u64(std::ifstream& in, const std::string& path) {
  uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    fail(ErrorKind::kFormat, "checkpoint truncated: " + path);
  return v;
}
}  // namespace

void save_checkpoint(const ModelParams& params, const CheckpointMeta& meta,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot open for writing: " + path);
  out.write(kMagic, sizeof kMagic);
  auto mats = params.param_list();
  write_u64(out, mats.size());
  for (const Matrix* m : mats) {
    write_u64(out, m->rows);
    write_u64(out, m->cols);
  }
  for (const Matrix* m : mats)
    out.write(reinterpret_cast<const char*>(m->data.data()),
              static_cast<std::streamsize>(m->size() * sizeof(double)));
  if (!out) fail(ErrorKind::kIo, "short write: " + path);
  out.close();

  std::ofstream man(path + ".manifest");
  if (!man) fail(ErrorKind::kIo, "cannot open for writing: " + path + ".manifest");
  man << "m=" << params.layout.m << "\n"
      << "dm=" << params.layout.dm << "\n"
      << "encoder_layers=" << params.enc_w.size() << "\n"
      << "projector_layers=" << params.proj_w.size() << "\n"
      << "seed_model=" << meta.seed_model << "\n"
      << "seed_data=" << meta.seed_data << "\n"
      << "seed_shuffle=" << meta.seed_shuffle << "\n"
      << "variant=" << meta.variant << "\n"
      << "optimizer=" << meta.optimizer << "\n"
      << "epoch=" << meta.epoch << "\n";
  if (!man) fail(ErrorKind::kIo, "short write: " + path + ".manifest");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open: " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) ||
      std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    fail(ErrorKind::kFormat,
         "bad checkpoint magic in " + path + " (expected IMSVD001)");
  uint64_t count = read_u64(in, path);
  if (count == 0 || count % 2 != 0)
    fail(ErrorKind::kFormat,
         "checkpoint matrix count " + std::to_string(count) +
             " is not a positive even number: " + path);
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
                 static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      fail(ErrorKind::kFormat,
           "checkpoint truncated reading a " + shape_str(m) +
               " payload: " + path);
    }
    mats.push_back(std::move(m));
  }

  std::ifstream man(path + ".manifest");
  if (!man) fail(ErrorKind::kIo, "missing manifest: " + path + ".manifest");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(man, line)) {
    size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"m", "dm", "encoder_layers", "projector_layers"})
    if (!kv.count(key))
      fail(ErrorKind::kFormat,
           "manifest missing key '" + std::string(key) + "': " + path);

  size_t enc_layers = std::stoul(kv["encoder_layers"]);
  size_t proj_layers = std::stoul(kv["projector_layers"]);
  if (2 * (enc_layers + proj_layers) != count)
    fail(ErrorKind::kFormat, "manifest layer counts disagree with " + path);

  Checkpoint ck;
  ck.params.layout = BlockLayout(std::stoul(kv["m"]), std::stoul(kv["dm"]));
  for (size_t i = 0; i < enc_layers; ++i) {
    ck.params.enc_w.push_back(std::move(mats[2 * i]));
    ck.params.enc_b.push_back(std::move(mats[2 * i + 1]));
  }
  for (size_t i = 0; i < proj_layers; ++i) {
    ck.params.proj_w.push_back(std::move(mats[2 * enc_layers + 2 * i]));
    ck.params.proj_b.push_back(std::move(mats[2 * enc_layers + 2 * i + 1]));
  }
  for (size_t i = 0; i < enc_layers; ++i) {
    const Matrix& w = ck.params.enc_w[i];
    const Matrix& b = ck.params.enc_b[i];
    if (b.rows != 1 || b.cols != w.cols)
      fail(ErrorKind::kFormat, "checkpoint bias shape mismatch: " + path);
    if (i == 0) ck.params.encoder_sizes.push_back(w.rows);
    ck.params.encoder_sizes.push_back(w.cols);
  }
  for (size_t i = 0; i < proj_layers; ++i) {
    const Matrix& w = ck.params.proj_w[i];
    const Matrix& b = ck.params.proj_b[i];
    if (b.rows != 1 || b.cols != w.cols)
      fail(ErrorKind::kFormat, "checkpoint bias shape mismatch: " + path);
    if (i == 0) ck.params.projector_sizes.push_back(w.rows);
    ck.params.projector_sizes.push_back(w.cols);
  }
  if (ck.params.projector_sizes.back() != ck.params.layout.width())
    fail(ErrorKind::kFormat,
         "checkpoint projector width disagrees with layout: " + path);
  for (const Matrix* m : ck.params.param_list())
    if (!all_finite(*m))
      fail(ErrorKind::kFormat, "checkpoint holds non-finite values: " + path);

  if (kv.count("seed_model")) ck.meta.seed_model = std::stoull(kv["seed_model"]);
  if (kv.count("seed_data")) ck.meta.seed_data = std::stoull(kv["seed_data"]);
  if (kv.count("seed_shuffle"))
    ck.meta.seed_shuffle = std::stoull(kv["seed_shuffle"]);
  if (kv.count("variant")) ck.meta.variant = kv["variant"];
  if (kv.count("optimizer")) ck.meta.optimizer = kv["optimizer"];
  if (kv.count("epoch")) ck.meta.epoch = std::stoul(kv["epoch"]);
  return ck;
}

}  // namespace imsvd
