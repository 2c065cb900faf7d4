#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "imsvd/autodiff.hpp"
#include "imsvd/error.hpp"
#include "imsvd/model.hpp"
#include "testutil.hpp"

using imsvd::BlockLayout;
using imsvd::Matrix;
using imsvd::ModelParams;
using imsvd::Tape;
using imsvd::Var;

namespace {

ModelParams tiny_params(uint64_t seed = 0) {
  return imsvd::init_params({6, 5, 4}, {4, 8, 6}, BlockLayout(3, 2), seed);
}

Matrix rand_input(size_t n, size_t d, uint64_t seed) {
  imsvd::Rng rng(seed);
  Matrix x(n, d);
  for (double& v : x.data) v = rng.normal();
  return x;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

}  // namespace

TEST_CASE("init is deterministic per seed and varies across seeds") {
  ModelParams a = tiny_params(9), b = tiny_params(9), c = tiny_params(10);
  auto pa = a.param_list(), pb = b.param_list(), pc = c.param_list();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK(bitwise_equal(*pa[i], *pb[i]));
  bool any_diff = false;
  for (size_t i = 0; i < pa.size(); ++i)
    if (!bitwise_equal(*pa[i], *pc[i])) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("weights respect the glorot bound and biases start at zero") {
  ModelParams p = tiny_params(3);
  auto check_layer = [](const Matrix& w) {
    double bound =
        std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    double peak = 0.0;
    for (double v : w.data) {
      CHECK(std::abs(v) <= bound);
      peak = std::max(peak, std::abs(v));
    }
    CHECK(peak > 0.5 * bound);  // the draw actually spans the interval
  };
  for (const Matrix& w : p.enc_w) check_layer(w);
  for (const Matrix& w : p.proj_w) check_layer(w);
  for (const Matrix& b : p.enc_b)
    for (double v : b.data) CHECK(v == 0.0);
  for (const Matrix& b : p.proj_b)
    for (double v : b.data) CHECK(v == 0.0);
}

TEST_CASE("param list walks encoder then projector, weight before bias") {
  ModelParams p = tiny_params();
  auto list = p.param_list();
  REQUIRE(list.size() == 8);  // two encoder + two projector layers
  CHECK(list[0] == &p.enc_w[0]);
  CHECK(list[1] == &p.enc_b[0]);
  CHECK(list[2] == &p.enc_w[1]);
  CHECK(list[3] == &p.enc_b[1]);
  CHECK(list[4] == &p.proj_w[0]);
  CHECK(list[5] == &p.proj_b[0]);
  CHECK(list[6] == &p.proj_w[1]);
  CHECK(list[7] == &p.proj_b[1]);
}

TEST_CASE("a single encoder layer keeps the representation linear") {
  // encoder {2, 2} with identity weights: h must pass negatives through,
  // proving no activation is applied to the representation itself.
  ModelParams p = imsvd::init_params({2, 2}, {2, 4, 4}, BlockLayout(2, 2), 0);
  p.enc_w[0] = Matrix(2, 2);
  p.enc_w[0](0, 0) = p.enc_w[0](1, 1) = 1.0;
  Matrix x(1, 2);
  x(0, 0) = -2.0;
  x(0, 1) = 1.5;
  Matrix h = imsvd::encode(p, x);
  CHECK(h(0, 0) == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(h(0, 1) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("hidden encoder layers apply relu between layers") {
  // encoder {2, 2, 2} with identity weights everywhere: h = relu(x).
  ModelParams p =
      imsvd::init_params({2, 2, 2}, {2, 4, 4}, BlockLayout(2, 2), 0);
  for (Matrix* w : {&p.enc_w[0], &p.enc_w[1]}) {
    *w = Matrix(2, 2);
    (*w)(0, 0) = (*w)(1, 1) = 1.0;
  }
  Matrix x(1, 2);
  x(0, 0) = -3.0;
  x(0, 1) = 2.0;
  Matrix h = imsvd::encode(p, x);
  CHECK(h(0, 0) == 0.0);
  CHECK(h(0, 1) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("tape forward and plain forward agree") {
  ModelParams p = tiny_params(21);
  Matrix x = rand_input(5, 6, 22);
  Tape tape;
  imsvd::ParamLeaves leaves = imsvd::make_leaves(tape, p);
  imsvd::ForwardResult f = imsvd::forward(tape, leaves, tape.leaf(x));
  Matrix h = imsvd::encode(p, x);
  imsvd::DiscretizedBatch q = imsvd::soft_codes(p, x);
  REQUIRE(f.h.value().same_shape(h));
  for (size_t i = 0; i < h.size(); ++i)
    CHECK(f.h.value().data[i] == doctest::Approx(h.data[i]).epsilon(1e-12));
  imsvd::DiscretizedBatch qt =
      imsvd::discretize_batch(f.z.value(), p.layout);
  for (size_t i = 0; i < q.q.size(); ++i)
    CHECK(qt.q.data[i] == doctest::Approx(q.q.data[i]).epsilon(1e-12));
}

TEST_CASE("soft codes are valid block distributions") {
  ModelParams p = tiny_params(33);
  Matrix x = rand_input(9, 6, 34);
  imsvd::DiscretizedBatch q = imsvd::soft_codes(p, x);
  for (size_t i = 0; i < 9; ++i)
    for (size_t m = 0; m < 3; ++m) {
      double sum = 0.0;
      for (size_t d = 0; d < 2; ++d) {
        double v = q.q(i, m * 2 + d);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("twin forward gives identical codes for identical views") {
  ModelParams p = tiny_params(44);
  Matrix x = rand_input(4, 6, 45);
  Tape tape;
  imsvd::ParamLeaves leaves = imsvd::make_leaves(tape, p);
  imsvd::TwinResult t =
      imsvd::twin_forward(tape, leaves, p, tape.leaf(x), tape.leaf(x));
  CHECK(bitwise_equal(t.q1.value(), t.q2.value()));
  CHECK(bitwise_equal(t.h1.value(), t.h2.value()));
}

TEST_CASE("twin forward accumulates gradients from both branches") {
  ModelParams p = tiny_params(55);
  Matrix x1 = rand_input(4, 6, 56), x2 = rand_input(4, 6, 57);
  Tape tape;
  imsvd::ParamLeaves leaves = imsvd::make_leaves(tape, p);
  imsvd::TwinResult t =
      imsvd::twin_forward(tape, leaves, p, tape.leaf(x1), tape.leaf(x2));
  Var sum = imsvd::add(imsvd::total_sum(t.q1), imsvd::total_sum(t.h2));
  tape.backward(sum);
  double g = 0.0;
  for (double v : leaves.enc_w[0].grad().data) g += std::abs(v);
  CHECK(g > 0.0);
}

TEST_CASE("checkpoints round-trip bitwise with their metadata") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "imsvd_model_test";
  fs::create_directories(dir);
  std::string path = (dir / "ck.bin").string();

  ModelParams p = tiny_params(66);
  imsvd::CheckpointMeta meta;
  meta.seed_model = 66;
  meta.seed_data = 1;
  meta.seed_shuffle = 2;
  meta.variant = "oe-ti";
  meta.optimizer = "sgd_momentum";
  meta.epoch = 17;
  imsvd::save_checkpoint(p, meta, path);

  imsvd::Checkpoint ck = imsvd::load_checkpoint(path);
  auto orig = p.param_list(), loaded = ck.params.param_list();
  REQUIRE(orig.size() == loaded.size());
  for (size_t i = 0; i < orig.size(); ++i)
    CHECK(bitwise_equal(*orig[i], *loaded[i]));
  CHECK(ck.params.layout.m == 3);
  CHECK(ck.params.layout.dm == 2);
  CHECK(ck.meta.seed_model == 66);
  CHECK(ck.meta.variant == "oe-ti");
  CHECK(ck.meta.optimizer == "sgd_momentum");
  CHECK(ck.meta.epoch == 17);
  fs::remove_all(dir);
}

TEST_CASE("corrupted checkpoints are rejected") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "imsvd_model_bad";
  fs::create_directories(dir);
  std::string path = (dir / "ck.bin").string();

  ModelParams p = tiny_params(77);
  imsvd::save_checkpoint(p, imsvd::CheckpointMeta{}, path);

  SUBCASE("wrong magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("NOTMAGIC", 8);
    f.close();
    CHECK_THROWS_AS(imsvd::load_checkpoint(path), imsvd::Error);
  }
  SUBCASE("truncated payload") {
    auto size = fs::file_size(path);
    fs::resize_file(path, size / 2);
    CHECK_THROWS_AS(imsvd::load_checkpoint(path), imsvd::Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(imsvd::load_checkpoint((dir / "absent.bin").string()),
                    imsvd::Error);
  }
  fs::remove_all(dir);
}
