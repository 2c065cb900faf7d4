#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "imsvd/data.hpp"
#include "imsvd/error.hpp"

using imsvd::AttributeWorldSpec;
using imsvd::AugmentPolicy;
using imsvd::Dataset;
using imsvd::Matrix;
using imsvd::World;

namespace {

AttributeWorldSpec small_spec(uint64_t seed = 0) {
  AttributeWorldSpec s;
  s.attributes = 3;
  s.values = 4;
  s.ambient_dim = 24;
  s.train_size = 512;
  s.test_size = 128;
  s.seed = seed;
  return s;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

}  // namespace

TEST_CASE("world generation is deterministic per seed") {
  World a = imsvd::generate_world(small_spec(5));
  World b = imsvd::generate_world(small_spec(5));
  World c = imsvd::generate_world(small_spec(6));
  CHECK(bitwise_equal(a.train.x, b.train.x));
  CHECK(bitwise_equal(a.test.x, b.test.x));
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.test.labels == b.test.labels);
  CHECK_FALSE(bitwise_equal(a.train.x, c.train.x));
}

TEST_CASE("world shapes and label ranges match the spec") {
  AttributeWorldSpec s = small_spec();
  World w = imsvd::generate_world(s);
  CHECK(w.train.size() == s.train_size);
  CHECK(w.test.size() == s.test_size);
  CHECK(w.train.x.cols == s.ambient_dim);
  CHECK(w.train.label_width == s.attributes);
  CHECK(w.num_values == s.values);
  for (size_t i = 0; i < w.train.size(); ++i)
    for (size_t g = 0; g < s.attributes; ++g) {
      int v = w.train.label(i, g);
      CHECK(v >= 0);
      CHECK(v < static_cast<int>(s.values));
    }
}

TEST_CASE("attribute values are roughly uniform") {
  AttributeWorldSpec s = small_spec(1);
  s.train_size = 4096;
  World w = imsvd::generate_world(s);
  // Each value should appear ~train_size/values times; a 4-sigma binomial
  // band keeps this deterministic check far from flaking territory.
  double expect = 4096.0 / 4.0;
  double band = 4.0 * std::sqrt(4096.0 * 0.25 * 0.75);
  for (size_t g = 0; g < s.attributes; ++g) {
    std::vector<size_t> counts(s.values, 0);
    for (size_t i = 0; i < w.train.size(); ++i)
      ++counts[static_cast<size_t>(w.train.label(i, g))];
    for (size_t v = 0; v < s.values; ++v) {
      CHECK(static_cast<double>(counts[v]) > expect - band);
      CHECK(static_cast<double>(counts[v]) < expect + band);
    }
  }
}

TEST_CASE("attributes are rendered independently") {
  // Empirical pairwise label correlation should be tiny: the generator
  // draws each attribute from its own stream positions.
  AttributeWorldSpec s = small_spec(2);
  s.train_size = 8192;
  World w = imsvd::generate_world(s);
  for (size_t g1 = 0; g1 < s.attributes; ++g1)
    for (size_t g2 = g1 + 1; g2 < s.attributes; ++g2) {
      // chi-square-ish statistic against the product of marginals
      std::vector<double> joint(s.values * s.values, 0.0);
      for (size_t i = 0; i < w.train.size(); ++i)
        joint[static_cast<size_t>(w.train.label(i, g1)) * s.values +
              static_cast<size_t>(w.train.label(i, g2))] += 1.0;
      double n = static_cast<double>(w.train.size());
      double chi2 = 0.0;
      double expect = n / static_cast<double>(s.values * s.values);
      for (double c : joint) chi2 += (c - expect) * (c - expect) / expect;
      // 15 degrees of freedom; 60 is far beyond any plausible quantile.
      CHECK(chi2 < 60.0);
    }
}

TEST_CASE("zero observation noise makes equal tuples identical") {
  AttributeWorldSpec s = small_spec(3);
  s.noise_sigma = 0.0;
  World w = imsvd::generate_world(s);
  // Find two samples with the same attribute tuple and compare rows.
  bool found = false;
  for (size_t i = 0; i < w.train.size() && !found; ++i)
    for (size_t j = i + 1; j < w.train.size() && !found; ++j) {
      bool same = true;
      for (size_t g = 0; g < s.attributes; ++g)
        if (w.train.label(i, g) != w.train.label(j, g)) same = false;
      if (!same) continue;
      found = true;
      for (size_t c = 0; c < s.ambient_dim; ++c)
        CHECK(w.train.x(i, c) == w.train.x(j, c));
    }
  CHECK(found);
}

TEST_CASE("world validation rejects impossible specs") {
  AttributeWorldSpec s = small_spec();
  s.ambient_dim = s.attributes * s.values - 1;  // too narrow
  CHECK_THROWS_AS(imsvd::generate_world(s), imsvd::Error);
  s = small_spec();
  s.attributes = 0;
  CHECK_THROWS_AS(imsvd::generate_world(s), imsvd::Error);
  s = small_spec();
  s.values = 1;
  CHECK_THROWS_AS(imsvd::generate_world(s), imsvd::Error);
  s = small_spec();
  s.noise_sigma = -0.1;
  CHECK_THROWS_AS(imsvd::generate_world(s), imsvd::Error);
  s = small_spec();
  s.train_size = 0;
  CHECK_THROWS_AS(imsvd::generate_world(s), imsvd::Error);
}

TEST_CASE("an all-zero augmentation policy is the identity") {
  World w = imsvd::generate_world(small_spec(4));
  AugmentPolicy none{0.0, 0.0, 0.0};
  Matrix out = imsvd::augment(w.test.x, none, 123);
  CHECK(bitwise_equal(out, w.test.x));
}

TEST_CASE("augmentation is deterministic per seed") {
  World w = imsvd::generate_world(small_spec(4));
  AugmentPolicy policy;  // defaults: noise + dropout + scale
  Matrix a = imsvd::augment(w.test.x, policy, 9);
  Matrix b = imsvd::augment(w.test.x, policy, 9);
  Matrix c = imsvd::augment(w.test.x, policy, 10);
  CHECK(bitwise_equal(a, b));
  CHECK_FALSE(bitwise_equal(a, c));
}

TEST_CASE("dropout zeroes roughly its configured fraction") {
  Matrix ones(64, 64, 1.0);
  AugmentPolicy policy{0.0, 0.3, 0.0};
  Matrix out = imsvd::augment(ones, policy, 7);
  size_t zeros = 0;
  for (double v : out.data) {
    if (v == 0.0) ++zeros;
  }
  double frac = static_cast<double>(zeros) / static_cast<double>(out.size());
  CHECK(frac > 0.25);
  CHECK(frac < 0.35);
}

TEST_CASE("scale jitter multiplies each row by one in-range factor") {
  Matrix ones(16, 8, 1.0);
  AugmentPolicy policy{0.0, 0.0, 0.2};
  Matrix out = imsvd::augment(ones, policy, 11);
  std::set<double> factors;
  for (size_t i = 0; i < out.rows; ++i) {
    double f = out(i, 0);
    CHECK(f >= 0.8);
    CHECK(f < 1.2);
    for (size_t j = 1; j < out.cols; ++j)
      CHECK(out(i, j) == f);  // whole row shares the factor
    factors.insert(f);
  }
  CHECK(factors.size() > 1);  // rows draw independent factors
}

TEST_CASE("augmentation rejects out-of-range policies") {
  Matrix x(2, 2, 1.0);
  CHECK_THROWS_AS(imsvd::augment(x, AugmentPolicy{-0.1, 0.0, 0.0}, 0),
                  imsvd::Error);
  CHECK_THROWS_AS(imsvd::augment(x, AugmentPolicy{0.0, 1.0, 0.0}, 0),
                  imsvd::Error);
  CHECK_THROWS_AS(imsvd::augment(x, AugmentPolicy{0.0, 0.0, 1.5}, 0),
                  imsvd::Error);
}

TEST_CASE("batch stream is stateless-reproducible and covers each epoch") {
  World w = imsvd::generate_world(small_spec(8));
  AugmentPolicy policy;
  imsvd::BatchStream s1(w.train, 128, policy, 77);
  imsvd::BatchStream s2(w.train, 128, policy, 77);
  CHECK(s1.batches_per_epoch() == 4);

  imsvd::MultiviewBatch a = s1.get(2, 1);
  imsvd::MultiviewBatch b = s2.get(2, 1);
  CHECK(bitwise_equal(a.x1, b.x1));
  CHECK(bitwise_equal(a.x2, b.x2));
  CHECK(a.indices == b.indices);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(bitwise_equal(a.x1, a.x2));  // the two views differ

  // One epoch visits each sample at most once, and exactly
  // batches*batch_size samples in total.
  std::set<size_t> seen;
  for (size_t i = 0; i < s1.batches_per_epoch(); ++i) {
    imsvd::MultiviewBatch batch = s1.get(0, i);
    for (size_t idx : batch.indices) {
      CHECK(idx < w.train.size());
      CHECK(seen.insert(idx).second);  // no duplicates within an epoch
    }
  }
  CHECK(seen.size() == 512);

  // Different epochs shuffle differently.
  imsvd::MultiviewBatch e0 = s1.get(0, 0);
  imsvd::MultiviewBatch e1 = s1.get(1, 0);
  CHECK(e0.indices != e1.indices);

  CHECK_THROWS_AS(s1.get(0, 4), imsvd::Error);
  CHECK_THROWS_AS(imsvd::BatchStream(w.train, 0, policy, 0), imsvd::Error);
  CHECK_THROWS_AS(imsvd::BatchStream(w.train, 513, policy, 0), imsvd::Error);
}

TEST_CASE("labels ride along with their shuffled rows") {
  World w = imsvd::generate_world(small_spec(9));
  imsvd::BatchStream stream(w.train, 64, AugmentPolicy{0.0, 0.0, 0.0}, 3);
  imsvd::MultiviewBatch b = stream.get(0, 2);
  for (size_t i = 0; i < b.indices.size(); ++i)
    for (size_t g = 0; g < b.label_width; ++g)
      CHECK(b.labels[i * b.label_width + g] ==
            w.train.label(b.indices[i], g));
}

TEST_CASE("idx files load with scaling and reject malformed input") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "imsvd_idx_test";
  fs::create_directories(dir);
  std::string img_path = (dir / "img.idx").string();
  std::string lab_path = (dir / "lab.idx").string();

  auto be32 = [](std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<char*>(b), 4);
  };

  {
    std::ofstream f(img_path, std::ios::binary);
    be32(f, 0x00000803u);
    be32(f, 3);  // three 2x2 images
    be32(f, 2);
    be32(f, 2);
    unsigned char px[12] = {0, 255, 51, 102, 10, 20, 30, 40, 5, 5, 5, 5};
    f.write(reinterpret_cast<char*>(px), 12);
  }
  {
    std::ofstream f(lab_path, std::ios::binary);
    be32(f, 0x00000801u);
    be32(f, 3);
    unsigned char y[3] = {7, 0, 2};
    f.write(reinterpret_cast<char*>(y), 3);
  }

  Dataset d = imsvd::load_idx(img_path, lab_path);
  CHECK(d.size() == 3);
  CHECK(d.x.cols == 4);
  CHECK(d.label_width == 1);
  CHECK(d.x(0, 0) == 0.0);
  CHECK(d.x(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d.x(0, 2) == doctest::Approx(51.0 / 255.0).epsilon(1e-15));
  CHECK(d.label(0) == 7);
  CHECK(d.label(2) == 2);

  SUBCASE("label count mismatch") {
    std::string bad = (dir / "bad_lab.idx").string();
    std::ofstream f(bad, std::ios::binary);
    be32(f, 0x00000801u);
    be32(f, 2);
    unsigned char y[2] = {1, 2};
    f.write(reinterpret_cast<char*>(y), 2);
    f.close();
    CHECK_THROWS_AS(imsvd::load_idx(img_path, bad), imsvd::Error);
  }
  SUBCASE("wrong image magic") {
    std::string bad = (dir / "bad_img.idx").string();
    std::ofstream f(bad, std::ios::binary);
    be32(f, 0x00000804u);
    f.close();
    CHECK_THROWS_AS(imsvd::load_idx(bad, lab_path), imsvd::Error);
  }
  SUBCASE("truncated image payload") {
    std::string bad = (dir / "short_img.idx").string();
    std::ofstream f(bad, std::ios::binary);
    be32(f, 0x00000803u);
    be32(f, 3);
    be32(f, 2);
    be32(f, 2);
    unsigned char px[4] = {1, 2, 3, 4};  // 12 expected
    f.write(reinterpret_cast<char*>(px), 4);
    f.close();
    CHECK_THROWS_AS(imsvd::load_idx(bad, lab_path), imsvd::Error);
  }
  fs::remove_all(dir);
}

TEST_CASE("csv round-trips datasets bitwise") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "imsvd_csv_test";
  fs::create_directories(dir);
  std::string path = (dir / "d.csv").string();

  AttributeWorldSpec s = small_spec(12);
  s.train_size = 64;
  World w = imsvd::generate_world(s);
  imsvd::save_csv(w.train, path);
  Dataset back = imsvd::load_csv(path);

  CHECK(back.size() == w.train.size());
  CHECK(back.label_width == w.train.label_width);
  CHECK(back.labels == w.train.labels);
  // %.17g prints doubles exactly, so the payload must round-trip bitwise.
  CHECK(bitwise_equal(back.x, w.train.x));

  SUBCASE("malformed rows are rejected") {
    std::ofstream f(path, std::ios::trunc);
    f << "a0,x0,x1\n0,1.5\n";  // missing one feature column
    f.close();
    CHECK_THROWS_AS(imsvd::load_csv(path), imsvd::Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(imsvd::load_csv((dir / "absent.csv").string()),
                    imsvd::Error);
  }
  fs::remove_all(dir);
}
