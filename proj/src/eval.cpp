#include "imsvd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

#include "imsvd/error.hpp"
#include "imsvd/infotheory.hpp"
#include "imsvd/rng.hpp"

namespace imsvd {

namespace {
constexpr size_t kEvalBatch = 256;
constexpr uint64_t kEvalViewStream = 0x66;
constexpr uint64_t kGradCheckStream = 0x77;

Matrix take_rows(const Matrix& x, size_t start, size_t count) {
  Matrix out(count, x.cols);
  std::copy(x.row(start), x.row(start) + count * x.cols, out.data.data());
  return out;
}

// Full-set soft codes, computed in fixed-size chunks so evaluation memory
// stays bounded regardless of the dataset size. Row-wise arithmetic makes
// the chunked result identical to a single pass.
DiscretizedBatch codes_batched(const ModelParams& params, const Matrix& x) {
  Matrix q(x.rows, params.layout.width());
  for (size_t start = 0; start < x.rows; start += kEvalBatch) {
    size_t count = std::min(kEvalBatch, x.rows - start);
    DiscretizedBatch chunk =
        soft_codes(params, take_rows(x, start, count));
    std::copy(chunk.q.data.begin(), chunk.q.data.end(), q.row(start));
  }
  return DiscretizedBatch::from_matrix(std::move(q), params.layout);
}
}  // namespace

FixedPointReport fixed_point_report(const ModelParams& params,
                                    const Dataset& data,
                                    const AugmentPolicy& policy,
                                    uint64_t seed) {
  if (data.size() == 0) fail(ErrorKind::kContract, "empty evaluation set");
  FixedPointReport r;

  DiscretizedBatch clean = codes_batched(params, data.x);
  r.onehot_frac_090 = onehot_fraction(clean, 0.9);
  r.onehot_frac_099 = onehot_fraction(clean, 0.99);
  r.marginal_entropy_ratio =
      avg_subset_entropy(clean, 1) /
      std::log(static_cast<double>(params.layout.dm));

  size_t m = params.layout.m;
  if (m >= 2) {
    size_t pairs = 0;
    for (size_t a = 0; a < m; ++a)
      for (size_t b = a + 1; b < m; ++b) {
        double mi = mutual_information(clean, a, b);
        r.max_pairwise_mi = std::max(r.max_pairwise_mi, mi);
        r.mean_pairwise_mi += mi;
        ++pairs;
      }
    r.mean_pairwise_mi /= static_cast<double>(pairs);

    CrossJointTable joint = cross_joint(clean, clean);
    double flat = 1.0 / static_cast<double>(params.layout.dm *
                                            params.layout.dm);
    size_t dm = params.layout.dm;
    for (size_t i = 0; i < joint.c.rows; ++i)
      for (size_t j = 0; j < joint.c.cols; ++j)
        if (i / dm != j / dm)
          r.offdiag_uniformity =
              std::max(r.offdiag_uniformity, std::abs(joint.c(i, j) - flat));
  }

  DiscretizedBatch v1 = codes_batched(
      params, augment(data.x, policy, derive_seed(seed, kEvalViewStream, 1)));
  DiscretizedBatch v2 = codes_batched(
      params, augment(data.x, policy, derive_seed(seed, kEvalViewStream, 2)));
  r.ti_mean = ti_mean(v1, v2);
  return r;
}

std::string report_json(const FixedPointReport& r) {
  return nlohmann::json{{"onehot_frac_090", r.onehot_frac_090},
                        {"onehot_frac_099", r.onehot_frac_099},
                        {"marginal_entropy_ratio", r.marginal_entropy_ratio},
                        {"max_pairwise_mi", r.max_pairwise_mi},
                        {"mean_pairwise_mi", r.mean_pairwise_mi},
                        {"ti_mean", r.ti_mean},
                        {"offdiag_uniformity", r.offdiag_uniformity}}
      .dump();
}

double knn_accuracy(const Matrix& train_x, const std::vector<int>& train_y,
                    const Matrix& test_x, const std::vector<int>& test_y,
                    size_t k) {
  if (k < 1) fail(ErrorKind::kContract, "knn: k must be at least 1");
  if (k > train_x.rows)
    fail(ErrorKind::kContract, "knn: k exceeds the training-set size");
  if (train_x.cols != test_x.cols)
    fail(ErrorKind::kShape, "knn: dimension mismatch between splits");
  if (train_y.size() != train_x.rows || test_y.size() != test_x.rows)
    fail(ErrorKind::kShape, "knn: label count does not match rows");

  size_t correct = 0;
  std::vector<std::pair<double, size_t>> dist(train_x.rows);
  for (size_t t = 0; t < test_x.rows; ++t) {
    const double* query = test_x.row(t);
    for (size_t i = 0; i < train_x.rows; ++i) {
      const double* row = train_x.row(i);
      double d2 = 0.0;
      for (size_t j = 0; j < train_x.cols; ++j) {
        double diff = query[j] - row[j];
        d2 += diff * diff;
      }
      dist[i] = {d2, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k),
                      dist.end());

    // label -> (votes, summed Euclidean distance)
    std::map<int, std::pair<size_t, double>> votes;
    for (size_t i = 0; i < k; ++i) {
      auto& v = votes[train_y[dist[i].second]];
      v.first += 1;
      v.second += std::sqrt(dist[i].first);
    }
    int best = votes.begin()->first;
    std::pair<size_t, double> score = votes.begin()->second;
    for (const auto& [label, v] : votes)
      if (v.first > score.first ||
          (v.first == score.first && v.second < score.second)) {
        best = label;
        score = v;
      }
    if (best == test_y[t]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_x.rows);
}

namespace {
size_t class_count(const std::vector<int>& y, const char* who) {
  int hi = -1;
  for (int v : y) {
    if (v < 0) fail(ErrorKind::kContract, std::string(who) + ": negative label");
    hi = std::max(hi, v);
  }
  return static_cast<size_t>(hi) + 1;
}
}  // namespace

double linear_probe(const Matrix& train_x, const std::vector<int>& train_y,
                    const Matrix& test_x, const std::vector<int>& test_y,
                    const ProbeConfig& config) {
  if (train_y.size() != train_x.rows || test_y.size() != test_x.rows)
    fail(ErrorKind::kShape, "probe: label count does not match rows");
  if (train_x.cols != test_x.cols)
    fail(ErrorKind::kShape, "probe: dimension mismatch between splits");
  size_t classes = class_count(train_y, "probe");
  bool multi = false;
  for (int v : train_y)
    if (v != train_y[0]) multi = true;
  if (!multi)
    fail(ErrorKind::kContract, "probe: labels contain a single class");

  size_t n = train_x.rows, d = train_x.cols;
  Matrix w(d, classes), b(1, classes);
  Matrix grad(n, classes);
  for (size_t iter = 0; iter < config.iterations; ++iter) {
    Matrix logits = matmul(train_x, w);
    for (size_t i = 0; i < n; ++i) {
      double* row = logits.row(i);
      double mx = row[0] + b.data[0];
      for (size_t c = 0; c < classes; ++c) {
        row[c] += b.data[c];
        mx = std::max(mx, row[c]);
      }
      double sum = 0.0;
      for (size_t c = 0; c < classes; ++c) {
        row[c] = std::exp(row[c] - mx);
        sum += row[c];
      }
      double inv = 1.0 / sum;
      double* g = grad.row(i);
      for (size_t c = 0; c < classes; ++c) g[c] = row[c] * inv;
      g[train_y[i]] -= 1.0;
    }
    Matrix gw = matmul(transpose(train_x), grad);
    double scale = config.lr / static_cast<double>(n);
    for (size_t j = 0; j < w.size(); ++j) w.data[j] -= scale * gw.data[j];
    for (size_t i = 0; i < n; ++i)
      for (size_t c = 0; c < classes; ++c)
        b.data[c] -= scale * grad(i, c);
  }

  Matrix logits = matmul(test_x, w);
  size_t correct = 0;
  for (size_t i = 0; i < test_x.rows; ++i) {
    const double* row = logits.row(i);
    size_t best = 0;
    double hi = row[0] + b.data[0];
    for (size_t c = 1; c < classes; ++c)
      if (row[c] + b.data[c] > hi) {
        hi = row[c] + b.data[c];
        best = c;
      }
    if (static_cast<int>(best) == test_y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_x.rows);
}

double code_collision_fraction(const ModelParams& params,
                               const Dataset& data) {
  if (data.size() == 0) fail(ErrorKind::kContract, "empty evaluation set");
  DiscretizedBatch codes = codes_batched(params, data.x);
  size_t m = params.layout.m, dm = params.layout.dm;

  struct Group {
    std::vector<int> label;
    bool mixed = false;
    size_t count = 0;
  };
  std::map<std::vector<int>, Group> groups;
  std::vector<int> code(m), label(data.label_width);
  for (size_t i = 0; i < data.size(); ++i) {
    const double* row = codes.q.row(i);
    for (size_t v = 0; v < m; ++v) {
      size_t best = 0;
      for (size_t u = 1; u < dm; ++u)
        if (row[v * dm + u] > row[v * dm + best]) best = u;
      code[v] = static_cast<int>(best);
    }
    for (size_t g = 0; g < data.label_width; ++g) label[g] = data.label(i, g);
    Group& grp = groups[code];
    if (grp.count == 0)
      grp.label = label;
    else if (grp.label != label)
      grp.mixed = true;
    grp.count += 1;
  }
  size_t colliding = 0;
  for (const auto& [_, grp] : groups)
    if (grp.mixed) colliding += grp.count;
  return static_cast<double>(colliding) / static_cast<double>(data.size());
}

void export_joint(const ModelParams& params, const Dataset& data,
                  const std::string& path) {
  DiscretizedBatch codes = codes_batched(params, data.x);
  write_cross_joint_csv(cross_joint(codes, codes), path);

  std::string stem = path;
  if (stem.size() >= 4 && stem.substr(stem.size() - 4) == ".csv")
    stem.resize(stem.size() - 4);
  std::string mpath = stem + "_marginals.csv";
  MarginalTable marg = estimate_marginals(codes);
  std::ofstream out(mpath);
  if (!out) fail(ErrorKind::kIo, "cannot open for writing: " + mpath);
  for (size_t d = 0; d < marg.p.cols; ++d) out << ",d" << d;
  out << "\n";
  char buf[40];
  for (size_t v = 0; v < marg.p.rows; ++v) {
    out << "m" << v;
    for (size_t d = 0; d < marg.p.cols; ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", marg.p(v, d));
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) fail(ErrorKind::kIo, "short write: " + mpath);
}

void export_embeddings(const ModelParams& params, const Dataset& data,
                       const std::string& path) {
  Matrix h(data.size(), params.repr_dim());
  for (size_t start = 0; start < data.size(); start += kEvalBatch) {
    size_t count = std::min(kEvalBatch, data.size() - start);
    Matrix chunk = encode(params, take_rows(data.x, start, count));
    std::copy(chunk.data.begin(), chunk.data.end(), h.row(start));
  }
  Dataset view;
  view.x = std::move(h);
  view.labels = data.labels;
  view.label_width = data.label_width;
  save_csv(view, path);
}

double model_loss_grad_error(BlockLayout layout, size_t n, size_t input_dim,
                             const std::vector<size_t>& encoder_hidden,
                             size_t projector_hidden, LossVariant variant,
                             const LossWeights& weights, uint64_t seed,
                             double h) {
  std::vector<size_t> enc{input_dim};
  enc.insert(enc.end(), encoder_hidden.begin(), encoder_hidden.end());
  std::vector<size_t> proj{enc.back(), projector_hidden, layout.width()};
  ModelParams proto = init_params(enc, proj, layout, seed);

  Rng rng(derive_seed(seed, kGradCheckStream));
  Matrix x1(n, input_dim), x2(n, input_dim);
  for (double& v : x1.data) v = rng.normal();
  for (double& v : x2.data) v = rng.normal();

  std::vector<Matrix> start;
  for (const Matrix* p : proto.param_list()) start.push_back(*p);

  auto with_params = [&](const std::vector<Matrix>& ps) {
    ModelParams m = proto;
    auto mats = m.param_list();
    for (size_t i = 0; i < mats.size(); ++i) *mats[i] = ps[i];
    return m;
  };
  auto build = [&](Tape& tape, const ModelParams& m) {
    ParamLeaves leaves = make_leaves(tape, m);
    TwinResult twin =
        twin_forward(tape, leaves, m, tape.leaf(x1), tape.leaf(x2));
    return std::pair<LossGraph, ParamLeaves>(
        imsvd_loss(twin.q1, twin.q2, layout, weights, variant),
        std::move(leaves));
  };

  auto value_fn = [&](const std::vector<Matrix>& ps) {
    Tape tape;
    ModelParams m = with_params(ps);
    return build(tape, m).first.values.total;
  };
  auto grad_fn = [&](const std::vector<Matrix>& ps) {
    Tape tape;
    ModelParams m = with_params(ps);
    auto [loss, leaves] = build(tape, m);
    tape.backward(loss.total);
    std::vector<Matrix> grads;
    grads.reserve(leaves.leaves.size());
    for (const Var& v : leaves.leaves) grads.push_back(v.grad());
    return grads;
  };
  return grad_check(value_fn, grad_fn, start, h);
}

}  // namespace imsvd
