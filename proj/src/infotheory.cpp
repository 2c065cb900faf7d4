#include "imsvd/infotheory.hpp"

#include <cmath>
#include <string>

#include "imsvd/error.hpp"

namespace imsvd {

namespace {
double entropy_of(const double* p, size_t n) {
  double s = 0.0;
  double h = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double v = p[i];
    if (v < 0.0)
      fail(ErrorKind::kContract, "entropy: negative probability");
    s += v;
    h -= v * std::log(v > 1e-12 ? v : 1e-12);
  }
  if (std::fabs(s - 1.0) > 1e-6)
    fail(ErrorKind::kContract,
         "entropy: distribution sums to " + std::to_string(s));
  return h;
}

// Advances a k-subset of [0, m) to its lexicographic successor.
bool next_subset(std::vector<size_t>& sub, size_t m) {
  size_t k = sub.size();
  for (size_t j = k; j-- > 0;) {
    if (sub[j] < m - (k - j)) {
      ++sub[j];
      for (size_t t = j + 1; t < k; ++t) sub[t] = sub[t - 1] + 1;
      return true;
    }
  }
  return false;
}
}  // namespace

double entropy(const std::vector<double>& p) {
  if (p.empty()) fail(ErrorKind::kContract, "entropy: empty distribution");
  return entropy_of(p.data(), p.size());
}

double entropy(const JointTable& joint) {
  return entropy_of(joint.p.data(), joint.p.size());
}

double avg_subset_entropy(const DiscretizedBatch& batch, size_t r) {
  size_t m = batch.layout.m;
  if (r < 1 || r > m)
    fail(ErrorKind::kContract,
         "avg_subset_entropy: order must be in [1, " + std::to_string(m) +
             "]");
  std::vector<size_t> sub(r);
  for (size_t j = 0; j < r; ++j) sub[j] = j;
  double total = 0.0;
  size_t count = 0;
  do {
    total += entropy(estimate_joint(batch, sub));
    ++count;
  } while (next_subset(sub, m));
  return total / static_cast<double>(count);
}

double total_correlation(const DiscretizedBatch& batch, size_t r) {
  double s1 = avg_subset_entropy(batch, 1);
  double sr = avg_subset_entropy(batch, r);
  return static_cast<double>(r) * s1 - sr;
}

double mutual_information(const DiscretizedBatch& batch, size_t a, size_t b) {
  if (a == b)
    fail(ErrorKind::kContract,
         "mutual_information: variables must be distinct");
  double sa = entropy(estimate_joint(batch, {a}));
  double sb = entropy(estimate_joint(batch, {b}));
  double sab = entropy(estimate_joint(batch, {a, b}));
  double mi = sa + sb - sab;
  return mi > 0.0 ? mi : 0.0;
}

}  // namespace imsvd
