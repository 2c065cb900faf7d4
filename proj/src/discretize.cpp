#include "imsvd/discretize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "imsvd/error.hpp"

namespace imsvd {

BlockLayout::BlockLayout(size_t m_, size_t dm_) : m(m_), dm(dm_) {
  if (m < 1) fail(ErrorKind::kContract, "BlockLayout: need at least 1 block");
  if (dm < 2)
    fail(ErrorKind::kContract, "BlockLayout: blocks need at least 2 units");
}

DiscretizedBatch DiscretizedBatch::from_matrix(Matrix q, BlockLayout layout) {
  if (q.cols != layout.width())
    fail(ErrorKind::kShape, "DiscretizedBatch: expected " +
                                std::to_string(layout.width()) +
                                " columns, got " + std::to_string(q.cols));
  if (q.rows == 0)
    fail(ErrorKind::kContract, "DiscretizedBatch: empty batch");
  for (size_t i = 0; i < q.rows; ++i) {
    const double* r = q.row(i);
    for (size_t blk = 0; blk < layout.m; ++blk) {
      double s = 0.0;
      for (size_t d = 0; d < layout.dm; ++d) {
        double v = r[blk * layout.dm + d];
        if (!(v >= 0.0) || v > 1.0 + 1e-10)
          fail(ErrorKind::kContract,
               "DiscretizedBatch: entry outside [0, 1] at row " +
                   std::to_string(i) + " block " + std::to_string(blk));
        s += v;
      }
      if (std::fabs(s - 1.0) > 1e-10)
        fail(ErrorKind::kContract,
             "DiscretizedBatch: block sum " + std::to_string(s) +
                 " at row " + std::to_string(i) + " block " +
                 std::to_string(blk));
    }
  }
  return DiscretizedBatch{std::move(q), layout};
}

DiscretizedBatch discretize_batch(const Matrix& z, BlockLayout layout) {
  // A NaN logit would survive the block-sum validation (every comparison
  // against NaN is false), so reject it here.
  for (double v : z.data)
    if (!std::isfinite(v))
      fail(ErrorKind::kNumeric, "discretize: non-finite logits");
  Tape tape;
  Var q = block_softmax(tape.leaf(z), layout.m, layout.dm);
  return DiscretizedBatch{q.value(), layout};
}

Var discretize_batch(Var z, BlockLayout layout) {
  return block_softmax(z, layout.m, layout.dm);
}

MarginalTable estimate_marginals(const DiscretizedBatch& batch) {
  const Matrix& q = batch.q;
  Matrix p(batch.layout.m, batch.layout.dm);
  for (size_t i = 0; i < q.rows; ++i) {
    const double* r = q.row(i);
    for (size_t j = 0; j < q.cols; ++j) p.data[j] += r[j];
  }
  double inv = 1.0 / static_cast<double>(q.rows);
  for (double& v : p.data) v *= inv;
  return MarginalTable{std::move(p)};
}

double onehot_fraction(const DiscretizedBatch& batch, double threshold) {
  const Matrix& q = batch.q;
  size_t dm = batch.layout.dm;
  size_t hits = 0;
  for (size_t i = 0; i < q.rows; ++i) {
    const double* row = q.row(i);
    for (size_t m = 0; m < batch.layout.m; ++m) {
      double mx = row[m * dm];
      for (size_t d = 1; d < dm; ++d) mx = std::max(mx, row[m * dm + d]);
      if (mx > threshold) ++hits;
    }
  }
  return static_cast<double>(hits) /
         static_cast<double>(q.rows * batch.layout.m);
}

double JointTable::at(const std::vector<size_t>& idx) const {
  if (idx.size() != vars.size())
    fail(ErrorKind::kShape, "JointTable::at: index arity mismatch");
  size_t flat = 0;
  for (size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= dm) fail(ErrorKind::kContract, "JointTable::at: unit oob");
    flat = flat * dm + idx[j];
  }
  return p[flat];
}

JointTable estimate_joint(const DiscretizedBatch& batch,
                          const std::vector<size_t>& vars,
                          bool allow_duplicates) {
  size_t r = vars.size();
  if (r < 1) fail(ErrorKind::kContract, "estimate_joint: empty variable set");
  if (r > 4)
    fail(ErrorKind::kCapacity,
         "estimate_joint: order " + std::to_string(r) +
             " exceeds the supported maximum of 4");
  for (size_t j = 0; j < r; ++j) {
    if (vars[j] >= batch.layout.m)
      fail(ErrorKind::kContract, "estimate_joint: variable index oob");
    for (size_t k = j + 1; k < r; ++k)
      if (vars[j] == vars[k] && !allow_duplicates)
        fail(ErrorKind::kContract,
             "estimate_joint: duplicate variable " + std::to_string(vars[j]) +
                 " (pass allow_duplicates to permit this)");
  }

  size_t dm = batch.layout.dm;
  size_t entries = 1;
  for (size_t j = 0; j < r; ++j) entries *= dm;

  JointTable t;
  t.vars = vars;
  t.dm = dm;
  t.p.assign(entries, 0.0);

  const Matrix& q = batch.q;
  double inv = 1.0 / static_cast<double>(q.rows);
  std::vector<size_t> idx(r, 0);
  for (size_t flat = 0; flat < entries; ++flat) {
    // Decode flat -> (d_1..d_r), last variable fastest.
    size_t rem = flat;
    for (size_t j = r; j-- > 0;) {
      idx[j] = rem % dm;
      rem /= dm;
    }
    double acc = 0.0;
    for (size_t i = 0; i < q.rows; ++i) {
      const double* row = q.row(i);
      double prod = 1.0;
      for (size_t j = 0; j < r; ++j) prod *= row[vars[j] * dm + idx[j]];
      acc += prod;
    }
    t.p[flat] = acc * inv;
  }
  return t;
}

CrossJointTable cross_joint(const DiscretizedBatch& q1,
                            const DiscretizedBatch& q2) {
  if (q1.layout.m != q2.layout.m || q1.layout.dm != q2.layout.dm)
    fail(ErrorKind::kShape, "cross_joint: layout mismatch");
  if (q1.n() != q2.n())
    fail(ErrorKind::kShape, "cross_joint: batch sizes differ");
  Matrix c = matmul(transpose(q1.q), q2.q);
  double inv = 1.0 / static_cast<double>(q1.n());
  for (double& v : c.data) v *= inv;
  return CrossJointTable{std::move(c), q1.layout};
}

Var cross_joint(Var q1, Var q2) {
  if (!q1.value().same_shape(q2.value()))
    fail(ErrorKind::kShape, "cross_joint: view shapes differ");
  return scale(matmul(transpose(q1), q2),
               1.0 / static_cast<double>(q1.rows()));
}

void write_cross_joint_csv(const CrossJointTable& table,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot open for writing: " + path);
  size_t dm = table.layout.dm;
  out << "";
  for (size_t j = 0; j < table.c.cols; ++j)
    out << ",m" << j / dm << "_d" << j % dm;
  out << "\n";
  char buf[40];
  for (size_t i = 0; i < table.c.rows; ++i) {
    out << "m" << i / dm << "_d" << i % dm;
    for (size_t j = 0; j < table.c.cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", table.c(i, j));
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) fail(ErrorKind::kIo, "short write: " + path);
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

// Parses "m<k>_d<j>" labels; returns (k, j).
std::pair<size_t, size_t> parse_unit_label(const std::string& s) {
  size_t us = s.find("_d");
  if (s.size() < 4 || s[0] != 'm' || us == std::string::npos)
    fail(ErrorKind::kFormat, "cross-joint csv: bad unit label '" + s + "'");
  return {std::stoul(s.substr(1, us - 1)), std::stoul(s.substr(us + 2))};
}
}  // namespace

CrossJointTable read_cross_joint_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open: " + path);
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorKind::kFormat, "cross-joint csv: missing header in " + path);
  auto header = split_csv_line(line);
  if (header.size() < 2)
    fail(ErrorKind::kFormat, "cross-joint csv: header too short");
  size_t width = header.size() - 1;
  size_t max_m = 0, max_d = 0;
  for (size_t j = 1; j < header.size(); ++j) {
    auto [m, d] = parse_unit_label(header[j]);
    max_m = std::max(max_m, m);
    max_d = std::max(max_d, d);
  }
  BlockLayout layout(max_m + 1, max_d + 1);
  if (layout.width() != width)
    fail(ErrorKind::kFormat, "cross-joint csv: header labels do not tile " +
                                 std::to_string(width) + " columns");
  Matrix c(width, width);
  for (size_t i = 0; i < width; ++i) {
    if (!std::getline(in, line))
      fail(ErrorKind::kFormat, "cross-joint csv: expected " +
                                   std::to_string(width) + " rows, got " +
                                   std::to_string(i));
    auto cells = split_csv_line(line);
    if (cells.size() != width + 1)
      fail(ErrorKind::kFormat,
           "cross-joint csv: row " + std::to_string(i) + " has " +
               std::to_string(cells.size()) + " cells");
    for (size_t j = 0; j < width; ++j) c(i, j) = std::stod(cells[j + 1]);
  }
  return CrossJointTable{std::move(c), layout};
}

}  // namespace imsvd
