#include "qsel/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "qsel/errors.hpp"

namespace qsel {

namespace {

void require_positive(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw DimensionError("matrix dimensions must be positive, got " + std::to_string(rows) +
                         "x" + std::to_string(cols));
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " +
                         shape_of(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  require_positive(rows, cols);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_positive(rows, cols);
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  require_positive(rows_, cols_);
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw DimensionError("ragged matrix literal");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_of(a) + " by " + shape_of(b));
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out_row = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* b_row = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: cannot multiply " + shape_of(a) + " by transpose of " +
                         shape_of(b));
  }
  Matrix out(a.rows(), b.rows());
  const std::size_t d = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* a_row = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* b_row = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: cannot multiply transpose of " + shape_of(a) + " by " +
                         shape_of(b));
  }
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* b_row = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      double* out_row = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  add_in_place(out, b);
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

Matrix scaled(const Matrix& a, double factor) {
  Matrix out = a;
  for (double& x : out.values()) x *= factor;
  return out;
}

void add_in_place(Matrix& into, const Matrix& other) {
  require_same_shape(into, other, "add_in_place");
  auto o = into.values();
  auto b = other.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += b[i];
}

Matrix softmax_rows(const Matrix& m, double scale) {
  if (!(scale > 0.0)) {
    throw ArgumentError("softmax_rows: scale must be positive, got " + std::to_string(scale));
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    double top = -std::numeric_limits<double>::infinity();
    for (double x : in) top = std::max(top, x / scale);
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      const double x = in[j] / scale;
      o[j] = x == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(x - top);
      total += o[j];
    }
    for (double& x : o) x /= total;
  }
  return out;
}

void apply_causal_mask(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      m(i, j) = -std::numeric_limits<double>::infinity();
}

Matrix column_mean(const Matrix& m) {
  if (m.rows() == 0) throw DimensionError("column_mean: matrix has no rows");
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += r[j];
  }
  const double inv = 1.0 / static_cast<double>(m.rows());
  for (double& x : out.values()) x *= inv;
  return out;
}

Matrix top_l_column_mean(const Matrix& k, std::size_t l) {
  if (l == 0 || l > k.rows()) {
    throw ArgumentError("top_l_column_mean: l=" + std::to_string(l) + " outside [1, " +
                        std::to_string(k.rows()) + "]");
  }
  Matrix out(1, k.cols());
  std::vector<double> column(k.rows());
  for (std::size_t d = 0; d < k.cols(); ++d) {
    for (std::size_t i = 0; i < k.rows(); ++i) column[i] = k(i, d);
    std::partial_sort(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(l),
                      column.end(), std::greater<>());
    double acc = 0.0;
    for (std::size_t i = 0; i < l; ++i) acc += column[i];
    out(0, d) = acc / static_cast<double>(l);
  }
  return out;
}

std::vector<std::size_t> top_l_indices(const Matrix& s, std::size_t l) {
  if (s.rows() != 1) throw DimensionError("top_l_indices: expected a row vector, got " + shape_of(s));
  const std::size_t n = s.cols();
  if (l == 0 || l > n) {
    throw ArgumentError("top_l_indices: l=" + std::to_string(l) + " outside [1, " +
                        std::to_string(n) + "]");
  }
  std::vector<double> scores(s.values().begin(), s.values().end());
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> picked;
  picked.reserve(l);
  for (std::size_t step = 0; step < l; ++step) {
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      if (best == n || scores[j] > scores[best]) best = j;
    }
    taken[best] = true;
    picked.push_back(best);
  }
  return picked;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " out of range for " + shape_of(m));
    }
    std::copy_n(m.row(indices[i]).begin(), m.cols(), out.row(i).begin());
  }
  return out;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count) {
  if (begin + count > m.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + shape_of(m));
  }
  Matrix out(count, m.cols());
  std::copy_n(m.row(begin).begin(), count * m.cols(), out.values().begin());
  return out;
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count) {
  if (begin + count > m.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + shape_of(m));
  }
  Matrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i)
    std::copy_n(m.row(i).begin() + static_cast<std::ptrdiff_t>(begin), count, out.row(i).begin());
  return out;
}

Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols()) {
    throw DimensionError("concat_rows: column mismatch " + shape_of(top) + " vs " +
                         shape_of(bottom));
  }
  Matrix out(top.rows() + bottom.rows(), top.cols());
  std::copy(top.values().begin(), top.values().end(), out.values().begin());
  std::copy(bottom.values().begin(), bottom.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(top.size()));
  return out;
}

double sum(const Matrix& m) {
  double acc = 0.0;
  for (double x : m.values()) acc += x;
  return acc;
}

bool all_finite(const Matrix& m) {
  for (double x : m.values())
    if (!std::isfinite(x)) return false;
  return true;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) worst = std::max(worst, std::abs(av[i] - bv[i]));
  return worst;
}

}  // namespace qsel
