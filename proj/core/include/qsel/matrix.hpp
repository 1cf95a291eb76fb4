#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace qsel {

/// Dense row-major matrix of doubles.
///
/// A default-constructed Matrix is 0x0 and only serves as a placeholder;
/// every arithmetic routine below requires positive dimensions.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// "RxC", used in error messages.
std::string shape_of(const Matrix& m);

Matrix transpose(const Matrix& m);

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T, without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double factor);
void add_in_place(Matrix& into, const Matrix& other);

/// Row-wise softmax of m / scale with per-row max subtraction.
/// Entries equal to -infinity receive zero weight.
Matrix softmax_rows(const Matrix& m, double scale);

/// Sets m(i, j) = -infinity for every j > i.
void apply_causal_mask(Matrix& m);

/// 1 x cols matrix of column means.
Matrix column_mean(const Matrix& m);

/// 1 x cols matrix whose d-th entry is the mean of the l largest entries of
/// column d. This is the per-column maximum of (1/l) * sum over all l-subsets.
Matrix top_l_column_mean(const Matrix& k, std::size_t l);

/// Indices of the l greatest entries of a 1 x L row, in the order produced by
/// repeated argmax with masking. Ties go to the lowest index.
std::vector<std::size_t> top_l_indices(const Matrix& s, std::size_t l);

/// Rows of m at the given indices, in index-list order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

/// Row block [begin, begin + count).
Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count);

/// Column block [begin, begin + count).
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count);

Matrix concat_rows(const Matrix& top, const Matrix& bottom);

double sum(const Matrix& m);
bool all_finite(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace qsel
