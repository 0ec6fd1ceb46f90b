#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fam::nn {

/// Row-major dense matrix of doubles. One row per sample in batched passes.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_row(std::span<const double> values) {
    Matrix m(1, values.size());
    std::copy(values.begin(), values.end(), m.data_.begin());
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }
  std::span<double> row(std::size_t r) { return {row_ptr(r), cols_}; }
  std::span<const double> row(std::size_t r) const { return {row_ptr(r), cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void resize(std::size_t rows, std::size_t cols, double fill = 0.0) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, fill);
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Columns [col, col + width) of `src` copied into a new matrix.
Matrix slice_cols(const Matrix& src, std::size_t col, std::size_t width);

/// Horizontal concatenation; all parts must have the same row count.
Matrix concat_cols(std::span<const Matrix* const> parts);
Matrix concat_cols(std::initializer_list<const Matrix*> parts);

bool all_finite(std::span<const double> values);

}  // namespace fam::nn
