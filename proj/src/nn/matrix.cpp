#include "fam/nn/matrix.hpp"

#include <cmath>

#include "fam/errors.hpp"

namespace fam::nn {

Matrix slice_cols(const Matrix& src, std::size_t col, std::size_t width) {
  if (col + width > src.cols()) throw InputError("slice_cols: column range out of bounds");
  Matrix out(src.rows(), width);
  for (std::size_t r = 0; r < src.rows(); ++r) {
    std::copy_n(src.row_ptr(r) + col, width, out.row_ptr(r));
  }
  return out;
}

Matrix concat_cols(std::span<const Matrix* const> parts) {
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool first = true;
  for (const Matrix* p : parts) {
    if (first) {
      rows = p->rows();
      first = false;
    } else if (p->rows() != rows) {
      throw InputError("concat_cols: row count mismatch");
    }
    cols += p->cols();
  }
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.row_ptr(r);
    for (const Matrix* p : parts) {
      dst = std::copy_n(p->row_ptr(r), p->cols(), dst);
    }
  }
  return out;
}

Matrix concat_cols(std::initializer_list<const Matrix*> parts) {
  return concat_cols(std::span<const Matrix* const>(parts.begin(), parts.size()));
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace fam::nn
