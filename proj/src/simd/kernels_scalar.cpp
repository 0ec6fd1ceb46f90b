#include <cmath>

#include "fam/simd/kernels.hpp"

namespace fam::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void affine(const double* w, const double* bias, const double* x, double* y,
            std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < rows; ++j) {
    y[j] = (bias ? bias[j] : 0.0) + dot(w + j * cols, x, cols);
  }
}

void affine_input_grad(const double* w, const double* dy, double* dx,
                       std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < rows; ++j) axpy(dy[j], w + j * cols, dx, cols);
}

void affine_weight_grad(const double* dy, const double* x, double* dw,
                        std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < rows; ++j) axpy(dy[j], x, dw + j * cols, cols);
}

void lerp(double tau, const double* src, double* dst, std::size_t n) {
  const double keep = 1.0 - tau;
  for (std::size_t i = 0; i < n; ++i) dst[i] = keep * dst[i] + tau * src[i];
}

void relu(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad(const double* activation, double* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!(activation[i] > 0.0)) grad[i] = 0.0;
  }
}

void adam(double* param, const double* grad, double* m, double* v, std::size_t n,
          const AdamStep& s) {
  const double one_minus_b1 = 1.0 - s.beta1;
  const double one_minus_b2 = 1.0 - s.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = s.beta1 * m[i] + one_minus_b1 * g;
    v[i] = s.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / s.bias_correction1;
    const double v_hat = v[i] / s.bias_correction2;
    param[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      "scalar", dot,       sum_squares, axpy, scale, affine, affine_input_grad,
      affine_weight_grad,  lerp,        relu, relu_grad, adam,
  };
  return table;
}

}  // namespace fam::simd
