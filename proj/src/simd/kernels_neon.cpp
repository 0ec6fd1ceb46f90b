// AArch64 NEON variant. Advanced SIMD is mandatory on AArch64, so no runtime probe.

#include "fam/simd/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

#include <cmath>

namespace fam::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t a = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_n_f64(vld1q_f64(x + i), alpha));
  for (; i < n; ++i) x[i] *= alpha;
}

void affine(const double* w, const double* bias, const double* x, double* y,
            std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < rows; ++j) y[j] = (bias ? bias[j] : 0.0) + dot(w + j * cols, x, cols);
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
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t a = vmulq_n_f64(vld1q_f64(dst + i), keep);
    const float64x2_t b = vmulq_n_f64(vld1q_f64(src + i), tau);
    vst1q_f64(dst + i, vaddq_f64(a, b));
  }
  for (; i < n; ++i) dst[i] = keep * dst[i] + tau * src[i];
}

void relu(double* x, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmaxq_f64(vld1q_f64(x + i), zero));
  for (; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
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
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grad + i);
    const float64x2_t mv = vaddq_f64(vmulq_n_f64(vld1q_f64(m + i), s.beta1), vmulq_n_f64(g, one_minus_b1));
    const float64x2_t vv =
        vaddq_f64(vmulq_n_f64(vld1q_f64(v + i), s.beta2), vmulq_n_f64(vmulq_f64(g, g), one_minus_b2));
    vst1q_f64(m + i, mv);
    vst1q_f64(v + i, vv);
    const float64x2_t m_hat = vdivq_f64(mv, vdupq_n_f64(s.bias_correction1));
    const float64x2_t v_hat = vdivq_f64(vv, vdupq_n_f64(s.bias_correction2));
    const float64x2_t step =
        vdivq_f64(vmulq_n_f64(m_hat, s.lr), vaddq_f64(vsqrtq_f64(v_hat), vdupq_n_f64(s.eps)));
    vst1q_f64(param + i, vsubq_f64(vld1q_f64(param + i), step));
  }
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = s.beta1 * m[i] + one_minus_b1 * g;
    v[i] = s.beta2 * v[i] + one_minus_b2 * (g * g);
    param[i] -= s.lr * (m[i] / s.bias_correction1) / (std::sqrt(v[i] / s.bias_correction2) + s.eps);
  }
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{
      "neon", dot,      sum_squares, axpy, scale, affine, affine_input_grad,
      affine_weight_grad, lerp,      relu, relu_grad, adam,
  };
  return &table;
}

}  // namespace fam::simd

#else

namespace fam::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace fam::simd

#endif
