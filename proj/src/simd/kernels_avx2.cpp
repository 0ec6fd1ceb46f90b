// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "fam/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

#include <cmath>

namespace fam::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(a, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

void affine(const double* w, const double* bias, const double* x, double* y,
            std::size_t rows, std::size_t cols) {
  std::size_t j = 0;
  // Four output rows per pass share each load of x.
  for (; j + 4 <= rows; j += 4) {
    const double* w0 = w + j * cols;
    const double* w1 = w0 + cols;
    const double* w2 = w1 + cols;
    const double* w3 = w2 + cols;
    __m256d a0 = _mm256_setzero_pd();
    __m256d a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd();
    __m256d a3 = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 4 <= cols; k += 4) {
      const __m256d xv = _mm256_loadu_pd(x + k);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w0 + k), xv, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(w1 + k), xv, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(w2 + k), xv, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(w3 + k), xv, a3);
    }
    double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; k < cols; ++k) {
      s0 += w0[k] * x[k];
      s1 += w1[k] * x[k];
      s2 += w2[k] * x[k];
      s3 += w3[k] * x[k];
    }
    y[j] = (bias ? bias[j] : 0.0) + s0;
    y[j + 1] = (bias ? bias[j + 1] : 0.0) + s1;
    y[j + 2] = (bias ? bias[j + 2] : 0.0) + s2;
    y[j + 3] = (bias ? bias[j + 3] : 0.0) + s3;
  }
  for (; j < rows; ++j) y[j] = (bias ? bias[j] : 0.0) + dot(w + j * cols, x, cols);
}

void affine_input_grad(const double* w, const double* dy, double* dx,
                       std::size_t rows, std::size_t cols) {
  std::size_t k = 0;
  // Column blocks of 4 keep the dx accumulator in a register across all rows.
  for (; k + 4 <= cols; k += 4) {
    __m256d acc = _mm256_loadu_pd(dx + k);
    for (std::size_t j = 0; j < rows; ++j) {
      acc = _mm256_fmadd_pd(_mm256_set1_pd(dy[j]), _mm256_loadu_pd(w + j * cols + k), acc);
    }
    _mm256_storeu_pd(dx + k, acc);
  }
  for (; k < cols; ++k) {
    double acc = dx[k];
    for (std::size_t j = 0; j < rows; ++j) acc += dy[j] * w[j * cols + k];
    dx[k] = acc;
  }
}

void affine_weight_grad(const double* dy, const double* x, double* dw,
                        std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < rows; ++j) {
    if (dy[j] != 0.0) axpy(dy[j], x, dw + j * cols, cols);
  }
}

void lerp(double tau, const double* src, double* dst, std::size_t n) {
  const double keep = 1.0 - tau;
  const __m256d kv = _mm256_set1_pd(keep);
  const __m256d tv = _mm256_set1_pd(tau);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    // Separate mul/add (no fma) so the result matches the scalar table bit for bit.
    const __m256d a = _mm256_mul_pd(kv, _mm256_loadu_pd(dst + i));
    const __m256d b = _mm256_mul_pd(tv, _mm256_loadu_pd(src + i));
    _mm256_storeu_pd(dst + i, _mm256_add_pd(a, b));
  }
  for (; i < n; ++i) dst[i] = keep * dst[i] + tau * src[i];
}

void relu(double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(x + i, _mm256_and_pd(v, _mm256_cmp_pd(v, zero, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad(const double* activation, double* grad, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(activation + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(grad + i, _mm256_and_pd(_mm256_loadu_pd(grad + i), mask));
  }
  for (; i < n; ++i) {
    if (!(activation[i] > 0.0)) grad[i] = 0.0;
  }
}

void adam(double* param, const double* grad, double* m, double* v, std::size_t n,
          const AdamStep& s) {
  const __m256d b1 = _mm256_set1_pd(s.beta1);
  const __m256d b2 = _mm256_set1_pd(s.beta2);
  const __m256d c1 = _mm256_set1_pd(1.0 - s.beta1);
  const __m256d c2 = _mm256_set1_pd(1.0 - s.beta2);
  const __m256d bc1 = _mm256_set1_pd(s.bias_correction1);
  const __m256d bc2 = _mm256_set1_pd(s.bias_correction2);
  const __m256d lr = _mm256_set1_pd(s.lr);
  const __m256d eps = _mm256_set1_pd(s.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(c1, g));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(c2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d m_hat = _mm256_div_pd(mv, bc1);
    const __m256d v_hat = _mm256_div_pd(vv, bc2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  const double one_minus_b1 = 1.0 - s.beta1;
  const double one_minus_b2 = 1.0 - s.beta2;
  for (; i < n; ++i) {
    const double g = grad[i];
    m[i] = s.beta1 * m[i] + one_minus_b1 * g;
    v[i] = s.beta2 * v[i] + one_minus_b2 * (g * g);
    param[i] -= s.lr * (m[i] / s.bias_correction1) / (std::sqrt(v[i] / s.bias_correction2) + s.eps);
  }
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{
      "avx2", dot,      sum_squares, axpy, scale, affine, affine_input_grad,
      affine_weight_grad, lerp,      relu, relu_grad, adam,
  };
  __builtin_cpu_init();
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
  return &table;
}

}  // namespace fam::simd

#else

namespace fam::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace fam::simd

#endif
