#pragma once

// Dense double-precision kernels behind every network forward/backward pass
// and optimizer step. One scalar reference table plus SIMD tables; the active
// table is picked once per process from CPU features (override with the
// FAM_SIMD environment variable: "scalar", "avx2", "neon" or "auto").

#include <cstddef>
#include <string_view>

namespace fam::simd {

struct AdamStep {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
  // y[j] = bias[j] + <W[j, :], x>, W row-major (rows x cols); bias may be null
  void (*affine)(const double* w, const double* bias, const double* x, double* y,
                 std::size_t rows, std::size_t cols);
  // dx[k] += sum_j dy[j] * W[j, k]
  void (*affine_input_grad)(const double* w, const double* dy, double* dx,
                            std::size_t rows, std::size_t cols);
  // dW[j, :] += dy[j] * x
  void (*affine_weight_grad)(const double* dy, const double* x, double* dw,
                             std::size_t rows, std::size_t cols);
  // dst = (1 - tau) * dst + tau * src
  void (*lerp)(double tau, const double* src, double* dst, std::size_t n);
  void (*relu)(double* x, std::size_t n);
  // grad[i] = 0 where activation[i] <= 0
  void (*relu_grad)(const double* activation, double* grad, std::size_t n);
  void (*adam)(double* param, const double* grad, double* m, double* v,
               std::size_t n, const AdamStep& step);
};

const KernelTable& scalar_kernels();
/// Null when the binary or CPU lacks the instruction set.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

/// Table used by the library. Resolved on first call.
const KernelTable& active();

/// Force a table by name ("scalar", "avx2", "neon", "auto"). Returns false
/// if the requested table is unavailable; the active table is then unchanged.
bool select(std::string_view name);

}  // namespace fam::simd
