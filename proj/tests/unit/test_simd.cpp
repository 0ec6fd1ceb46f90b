#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fam/rng.hpp"
#include "fam/simd/kernels.hpp"

namespace fam::simd {
namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

// FMA and reassociated sums may differ from the scalar reference by a few ulps.
void expect_close(const std::vector<double>& a, const std::vector<double>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_NEAR(a[i], b[i], 1e-12 * (1.0 + std::abs(a[i]))) << "index " << i;
  }
}

class SimdEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    simd_ = avx2_kernels();
    if (!simd_) simd_ = neon_kernels();
    if (!simd_) GTEST_SKIP() << "no SIMD table on this machine";
  }
  const KernelTable& ref_ = scalar_kernels();
  const KernelTable* simd_ = nullptr;
};

// Sizes straddle the vector width and the row-block sizes.
const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 65, 100};

TEST_F(SimdEquivalence, ReductionsAndVectorOps) {
  Rng rng(1);
  for (std::size_t n : kSizes) {
    const auto a = random_vec(n, rng);
    const auto b = random_vec(n, rng);
    EXPECT_NEAR(ref_.dot(a.data(), b.data(), n), simd_->dot(a.data(), b.data(), n), 1e-12 * n);
    EXPECT_NEAR(ref_.sum_squares(a.data(), n), simd_->sum_squares(a.data(), n), 1e-12 * n);

    auto y1 = b, y2 = b;
    ref_.axpy(0.37, a.data(), y1.data(), n);
    simd_->axpy(0.37, a.data(), y2.data(), n);
    expect_close(y1, y2);

    auto s1 = a, s2 = a;
    ref_.scale(-1.7, s1.data(), n);
    simd_->scale(-1.7, s2.data(), n);
    EXPECT_EQ(s1, s2);

    auto r1 = a, r2 = a;
    ref_.relu(r1.data(), n);
    simd_->relu(r2.data(), n);
    EXPECT_EQ(r1, r2);

    auto g1 = b, g2 = b;
    ref_.relu_grad(r1.data(), g1.data(), n);
    simd_->relu_grad(r1.data(), g2.data(), n);
    EXPECT_EQ(g1, g2);

    auto l1 = b, l2 = b;
    ref_.lerp(0.01, a.data(), l1.data(), n);
    simd_->lerp(0.01, a.data(), l2.data(), n);
    expect_close(l1, l2);
  }
}

TEST_F(SimdEquivalence, AffineKernels) {
  Rng rng(2);
  for (std::size_t rows : kSizes) {
    for (std::size_t cols : kSizes) {
      const auto w = random_vec(rows * cols, rng);
      const auto bias = random_vec(rows, rng);
      const auto x = random_vec(cols, rng);
      std::vector<double> y1(rows), y2(rows);
      ref_.affine(w.data(), bias.data(), x.data(), y1.data(), rows, cols);
      simd_->affine(w.data(), bias.data(), x.data(), y2.data(), rows, cols);
      expect_close(y1, y2);
      ref_.affine(w.data(), nullptr, x.data(), y1.data(), rows, cols);
      simd_->affine(w.data(), nullptr, x.data(), y2.data(), rows, cols);
      expect_close(y1, y2);

      const auto dy = random_vec(rows, rng);
      auto dx1 = random_vec(cols, rng);
      auto dx2 = dx1;
      ref_.affine_input_grad(w.data(), dy.data(), dx1.data(), rows, cols);
      simd_->affine_input_grad(w.data(), dy.data(), dx2.data(), rows, cols);
      expect_close(dx1, dx2);

      auto dw1 = random_vec(rows * cols, rng);
      auto dw2 = dw1;
      ref_.affine_weight_grad(dy.data(), x.data(), dw1.data(), rows, cols);
      simd_->affine_weight_grad(dy.data(), x.data(), dw2.data(), rows, cols);
      expect_close(dw1, dw2);
    }
  }
}

TEST_F(SimdEquivalence, AdamMatchesScalar) {
  Rng rng(3);
  for (std::size_t n : kSizes) {
    auto p1 = random_vec(n, rng), p2 = p1;
    const auto g = random_vec(n, rng);
    auto m1 = random_vec(n, rng), m2 = m1;
    auto v1 = random_vec(n, rng);
    for (double& v : v1) v = std::abs(v);
    auto v2 = v1;
    const AdamStep step{1e-3, 0.9, 0.999, 1e-8, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
    ref_.adam(p1.data(), g.data(), m1.data(), v1.data(), n, step);
    simd_->adam(p2.data(), g.data(), m2.data(), v2.data(), n, step);
    expect_close(p1, p2);
    expect_close(m1, m2);
    expect_close(v1, v2);
  }
}

TEST(SimdDispatch, SelectByName) {
  const KernelTable& before = active();
  EXPECT_TRUE(select("scalar"));
  EXPECT_STREQ(active().name, "scalar");
  EXPECT_FALSE(select("no-such-isa"));
  EXPECT_STREQ(active().name, "scalar");
  EXPECT_TRUE(select("auto"));
  EXPECT_STREQ(active().name, before.name);
}

TEST(ScalarKernels, AffineMatchesHandProduct) {
  const KernelTable& k = scalar_kernels();
  const double w[6] = {1, 2, 3, 4, 5, 6};  // 2 x 3
  const double b[2] = {0.5, -1};
  const double x[3] = {1, -1, 2};
  double y[2];
  k.affine(w, b, x, y, 2, 3);
  EXPECT_DOUBLE_EQ(y[0], 0.5 + 1 - 2 + 6);
  EXPECT_DOUBLE_EQ(y[1], -1 + 4 - 5 + 12);
}

}  // namespace
}  // namespace fam::simd
