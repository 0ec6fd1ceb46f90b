#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "fam/errors.hpp"
#include "fam/nn/checkpoint.hpp"
#include "fam/nn/layers.hpp"
#include "fam/nn/matrix.hpp"
#include "fam/nn/optim.hpp"
#include "fam/nn/params.hpp"
#include "fam/rng.hpp"
#include "test_util.hpp"

namespace fam::nn {
namespace {

using testing::random_matrix;
using testing::randomize;
using testing::same_values;
using testing::worst_gradient_error;

// Plain triple-loop evaluation of an Mlp read straight from its ParamSet.
Matrix reference_mlp(const ParamSet& ps, const std::vector<LayerSpec>& specs, const Matrix& x) {
  Matrix cur = x;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto w = ps.values(ps.index_of("fc" + std::to_string(k) + ".weight"));
    const auto b = ps.values(ps.index_of("fc" + std::to_string(k) + ".bias"));
    Matrix next(cur.rows(), specs[k].out);
    for (std::size_t r = 0; r < cur.rows(); ++r) {
      for (std::size_t j = 0; j < specs[k].out; ++j) {
        double s = b[j];
        for (std::size_t i = 0; i < specs[k].in; ++i) s += w[j * specs[k].in + i] * cur(r, i);
        if (specs[k].activation == Activation::kRelu) s = std::max(s, 0.0);
        next(r, j) = s;
      }
      if (specs[k].activation == Activation::kSoftmax) {
        double mx = -INFINITY, z = 0.0;
        for (std::size_t j = 0; j < specs[k].out; ++j) mx = std::max(mx, next(r, j));
        for (std::size_t j = 0; j < specs[k].out; ++j) z += std::exp(next(r, j) - mx);
        for (std::size_t j = 0; j < specs[k].out; ++j) next(r, j) = std::exp(next(r, j) - mx) / z;
      }
    }
    cur = next;
  }
  return cur;
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(Matrix, SliceAndConcat) {
  Rng rng(1);
  const Matrix a = random_matrix(3, 2, rng);
  const Matrix b = random_matrix(3, 4, rng);
  const Matrix c = concat_cols({&a, &b});
  ASSERT_EQ(c.cols(), 6u);
  EXPECT_EQ(slice_cols(c, 0, 2), a);
  EXPECT_EQ(slice_cols(c, 2, 4), b);
  const Matrix short_rows(2, 1);
  EXPECT_THROW(concat_cols({&a, &short_rows}), InputError);
  EXPECT_THROW(slice_cols(a, 1, 2), InputError);
}

TEST(Mlp, IdentityLayerPassesInputThrough) {
  ParamSet ps;
  Mlp mlp(ps, "", {{LayerKind::kAffine, 3, 3, Activation::kNone, 1.0}});
  auto w = ps.values(0);
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  const Matrix x = Matrix::from_row(std::vector<double>{0.5, -2.0, 7.0});
  EXPECT_EQ(mlp.forward(ps, x), x);
}

TEST(Mlp, ZeroParamsGiveZeroOutput) {
  ParamSet ps;
  Mlp mlp(ps, "", mlp_specs(4, {8}, 3));
  Rng rng(2);
  const Matrix y = mlp.forward(ps, random_matrix(5, 4, rng));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, MatchesReferenceProduct) {
  Rng rng(3);
  for (Activation head : {Activation::kNone, Activation::kSoftmax}) {
    ParamSet ps;
    const auto specs = mlp_specs(6, {7}, 5, head);
    Mlp mlp(ps, "", specs);
    randomize(ps, rng);
    const Matrix x = random_matrix(4, 6, rng);
    const Matrix y = mlp.forward(ps, x);
    const Matrix ref = reference_mlp(ps, specs, x);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data()[i], ref.data()[i], 1e-12);
  }
}

TEST(Mlp, ForwardIsRepeatable) {
  Rng rng(4);
  ParamSet ps;
  Mlp mlp(ps, "", mlp_specs(6, {16, 16}, 3));
  mlp.init(ps, rng);
  const Matrix x = random_matrix(9, 6, rng);
  EXPECT_EQ(mlp.forward(ps, x), mlp.forward(ps, x));
}

TEST(Mlp, ShapeAndNumericErrors) {
  ParamSet ps;
  Mlp mlp(ps, "", mlp_specs(3, {4}, 2));
  EXPECT_THROW(mlp.forward(ps, Matrix(1, 4)), InputError);
  ps.values(ps.index_of("fc1.bias"))[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(mlp.forward(ps, Matrix(1, 3)), NumericError);
}

TEST(Gradients, SquareLossOnBias) {
  // With zero input the output is the bias; loss = sum b^2 has gradient 2b.
  ParamSet ps;
  Mlp mlp(ps, "", {{LayerKind::kAffine, 2, 1, Activation::kNone, 1.0}});
  ps.values(ps.index_of("fc0.bias"))[0] = 3.0;
  MlpCache cache;
  const Matrix y = mlp.forward(ps, Matrix(1, 2), &cache);
  Matrix grad_out(1, 1);
  grad_out(0, 0) = 2.0 * y(0, 0);
  Gradients g = ps.zeros_like();
  mlp.backward(ps, cache, grad_out, g);
  EXPECT_EQ(g.values(ps.index_of("fc0.bias"))[0], 6.0);
  for (double v : g.values(ps.index_of("fc0.weight"))) EXPECT_EQ(v, 0.0);
}

TEST(Gradients, MlpMatchesFiniteDifferences) {
  Rng rng(5);
  for (Activation head : {Activation::kNone, Activation::kSoftmax}) {
    ParamSet ps;
    Mlp mlp(ps, "", mlp_specs(5, {6, 6}, 4, head));
    randomize(ps, rng);
    const Matrix x = random_matrix(3, 5, rng);
    const Matrix target = random_matrix(3, 4, rng);
    // Softmax head: cross-entropy-like loss on logits -sum t*log p; else squared error.
    auto loss = [&] {
      MlpCache c;
      const Matrix y = mlp.forward(ps, x, &c);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        s += head == Activation::kSoftmax ? -target.data()[i] * std::log(y.data()[i])
                                          : 0.5 * std::pow(y.data()[i] - target.data()[i], 2);
      }
      return s;
    };
    MlpCache cache;
    const Matrix y = mlp.forward(ps, x, &cache);
    Matrix grad(3, 4);
    for (std::size_t r = 0; r < 3; ++r) {
      double tsum = 0.0;
      for (std::size_t j = 0; j < 4; ++j) tsum += target(r, j);
      for (std::size_t j = 0; j < 4; ++j) {
        grad(r, j) = head == Activation::kSoftmax ? y(r, j) * tsum - target(r, j) : y(r, j) - target(r, j);
      }
    }
    Gradients g = ps.zeros_like();
    Matrix grad_in;
    mlp.backward(ps, cache, grad, g, &grad_in);
    EXPECT_LT(worst_gradient_error(ps, g, loss, rng, 20), 1e-3);
    ASSERT_EQ(grad_in.rows(), 3u);
    ASSERT_EQ(grad_in.cols(), 5u);
  }
}

TEST(Gru, ZeroParamsHalveHidden) {
  ParamSet ps;
  Gru gru(ps, "", 3, 4);
  const RecurrentState h{{1.0, -2.0, 0.5, 4.0}, 0};
  const auto next = gru.step(ps, h, std::vector<double>{0.3, 0.1, -0.2});
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(next.hidden[j], 0.5 * h.hidden[j]);
  EXPECT_EQ(next.step, 1u);
}

TEST(Gru, ZeroEverythingStaysZero) {
  ParamSet ps;
  Gru gru(ps, "", 2, 3);
  const auto next = gru.step(ps, RecurrentState::zeros(3), std::vector<double>{0.0, 0.0});
  for (double v : next.hidden) EXPECT_EQ(v, 0.0);
}

TEST(Gru, MatchesScalarGateOracle) {
  Rng rng(6);
  const std::size_t in = 4, h = 3;
  ParamSet ps;
  Gru gru(ps, "", in, h);
  randomize(ps, rng, 0.8);
  const auto wih = ps.values(ps.index_of("gru.weight_ih"));
  const auto whh = ps.values(ps.index_of("gru.weight_hh"));
  const auto bih = ps.values(ps.index_of("gru.bias_ih"));
  const auto bhh = ps.values(ps.index_of("gru.bias_hh"));
  std::vector<double> x(in), hid(h);
  for (double& v : x) v = rng.uniform(-1, 1);
  for (double& v : hid) v = rng.uniform(-1, 1);

  auto gate = [&](std::size_t row, bool input_side) {
    double s = input_side ? bih[row] : bhh[row];
    if (input_side) {
      for (std::size_t i = 0; i < in; ++i) s += wih[row * in + i] * x[i];
    } else {
      for (std::size_t i = 0; i < h; ++i) s += whh[row * h + i] * hid[i];
    }
    return s;
  };
  const auto out = gru.step(ps, RecurrentState{hid, 0}, x);
  for (std::size_t j = 0; j < h; ++j) {
    const double r = sigmoid_ref(gate(j, true) + gate(j, false));
    const double z = sigmoid_ref(gate(h + j, true) + gate(h + j, false));
    const double n = std::tanh(gate(2 * h + j, true) + r * gate(2 * h + j, false));
    EXPECT_NEAR(out.hidden[j], (1 - z) * n + z * hid[j], 1e-12);
  }
  const Matrix batched = gru.step(ps, Matrix::from_row(x), Matrix::from_row(hid));
  for (std::size_t j = 0; j < h; ++j) EXPECT_EQ(batched(0, j), out.hidden[j]);
}

TEST(Gru, BackwardMatchesFiniteDifferences) {
  Rng rng(7);
  const std::size_t in = 3, h = 4, rows = 2;
  ParamSet ps;
  Gru gru(ps, "", in, h);
  randomize(ps, rng, 0.7);
  const Matrix x = random_matrix(rows, in, rng);
  const Matrix h0 = random_matrix(rows, h, rng);
  const Matrix w = random_matrix(rows, h, rng);
  auto loss = [&] {
    const Matrix y = gru.step(ps, x, h0);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w.data()[i] * y.data()[i];
    return s;
  };
  GruCache cache;
  gru.step(ps, x, h0, &cache);
  Gradients g = ps.zeros_like();
  Matrix gx, gh;
  gru.backward(ps, cache, w, g, &gx, &gh);
  EXPECT_LT(worst_gradient_error(ps, g, loss, rng, 20), 1e-3);

  // Input and hidden gradients against differences on the inputs themselves.
  for (std::size_t k = 0; k < in; ++k) {
    Matrix xp = x, xm = x;
    xp(1, k) += 1e-6;
    xm(1, k) -= 1e-6;
    auto eval = [&](const Matrix& xx) {
      const Matrix y = gru.step(ps, xx, h0);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += w.data()[i] * y.data()[i];
      return s;
    };
    EXPECT_NEAR(gx(1, k), (eval(xp) - eval(xm)) / 2e-6, 1e-6);
  }
  for (std::size_t k = 0; k < h; ++k) {
    Matrix hp = h0, hm = h0;
    hp(0, k) += 1e-6;
    hm(0, k) -= 1e-6;
    auto eval = [&](const Matrix& hh) {
      const Matrix y = gru.step(ps, x, hh);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += w.data()[i] * y.data()[i];
      return s;
    };
    EXPECT_NEAR(gh(0, k), (eval(hp) - eval(hm)) / 2e-6, 1e-6);
  }
}

TEST(Init, OrthogonalRowsOrColumns) {
  Rng rng(8);
  for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{4, 9}, {9, 4}, {6, 6}}) {
    std::vector<double> w(rows * cols);
    const double gain = std::sqrt(2.0);
    init_orthogonal(w, rows, cols, gain, rng);
    const bool wide = rows <= cols;
    const std::size_t n = wide ? rows : cols;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        double s = 0.0;
        const std::size_t len = wide ? cols : rows;
        for (std::size_t k = 0; k < len; ++k) {
          s += wide ? w[a * cols + k] * w[b * cols + k] : w[k * cols + a] * w[k * cols + b];
        }
        EXPECT_NEAR(s, a == b ? gain * gain : 0.0, 1e-10);
      }
    }
  }
}

TEST(Init, BiasesZeroAndPolicyHeadSmall) {
  Rng rng(9);
  ParamSet ps;
  Mlp mlp(ps, "", mlp_specs(10, {64}, 5, Activation::kSoftmax, 0.01));
  mlp.init(ps, rng);
  for (double v : ps.values(ps.index_of("fc0.bias"))) EXPECT_EQ(v, 0.0);
  for (double v : ps.values(ps.index_of("fc1.weight"))) EXPECT_LE(std::abs(v), 0.01 + 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet ps;
  ps.add("p", 1, 1);
  ps.values(0)[0] = 0.7;
  Adam opt(ps);
  Gradients g = ps.zeros_like();
  g.values(0)[0] = 0.25;  // below the clip norm
  opt.update(ps, g, 0.001);
  // m_hat = g, v_hat = g^2: the step is lr * g / (|g| + eps).
  EXPECT_NEAR(ps.values(0)[0], 0.7 - 0.001 * 0.25 / (0.25 + 1e-8), 1e-15);
  EXPECT_EQ(ps.version(), 1u);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, UnitGradientScalar) {
  ParamSet ps;
  ps.add("p", 1, 1);
  ps.values(0)[0] = 1.0;
  AdamConfig cfg;
  cfg.max_grad_norm = 0.0;
  Adam opt(ps, cfg);
  Gradients g = ps.zeros_like();
  g.values(0)[0] = 1.0;
  opt.update(ps, g, 0.001);
  EXPECT_NEAR(1.0 - ps.values(0)[0], 0.001, 1e-10);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Rng rng(10);
  ParamSet ps;
  ps.add("w", 3, 4);
  randomize(ps, rng);
  const ParamSet before = ps;
  Adam opt(ps);
  opt.update(ps, ps.zeros_like(), 0.01);
  EXPECT_TRUE(same_values(ps, before));
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, IdenticalCallsAgree) {
  Rng rng(11);
  ParamSet ps;
  ps.add("w", 5, 5);
  randomize(ps, rng);
  Gradients g = ps.zeros_like();
  for (double& v : g.values(0)) v = rng.uniform(-1, 1);
  ParamSet a = ps, b = ps;
  Adam oa(ps), ob(ps);
  oa.update(a, g, 0.01);
  ob.update(b, g, 0.01);
  EXPECT_TRUE(same_values(a, b));
  EXPECT_TRUE(oa == ob);
}

TEST(Adam, NonFiniteGradientRejectedWithoutSideEffects) {
  ParamSet ps;
  ps.add("w", 2, 2);
  Adam opt(ps);
  const ParamSet before = ps;
  const Adam opt_before = opt;
  Gradients g = ps.zeros_like();
  g.values(0)[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(opt.update(ps, g, 0.1), NumericError);
  EXPECT_TRUE(ps == before);
  EXPECT_TRUE(opt == opt_before);
}

TEST(Gradients, GlobalNormClip) {
  ParamSet ps;
  ps.add("a", 1, 2);
  ps.add("b", 1, 1);
  Gradients g = ps.zeros_like();
  g.values(0)[0] = 3.0;
  g.values(0)[1] = 0.0;
  g.values(1)[0] = 4.0;
  EXPECT_DOUBLE_EQ(g.clip_global_norm(0.5), 5.0);
  EXPECT_NEAR(g.global_norm(), 0.5, 1e-15);
  EXPECT_NEAR(g.values(1)[0], 0.4, 1e-15);
}

TEST(SoftUpdate, Examples) {
  ParamSet target, online;
  target.add("w", 1, 1);
  online.add("w", 1, 1);
  online.values(0)[0] = 2.0;
  ParamSet t = target;
  soft_update(t, online, 0.5);
  EXPECT_EQ(t.values(0)[0], 1.0);
  t = target;
  soft_update(t, online, 1.0);
  EXPECT_EQ(t.values(0)[0], 2.0);
  t = target;
  soft_update(t, online, 0.0);
  EXPECT_EQ(t.values(0)[0], 0.0);
  EXPECT_THROW(soft_update(t, online, 1.5), InputError);
  ParamSet other;
  other.add("w", 2, 1);
  EXPECT_THROW(soft_update(t, other, 0.5), InputError);
}

TEST(SoftUpdate, ConvexCombinationProperty) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    ParamSet target, online;
    target.add("w", 4, 3);
    online.add("w", 4, 3);
    randomize(target, rng, 10.0);
    randomize(online, rng, 10.0);
    ParamSet updated = target;
    soft_update(updated, online, rng.uniform());
    for (std::size_t k = 0; k < 12; ++k) {
      const double lo = std::min(target.coordinate(k), online.coordinate(k));
      const double hi = std::max(target.coordinate(k), online.coordinate(k));
      ASSERT_GE(updated.coordinate(k), lo);
      ASSERT_LE(updated.coordinate(k), hi);
    }
  }
}

class CheckpointFile : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("fam_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointFile, RoundTripIsBitExact) {
  Rng rng(13);
  ParamSet ps;
  Mlp mlp(ps, "", mlp_specs(3, {5}, 2));
  randomize(ps, rng);
  ps.values(0)[0] = 1e-310;  // subnormal
  ps.set_version(17);
  Adam opt(ps);
  Gradients g = ps.zeros_like();
  for (std::size_t i = 0; i < g.count(); ++i)
    for (double& v : g.values(i)) v = rng.uniform(-1, 1);
  opt.update(ps, g, 0.01);

  Checkpoint ck;
  ck.config_text = "a = 1\nb = two\n";
  ck.set_meta("rng", rng.serialize());
  ck.add_params("net", ps);
  ck.add_optimizer("net_opt", opt);
  write_checkpoint(dir_ / "x.ckpt", ck);
  EXPECT_FALSE(std::filesystem::exists(dir_ / "x.ckpt.tmp"));

  const Checkpoint back = read_checkpoint(dir_ / "x.ckpt");
  EXPECT_EQ(back.config_text, ck.config_text);
  EXPECT_EQ(back.get_meta("rng"), rng.serialize());
  ParamSet ps2;
  Mlp mlp2(ps2, "", mlp_specs(3, {5}, 2));
  Adam opt2(ps2);
  back.load_params("net", ps2);
  back.load_optimizer("net_opt", opt2);
  EXPECT_TRUE(ps2 == ps);
  EXPECT_TRUE(opt2 == opt);
}

TEST_F(CheckpointFile, DamagedFilesRejected) {
  ParamSet ps;
  ps.add("w", 2, 2);
  Checkpoint ck;
  ck.add_params("net", ps);
  write_checkpoint(dir_ / "x.ckpt", ck);
  {
    std::ifstream in(dir_ / "x.ckpt");
    std::string all((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out(dir_ / "cut.ckpt");
    out << all.substr(0, all.size() - 4);
  }
  EXPECT_THROW(read_checkpoint(dir_ / "cut.ckpt"), IoError);
  EXPECT_THROW(read_checkpoint(dir_ / "missing.ckpt"), IoError);

  ParamSet wrong;
  wrong.add("w", 3, 2);
  EXPECT_THROW(read_checkpoint(dir_ / "x.ckpt").load_params("net", wrong), IoError);
  EXPECT_THROW(read_checkpoint(dir_ / "x.ckpt").load_params("other", ps), IoError);
}

}  // namespace
}  // namespace fam::nn
