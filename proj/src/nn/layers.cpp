#include "fam/nn/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "fam/errors.hpp"
#include "fam/rng.hpp"
#include "fam/simd/kernels.hpp"

namespace fam::nn {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<LayerSpec> mlp_specs(std::size_t in, const std::vector<std::size_t>& hidden,
                                 std::size_t out, Activation head, double head_gain) {
  std::vector<LayerSpec> specs;
  std::size_t width = in;
  for (std::size_t h : hidden) {
    specs.push_back({LayerKind::kAffine, width, h, Activation::kRelu, std::sqrt(2.0)});
    width = h;
  }
  specs.push_back({LayerKind::kAffine, width, out, head, head_gain});
  return specs;
}

void init_orthogonal(std::span<double> weight, std::size_t rows, std::size_t cols, double gain,
                     Rng& rng) {
  if (weight.size() != rows * cols) throw InputError("init_orthogonal: size mismatch");
  const bool transpose = rows < cols;
  const Eigen::Index tall = static_cast<Eigen::Index>(std::max(rows, cols));
  const Eigen::Index wide = static_cast<Eigen::Index>(std::min(rows, cols));
  Eigen::MatrixXd gaussian(tall, wide);
  for (Eigen::Index c = 0; c < wide; ++c) {
    for (Eigen::Index r = 0; r < tall; ++r) gaussian(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, wide);
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(wide, wide);
  for (Eigen::Index c = 0; c < wide; ++c) {
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = transpose ? q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))
                                 : q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      weight[i * cols + j] = gain * v;
    }
  }
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(ParamSet& params, const std::string& prefix, std::vector<LayerSpec> specs)
    : specs_(std::move(specs)) {
  if (specs_.empty()) throw InputError("Mlp needs at least one layer");
  for (std::size_t k = 0; k < specs_.size(); ++k) {
    const LayerSpec& s = specs_[k];
    if (s.kind != LayerKind::kAffine) throw InputError("Mlp layers must be affine");
    if (s.in == 0 || s.out == 0) throw InputError("layer widths must be >= 1");
    if (k > 0 && specs_[k - 1].out != s.in) throw InputError("Mlp layer widths do not chain");
    if (s.activation == Activation::kSoftmax && k + 1 != specs_.size()) {
      throw InputError("softmax is only allowed on the final layer");
    }
    const std::string base = prefix + "fc" + std::to_string(k);
    weight_idx_.push_back(params.add(base + ".weight", s.out, s.in));
    bias_idx_.push_back(params.add(base + ".bias", s.out, 1));
  }
}

namespace {

void softmax_row(const double* logits, double* probs, std::size_t n) {
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (std::size_t i = 0; i < n; ++i) probs[i] /= sum;
}

}  // namespace

Matrix Mlp::forward(const ParamSet& params, const Matrix& input, MlpCache* cache) const {
  if (input.cols() != input_width()) {
    throw InputError("mlp_forward: input width " + std::to_string(input.cols()) + ", expected " +
                     std::to_string(input_width()));
  }
  const auto& kern = simd::active();
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Matrix current = input;
  for (std::size_t k = 0; k < specs_.size(); ++k) {
    const LayerSpec& s = specs_[k];
    const double* w = params.values(weight_idx_[k]).data();
    const double* b = params.values(bias_idx_[k]).data();
    Matrix next(current.rows(), s.out);
    for (std::size_t r = 0; r < current.rows(); ++r) {
      kern.affine(w, b, current.row_ptr(r), next.row_ptr(r), s.out, s.in);
    }
    if (s.activation == Activation::kRelu) {
      kern.relu(next.data().data(), next.size());
    } else if (s.activation == Activation::kSoftmax) {
      if (cache) cache->logits = next;
      Matrix probs(next.rows(), next.cols());
      for (std::size_t r = 0; r < next.rows(); ++r) {
        softmax_row(next.row_ptr(r), probs.row_ptr(r), next.cols());
      }
      next = std::move(probs);
    }
    if (cache) {
      cache->inputs.push_back(std::move(current));
      cache->outputs.push_back(next);
    }
    current = std::move(next);
  }
  if (!all_finite(current.data())) throw NumericError("mlp_forward: non-finite output");
  return current;
}

void Mlp::backward(const ParamSet& params, const MlpCache& cache, const Matrix& grad_output,
                   Gradients& grads, Matrix* grad_input) const {
  if (cache.inputs.size() != specs_.size()) throw InputError("mlp backward: stale cache");
  if (grad_output.cols() != output_width() || grad_output.rows() != cache.inputs[0].rows()) {
    throw InputError("mlp backward: gradient shape mismatch");
  }
  const auto& kern = simd::active();
  Matrix grad = grad_output;
  for (std::size_t k = specs_.size(); k-- > 0;) {
    const LayerSpec& s = specs_[k];
    if (s.activation == Activation::kRelu) {
      kern.relu_grad(cache.outputs[k].data().data(), grad.data().data(), grad.size());
    }
    const Matrix& x = cache.inputs[k];
    double* dw = grads.values(weight_idx_[k]).data();
    double* db = grads.values(bias_idx_[k]).data();
    for (std::size_t r = 0; r < grad.rows(); ++r) {
      kern.affine_weight_grad(grad.row_ptr(r), x.row_ptr(r), dw, s.out, s.in);
      kern.axpy(1.0, grad.row_ptr(r), db, s.out);
    }
    if (k == 0 && !grad_input) break;
    const double* w = params.values(weight_idx_[k]).data();
    Matrix prev(grad.rows(), s.in);
    for (std::size_t r = 0; r < grad.rows(); ++r) {
      kern.affine_input_grad(w, grad.row_ptr(r), prev.row_ptr(r), s.out, s.in);
    }
    grad = std::move(prev);
  }
  if (grad_input) *grad_input = std::move(grad);
}

void Mlp::init(ParamSet& params, Rng& rng) const {
  for (std::size_t k = 0; k < specs_.size(); ++k) {
    const LayerSpec& s = specs_[k];
    init_orthogonal(params.values(weight_idx_[k]), s.out, s.in, s.init_gain, rng);
    auto b = params.values(bias_idx_[k]);
    std::fill(b.begin(), b.end(), 0.0);
  }
}

// ---------------------------------------------------------------------------
// Gru

Gru::Gru(ParamSet& params, const std::string& prefix, std::size_t input, std::size_t hidden)
    : input_(input), hidden_(hidden) {
  if (input == 0 || hidden == 0) throw InputError("gru widths must be >= 1");
  w_ih_ = params.add(prefix + "gru.weight_ih", 3 * hidden, input);
  w_hh_ = params.add(prefix + "gru.weight_hh", 3 * hidden, hidden);
  b_ih_ = params.add(prefix + "gru.bias_ih", 3 * hidden, 1);
  b_hh_ = params.add(prefix + "gru.bias_hh", 3 * hidden, 1);
}

Matrix Gru::step(const ParamSet& params, const Matrix& input, const Matrix& hidden,
                 GruCache* cache) const {
  if (input.cols() != input_ || hidden.cols() != hidden_ || input.rows() != hidden.rows()) {
    throw InputError("gru_step: shape mismatch");
  }
  const auto& kern = simd::active();
  const std::size_t n = input.rows();
  const std::size_t h = hidden_;
  const double* w_ih = params.values(w_ih_).data();
  const double* w_hh = params.values(w_hh_).data();
  const double* b_ih = params.values(b_ih_).data();
  const double* b_hh = params.values(b_hh_).data();

  Matrix out(n, h);
  if (cache) {
    cache->input = input;
    cache->hidden = hidden;
    cache->reset.resize(n, h);
    cache->update.resize(n, h);
    cache->candidate.resize(n, h);
    cache->hidden_candidate_pre.resize(n, h);
  }
  std::vector<double> gi(3 * h);
  std::vector<double> gh(3 * h);
  for (std::size_t row = 0; row < n; ++row) {
    kern.affine(w_ih, b_ih, input.row_ptr(row), gi.data(), 3 * h, input_);
    kern.affine(w_hh, b_hh, hidden.row_ptr(row), gh.data(), 3 * h, h);
    const double* hp = hidden.row_ptr(row);
    double* ho = out.row_ptr(row);
    for (std::size_t j = 0; j < h; ++j) {
      const double r = sigmoid(gi[j] + gh[j]);
      const double z = sigmoid(gi[h + j] + gh[h + j]);
      const double c = std::tanh(gi[2 * h + j] + r * gh[2 * h + j]);
      ho[j] = (1.0 - z) * c + z * hp[j];
      if (cache) {
        cache->reset(row, j) = r;
        cache->update(row, j) = z;
        cache->candidate(row, j) = c;
        cache->hidden_candidate_pre(row, j) = gh[2 * h + j];
      }
    }
  }
  if (!all_finite(out.data())) throw NumericError("gru_step: non-finite hidden state");
  return out;
}

RecurrentState Gru::step(const ParamSet& params, const RecurrentState& state,
                         std::span<const double> input) const {
  Matrix h = Matrix::from_row(state.hidden);
  Matrix x = Matrix::from_row(input);
  Matrix next = step(params, x, h);
  return {std::vector<double>(next.data().begin(), next.data().end()), state.step + 1};
}

void Gru::backward(const ParamSet& params, const GruCache& cache, const Matrix& grad_hidden_out,
                   Gradients& grads, Matrix* grad_input, Matrix* grad_hidden) const {
  const std::size_t n = cache.input.rows();
  const std::size_t h = hidden_;
  if (grad_hidden_out.rows() != n || grad_hidden_out.cols() != h) {
    throw InputError("gru backward: gradient shape mismatch");
  }
  const auto& kern = simd::active();
  const double* w_ih = params.values(w_ih_).data();
  const double* w_hh = params.values(w_hh_).data();
  double* dw_ih = grads.values(w_ih_).data();
  double* dw_hh = grads.values(w_hh_).data();
  double* db_ih = grads.values(b_ih_).data();
  double* db_hh = grads.values(b_hh_).data();

  if (grad_input) grad_input->resize(n, input_);
  if (grad_hidden) grad_hidden->resize(n, h);
  std::vector<double> dgi(3 * h);
  std::vector<double> dgh(3 * h);
  for (std::size_t row = 0; row < n; ++row) {
    const double* dh_out = grad_hidden_out.row_ptr(row);
    const double* hp = cache.hidden.row_ptr(row);
    for (std::size_t j = 0; j < h; ++j) {
      const double r = cache.reset(row, j);
      const double z = cache.update(row, j);
      const double c = cache.candidate(row, j);
      const double dz = dh_out[j] * (hp[j] - c);
      const double dc_pre = dh_out[j] * (1.0 - z) * (1.0 - c * c);
      const double dr = dc_pre * cache.hidden_candidate_pre(row, j);
      const double dr_pre = dr * r * (1.0 - r);
      const double dz_pre = dz * z * (1.0 - z);
      dgi[j] = dr_pre;
      dgi[h + j] = dz_pre;
      dgi[2 * h + j] = dc_pre;
      dgh[j] = dr_pre;
      dgh[h + j] = dz_pre;
      dgh[2 * h + j] = dc_pre * r;
    }
    kern.affine_weight_grad(dgi.data(), cache.input.row_ptr(row), dw_ih, 3 * h, input_);
    kern.affine_weight_grad(dgh.data(), hp, dw_hh, 3 * h, h);
    kern.axpy(1.0, dgi.data(), db_ih, 3 * h);
    kern.axpy(1.0, dgh.data(), db_hh, 3 * h);
    if (grad_input) kern.affine_input_grad(w_ih, dgi.data(), grad_input->row_ptr(row), 3 * h, input_);
    if (grad_hidden) {
      double* dh = grad_hidden->row_ptr(row);
      for (std::size_t j = 0; j < h; ++j) dh[j] = dh_out[j] * cache.update(row, j);
      kern.affine_input_grad(w_hh, dgh.data(), dh, 3 * h, h);
    }
  }
}

void Gru::init(ParamSet& params, Rng& rng) const {
  const std::size_t h = hidden_;
  auto w_ih = params.values(w_ih_);
  auto w_hh = params.values(w_hh_);
  for (std::size_t gate = 0; gate < 3; ++gate) {
    init_orthogonal(w_ih.subspan(gate * h * input_, h * input_), h, input_, 1.0, rng);
    init_orthogonal(w_hh.subspan(gate * h * h, h * h), h, h, 1.0, rng);
  }
  for (std::size_t idx : {b_ih_, b_hh_}) {
    auto b = params.values(idx);
    std::fill(b.begin(), b.end(), 0.0);
  }
}

}  // namespace fam::nn

namespace fam::nn {

Network Network::make(const std::vector<LayerSpec>& specs, Rng& rng) {
  Network net;
  net.mlp = Mlp(net.params, "", specs);
  net.mlp.init(net.params, rng);
  return net;
}

}  // namespace fam::nn
