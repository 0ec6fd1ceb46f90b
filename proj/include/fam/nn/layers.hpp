#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fam/nn/matrix.hpp"
#include "fam/nn/params.hpp"

namespace fam {
class Rng;
}

namespace fam::nn {

enum class Activation { kNone, kRelu, kSoftmax };
enum class LayerKind { kAffine, kGatedRecurrent };

struct LayerSpec {
  LayerKind kind = LayerKind::kAffine;
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::kNone;
  /// Orthogonal init gain for the weight matrix.
  double init_gain = 1.0;
};

/// Hidden relu stack: in -> hidden... -> out with a linear (or softmax) head.
std::vector<LayerSpec> mlp_specs(std::size_t in, const std::vector<std::size_t>& hidden,
                                 std::size_t out, Activation head = Activation::kNone,
                                 double head_gain = 1.0);

struct MlpCache {
  // inputs[k] is the input of affine layer k (post-activation of layer k - 1).
  std::vector<Matrix> inputs;
  // Post-activation outputs of relu layers (relu gradient mask).
  std::vector<Matrix> outputs;
  // Pre-softmax values when the head is softmax.
  Matrix logits;
};

/// Feedforward stack of affine layers. Parameters live in an external
/// ParamSet under "<prefix>fc<k>.weight" / "<prefix>fc<k>.bias".
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamSet& params, const std::string& prefix, std::vector<LayerSpec> specs);

  /// One row per sample. Throws InputError on width mismatch and
  /// NumericError on non-finite output.
  Matrix forward(const ParamSet& params, const Matrix& input, MlpCache* cache = nullptr) const;

  /// Accumulates parameter gradients. `grad_output` is the gradient with
  /// respect to the final output, or with respect to the logits when the
  /// head is softmax (callers fuse softmax with their loss).
  void backward(const ParamSet& params, const MlpCache& cache, const Matrix& grad_output,
                Gradients& grads, Matrix* grad_input = nullptr) const;

  void init(ParamSet& params, Rng& rng) const;

  std::size_t input_width() const { return specs_.empty() ? 0 : specs_.front().in; }
  std::size_t output_width() const { return specs_.empty() ? 0 : specs_.back().out; }
  const std::vector<LayerSpec>& specs() const { return specs_; }

 private:
  std::vector<LayerSpec> specs_;
  std::vector<std::size_t> weight_idx_;
  std::vector<std::size_t> bias_idx_;
};

/// Hidden state of one recurrent sequence.
struct RecurrentState {
  std::vector<double> hidden;
  std::size_t step = 0;

  static RecurrentState zeros(std::size_t width) { return {std::vector<double>(width, 0.0), 0}; }
};

struct GruCache {
  Matrix input;
  Matrix hidden;
  Matrix reset;      // r
  Matrix update;     // z
  Matrix candidate;  // n
  Matrix hidden_candidate_pre;  // W_hn h + b_hn
};

/// Gated recurrent cell (reset, update, candidate gates; rows stacked r|z|n):
///   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
///   z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
class Gru {
 public:
  Gru() = default;
  Gru(ParamSet& params, const std::string& prefix, std::size_t input, std::size_t hidden);

  Matrix step(const ParamSet& params, const Matrix& input, const Matrix& hidden,
              GruCache* cache = nullptr) const;
  RecurrentState step(const ParamSet& params, const RecurrentState& state,
                      std::span<const double> input) const;

  void backward(const ParamSet& params, const GruCache& cache, const Matrix& grad_hidden_out,
                Gradients& grads, Matrix* grad_input, Matrix* grad_hidden) const;

  void init(ParamSet& params, Rng& rng) const;

  std::size_t input_width() const { return input_; }
  std::size_t hidden_width() const { return hidden_; }

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  std::size_t w_ih_ = 0, w_hh_ = 0, b_ih_ = 0, b_hh_ = 0;
};

/// Orthogonal initialization (QR of a Gaussian matrix, sign-corrected) scaled by `gain`.
void init_orthogonal(std::span<double> weight, std::size_t rows, std::size_t cols, double gain,
                     Rng& rng);

double sigmoid(double x);

}  // namespace fam::nn

namespace fam::nn {

/// A feedforward network together with the parameters it owns.
struct Network {
  ParamSet params;
  Mlp mlp;

  static Network make(const std::vector<LayerSpec>& specs, Rng& rng);

  Matrix forward(const Matrix& input, MlpCache* cache = nullptr) const {
    return mlp.forward(params, input, cache);
  }
  std::size_t input_width() const { return mlp.input_width(); }
  std::size_t output_width() const { return mlp.output_width(); }
};

}  // namespace fam::nn
