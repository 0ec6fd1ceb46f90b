#pragma once

#include <cstdint>
#include <vector>

#include "fam/nn/params.hpp"

namespace fam::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global-norm gradient clip applied before each step; <= 0 disables.
  double max_grad_norm = 0.5;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Adam with bias correction. State is per ParamSet.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamSet& params, AdamConfig config = {});

  /// Clips (copy of) `grads`, then applies one step. Throws NumericError
  /// without touching anything when the gradients are not finite.
  void update(ParamSet& params, const Gradients& grads, double lr);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  // Moment access for checkpointing.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }

  friend bool operator==(const Adam&, const Adam&) = default;

 private:
  AdamConfig config_{};
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t steps_ = 0;
};

/// target <- (1 - tau) * target + tau * online.
void soft_update(ParamSet& target, const ParamSet& online, double tau);

}  // namespace fam::nn
