#include "fam/nn/optim.hpp"

#include <cmath>

#include "fam/errors.hpp"
#include "fam/simd/kernels.hpp"

namespace fam::nn {

Adam::Adam(const ParamSet& params, AdamConfig config) : config_(config) {
  for (const auto& a : params.arrays()) {
    m_.emplace_back(a.size(), 0.0);
    v_.emplace_back(a.size(), 0.0);
  }
}

void Adam::update(ParamSet& params, const Gradients& grads, double lr) {
  if (!grads.matches(params) || m_.size() != params.count()) {
    throw InputError("optimizer_update: gradient/parameter shape mismatch");
  }
  if (!grads.all_finite()) throw NumericError("optimizer_update: non-finite gradients, step skipped");
  Gradients clipped = grads;
  clipped.clip_global_norm(config_.max_grad_norm);

  ++steps_;
  const double t = static_cast<double>(steps_);
  const simd::AdamStep step{lr,
                            config_.beta1,
                            config_.beta2,
                            config_.eps,
                            1.0 - std::pow(config_.beta1, t),
                            1.0 - std::pow(config_.beta2, t)};
  const auto& kern = simd::active();
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto p = params.values(i);
    kern.adam(p.data(), clipped.values(i).data(), m_[i].data(), v_[i].data(), p.size(), step);
  }
  params.bump_version();
}

void soft_update(ParamSet& target, const ParamSet& online, double tau) {
  if (!target.same_shape(online)) throw InputError("soft_update: shape mismatch");
  if (!(tau >= 0.0 && tau <= 1.0)) throw InputError("soft_update: tau must lie in [0, 1]");
  const auto& kern = simd::active();
  for (std::size_t i = 0; i < target.count(); ++i) {
    auto dst = target.values(i);
    kern.lerp(tau, online.values(i).data(), dst.data(), dst.size());
  }
  target.bump_version();
}

}  // namespace fam::nn
