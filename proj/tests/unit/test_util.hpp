#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fam/nn/params.hpp"
#include "fam/rng.hpp"
#include "fam/trajectory.hpp"

namespace fam::testing {

inline bool same_values(const nn::ParamSet& a, const nn::ParamSet& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.count(); ++i) {
    const auto x = a.values(i);
    const auto y = b.values(i);
    if (!std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

inline void randomize(nn::ParamSet& ps, Rng& rng, double scale = 0.5) {
  for (std::size_t i = 0; i < ps.count(); ++i) {
    for (double& v : ps.values(i)) v = rng.uniform(-scale, scale);
  }
}

inline nn::Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                                double hi = 1.0) {
  nn::Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

/// Relative error with an absolute floor so vanishing gradients do not
/// inflate it.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central finite difference of `loss` along flat coordinate k of `ps`.
inline double finite_difference(nn::ParamSet& ps, std::size_t k, const std::function<double()>& loss,
                                double h = 1e-5) {
  double& p = ps.coordinate(k);
  const double saved = p;
  p = saved + h;
  const double up = loss();
  p = saved - h;
  const double down = loss();
  p = saved;
  return (up - down) / (2.0 * h);
}

/// Worst relative error over `samples` random coordinates.
inline double worst_gradient_error(nn::ParamSet& ps, const nn::Gradients& analytic,
                                   const std::function<double()>& loss, Rng& rng,
                                   std::size_t samples = 12) {
  double worst = 0.0;
  const std::size_t n = ps.total_size();
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t k = static_cast<std::size_t>(rng.next_u64() % n);
    worst = std::max(worst, relative_error(analytic.coordinate(k), finite_difference(ps, k, loss)));
  }
  return worst;
}

/// Random batch with consistent episode boundaries; latent_dim may be 0.
inline TrajectoryBatch random_batch(int episodes, int horizon, int n_agents, std::size_t obs_dim,
                                    std::size_t latent_dim, Rng& rng) {
  TrajectoryBatch b;
  b.allocate(episodes, horizon, n_agents, obs_dim, latent_dim);
  std::vector<double> rewards(b.size());
  for (double& r : rewards) r = rng.uniform(-2.0, 0.0);
  for (auto& a : b.agents) {
    for (double& v : a.obs.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : a.next_obs.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : a.latent.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : a.next_latent.data()) v = rng.uniform(-1.0, 1.0);
    for (int& u : a.actions) u = static_cast<int>(rng.next_u64() % 5);
    for (double& v : a.old_log_probs) v = std::log(rng.uniform(0.1, 0.4));
    for (double& v : a.values) v = rng.uniform(-1.0, 1.0);
    a.rewards = rewards;
  }
  for (int e = 0; e < episodes; ++e) {
    const std::size_t last = b.row(e, horizon - 1);
    b.episode_end[last] = 1;
    b.terminal[last] = 1;
  }
  return b;
}

}  // namespace fam::testing
