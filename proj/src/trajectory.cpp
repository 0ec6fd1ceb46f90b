#include "fam/trajectory.hpp"

#include "fam/errors.hpp"

namespace fam {

void TrajectoryBatch::allocate(int n_episodes, int n_steps, int agents_count, std::size_t obs_width,
                               std::size_t latent_width) {
  episodes = n_episodes;
  horizon = n_steps;
  n_agents = agents_count;
  obs_dim = obs_width;
  latent_dim = latent_width;
  const std::size_t m = size();
  agents.assign(static_cast<std::size_t>(n_agents), {});
  for (auto& a : agents) {
    a.obs.resize(m, obs_dim);
    a.next_obs.resize(m, obs_dim);
    a.actions.assign(m, 0);
    a.rewards.assign(m, 0.0);
    a.latent.resize(m, latent_dim);
    a.next_latent.resize(m, latent_dim);
    a.mu.resize(m, latent_dim);
    a.log_sigma.resize(m, latent_dim);
    a.old_log_probs.assign(m, 0.0);
    a.values.assign(m, 0.0);
    a.returns.assign(m, 0.0);
    a.advantages.assign(m, 0.0);
  }
  episode_end.assign(m, 0);
  terminal.assign(m, 0);
  states.assign(m, {});
  episode_seeds.assign(static_cast<std::size_t>(episodes), 0);
}

void TrajectoryBatch::clear() { *this = TrajectoryBatch{}; }

std::vector<double> TrajectoryBatch::episode_returns() const {
  std::vector<double> out(static_cast<std::size_t>(episodes), 0.0);
  if (agents.empty()) return out;
  for (int e = 0; e < episodes; ++e) {
    double sum = 0.0;
    for (int t = 0; t < horizon; ++t) sum += agents[0].rewards[row(e, t)];
    out[static_cast<std::size_t>(e)] = sum;
  }
  return out;
}

std::vector<double> one_hot(int action, int n) {
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  if (action >= 0 && action < n) v[static_cast<std::size_t>(action)] = 1.0;
  return v;
}

nn::Matrix encoder_inputs(const TrajectoryBatch& batch, int agent) {
  if (agent < 0 || agent >= batch.n_agents) throw InputError("encoder_inputs: agent out of range");
  const auto& a = batch.agents[static_cast<std::size_t>(agent)];
  const std::size_t width = batch.obs_dim + env::kNumActions + 1;
  nn::Matrix x(batch.size(), width);
  for (int e = 0; e < batch.episodes; ++e) {
    for (int t = 0; t < batch.horizon; ++t) {
      const std::size_t r = batch.row(e, t);
      double* dst = x.row_ptr(r);
      std::copy_n(a.obs.row_ptr(r), batch.obs_dim, dst);
      if (t > 0) {
        dst[batch.obs_dim + static_cast<std::size_t>(a.actions[r - 1])] = 1.0;
        dst[width - 1] = a.rewards[r - 1];
      }
    }
  }
  return x;
}

nn::Matrix joint_observations(const TrajectoryBatch& batch, bool next) {
  const std::size_t width = batch.obs_dim * static_cast<std::size_t>(batch.n_agents);
  nn::Matrix x(batch.size(), width);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    double* dst = x.row_ptr(r);
    for (const auto& a : batch.agents) {
      const nn::Matrix& src = next ? a.next_obs : a.obs;
      dst = std::copy_n(src.row_ptr(r), batch.obs_dim, dst);
    }
  }
  return x;
}

}  // namespace fam
