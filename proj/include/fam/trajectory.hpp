#pragma once

#include <cstdint>
#include <vector>

#include "fam/env.hpp"
#include "fam/nn/matrix.hpp"

namespace fam {

/// One agent's view of a batch of fixed-length episodes. Row index is
/// episode * horizon + t; every per-row array has batch.size() entries.
struct AgentTrajectory {
  nn::Matrix obs;          // o_t
  nn::Matrix next_obs;     // o_{t+1}
  std::vector<int> actions;       // u_t
  std::vector<double> rewards;    // r_{t+1} (team reward)
  // Latent used by actor and critic, recorded at collection time. Stored as
  // plain values, so no gradient can reach the encoder through it.
  nn::Matrix latent;       // z_t
  nn::Matrix next_latent;  // z_{t+1}
  nn::Matrix mu;
  nn::Matrix log_sigma;
  std::vector<double> old_log_probs;
  std::vector<double> values;     // V(o_t, z_t) from the online critic
  std::vector<double> returns;    // R_t
  std::vector<double> advantages; // A_t
};

struct TrajectoryBatch {
  int episodes = 0;
  int horizon = 0;
  int n_agents = 0;
  std::size_t obs_dim = 0;
  std::size_t latent_dim = 0;  // 0 when no belief inference is wired in

  std::vector<AgentTrajectory> agents;
  // Chain breaks: episode_end marks the last transition of an episode;
  // terminal additionally zeroes the bootstrap (false under time-limit bootstrapping).
  std::vector<std::uint8_t> episode_end;
  std::vector<std::uint8_t> terminal;
  // World state after each transition, for replay and metric recomputation.
  std::vector<env::WorldState> states;
  std::vector<std::uint64_t> episode_seeds;

  std::size_t size() const {
    return static_cast<std::size_t>(episodes) * static_cast<std::size_t>(horizon);
  }
  std::size_t row(int episode, int t) const {
    return static_cast<std::size_t>(episode) * static_cast<std::size_t>(horizon) +
           static_cast<std::size_t>(t);
  }
  bool empty() const { return size() == 0; }

  /// Allocates all per-row storage for the given shape.
  void allocate(int episodes, int horizon, int n_agents, std::size_t obs_dim, std::size_t latent_dim);
  void clear();

  /// Undiscounted team return of each episode.
  std::vector<double> episode_returns() const;
};

/// Encoder inputs (o_t, one-hot u_{t-1}, r_t) for agent `agent`; u_{-1} = 0, r_0 = 0.
nn::Matrix encoder_inputs(const TrajectoryBatch& batch, int agent);

/// Concatenation of all agents' observations per row (centralized critic input).
nn::Matrix joint_observations(const TrajectoryBatch& batch, bool next);

std::vector<double> one_hot(int action, int n = env::kNumActions);

}  // namespace fam
