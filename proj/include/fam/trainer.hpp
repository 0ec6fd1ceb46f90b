#pragma once

// Training driver: rollout collection over synchronous environment waves,
// per-agent critic/actor/belief-inference updates, soft target updates,
// checkpoints and the per-cycle metric log.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fam/config.hpp"
#include "fam/env.hpp"
#include "fam/fbi.hpp"
#include "fam/nn/checkpoint.hpp"
#include "fam/nn/layers.hpp"
#include "fam/nn/optim.hpp"
#include "fam/rng.hpp"
#include "fam/trajectory.hpp"

namespace fam {

enum class CriticInput {
  kLocal,        // o_t
  kLocalLatent,  // (o_t, z_t)
  kJoint,        // all agents' observations concatenated
};

/// Which pieces a variant uses and how they are connected.
struct Wiring {
  Algorithm algorithm = Algorithm::kFam;
  bool uses_fbi = true;
  bool ppo = true;  // false: advantage actor-critic, one pass per batch
  CriticInput critic_input = CriticInput::kLocalLatent;
  int n_agents = 0;
  std::size_t obs_dim = 0;
  std::size_t latent_dim = 0;  // 0 without belief inference
  std::size_t actor_input_width = 0;
  std::size_t critic_input_width = 0;
  fbi::FbiConfig fbi;
};

Wiring make_wiring(const RunConfig& config);

/// Networks and optimizer state of one agent (or of all agents when shared).
struct AgentModels {
  nn::Network actor;
  nn::Network actor_old;
  nn::Network critic;
  nn::Network critic_target;
  std::optional<nn::Network> actor_target;
  std::optional<fbi::FbiModel> fbi;
  std::optional<fbi::FbiModel> fbi_target;

  nn::Adam actor_opt;
  nn::Adam critic_opt;
  nn::Adam psi_opt;
  nn::Adam phi_opt;
  nn::Adam varphi_opt;
};

struct AgentStack {
  Wiring wiring;
  bool shared = false;
  std::vector<AgentModels> models;

  int n_agents() const { return wiring.n_agents; }
  AgentModels& agent(int i) { return models.at(shared ? 0 : static_cast<std::size_t>(i)); }
  const AgentModels& agent(int i) const {
    return models.at(shared ? 0 : static_cast<std::size_t>(i));
  }
};

/// Builds the variant named by config.algorithm with freshly initialized
/// parameters drawn from `rng`.
AgentStack build_variant(const RunConfig& config, Rng& rng);

// Per-agent network inputs assembled from a batch.
nn::Matrix actor_inputs(const TrajectoryBatch& batch, int agent, const Wiring& wiring);
nn::Matrix critic_inputs(const TrajectoryBatch& batch, int agent, const Wiring& wiring, bool next);

/// Plays `episodes` complete episodes in synchronous waves of envs.size()
/// environments. Episode seeds and all stochastic choices come from `rng`.
/// Deterministic mode takes greedy actions and z = mu.
TrajectoryBatch collect_rollouts(std::vector<env::ParticleEnv>& envs, const AgentStack& stack,
                                 int episodes, Rng& rng, bool deterministic = false,
                                 bool time_limit_bootstrap = false);

/// Component means over agents and epochs. Absent components are empty.
struct LossReport {
  double loss_actor = 0.0;
  double loss_critic = 0.0;
  std::optional<double> loss_fbi;
  std::optional<double> kl;
  std::optional<double> recon_obs;
  std::optional<double> recon_rew;
  double entropy = 0.0;
  double total = 0.0;  // loss_actor + loss_critic + loss_fbi
  bool aborted = false;
  std::string abort_reason;
};

/// Runs config.epochs passes (one for the advantage actor-critic variants) of
/// critic, actor and belief-inference updates for every agent, then clears
/// the batch. A non-finite loss or gradient aborts the remaining passes.
LossReport train_epoch(TrajectoryBatch& batch, AgentStack& stack, const RunConfig& config, Rng& rng);

/// target <- (1 - tau) target + tau online for the critic targets (and the
/// actor / belief-inference targets when they are maintained).
void soft_update_targets(AgentStack& stack, double tau);

struct MetricRow {
  std::uint64_t step = 0;
  double mean_episode_return = 0.0;
  std::optional<double> occupied_landmarks;
  LossReport losses;
  double wall_time = 0.0;
};

std::string metric_header();
/// Tab-separated; absent values print as NA.
std::string format_metric_row(const MetricRow& row);

// Checkpoint persistence of a stack.
void add_stack(nn::Checkpoint& ckpt, const AgentStack& stack);
/// Rebuilds the stack described by `config` and loads every array. Throws
/// IoError when the checkpoint does not match the configuration.
AgentStack load_stack(const nn::Checkpoint& ckpt, const RunConfig& config);

class Trainer {
 public:
  explicit Trainer(RunConfig config);
  /// Restores parameters, optimizer state, random streams and counters.
  static Trainer resume(const nn::Checkpoint& ckpt);

  /// One collect -> train -> soft update cycle.
  MetricRow cycle();
  bool finished() const { return cycles_ >= total_cycles(); }
  std::uint64_t total_cycles() const { return config_.total_steps / config_.steps_per_cycle(); }

  nn::Checkpoint checkpoint() const;

  const RunConfig& config() const { return config_; }
  const AgentStack& stack() const { return stack_; }
  AgentStack& stack() { return stack_; }
  std::uint64_t steps() const { return steps_; }
  std::uint64_t cycles() const { return cycles_; }

 private:
  RunConfig config_;
  AgentStack stack_;
  std::vector<env::ParticleEnv> envs_;
  Rng rollout_rng_;
  Rng train_rng_;
  std::uint64_t steps_ = 0;
  std::uint64_t cycles_ = 0;
  double elapsed_ = 0.0;  // wall time carried over from before a resume
  std::chrono::steady_clock::time_point started_;
};

struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  /// Called after every metric row (progress reporting).
  std::function<void(const MetricRow&)> on_row;
};

struct RunArtifacts {
  std::filesystem::path out_dir;
  std::filesystem::path config_path;
  std::filesystem::path metric_log;
  std::filesystem::path eval_log;
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<MetricRow> rows;
};

/// Full run: writes config.cfg, metrics.tsv, eval.tsv and checkpoints under
/// options.out_dir. Throws RunError when an artifact cannot be written.
RunArtifacts run(const RunConfig& config, const RunOptions& options);

}  // namespace fam
