#pragma once

// Latent-conditioned actor-critic pieces: policy sampling, value estimates,
// discounted returns and advantages, and the PPO / TD-critic / A2C losses.

#include <array>
#include <span>
#include <vector>

#include "fam/env.hpp"
#include "fam/nn/layers.hpp"
#include "fam/nn/matrix.hpp"
#include "fam/trajectory.hpp"

namespace fam {
class Rng;
}

namespace fam::rl {

enum class ActMode { kSample, kGreedy };

struct PolicyOutput {
  std::array<double, env::kNumActions> probs{};
  int action = 0;
  double log_prob = 0.0;
  double entropy = 0.0;
};

/// Actor: relu MLP with a softmax head over the five actions.
nn::Network make_actor(std::size_t input_width, std::size_t hidden, Rng& rng);
/// Critic: relu MLP with a scalar linear head.
nn::Network make_critic(std::size_t input_width, std::size_t hidden, Rng& rng);

/// Row-wise concatenation (o_t, z_t); z may have zero columns.
nn::Matrix concat_inputs(const nn::Matrix& obs, const nn::Matrix& latent);

/// Policy over concatenated (o_t, z_t). `rng` is required in sample mode.
PolicyOutput act(const nn::Network& actor, std::span<const double> obs, std::span<const double> z,
                 ActMode mode, Rng* rng);
/// Batched version: one row of `inputs` per decision.
std::vector<PolicyOutput> act_batch(const nn::Network& actor, const nn::Matrix& inputs, ActMode mode,
                                    Rng* rng);

/// V(o_t, z_t). The latent is a plain value: the critic cannot reach the encoder.
double value(const nn::Network& critic, std::span<const double> obs, std::span<const double> z);
std::vector<double> value_batch(const nn::Network& critic, const nn::Matrix& inputs);

/// Log pi(u | input) for each row.
std::vector<double> log_probs(const nn::Network& actor, const nn::Matrix& inputs,
                              std::span<const int> actions);

/// Fills traj.returns and traj.advantages.
///   R_t = r_{t+1} + gamma * R_{t+1} inside an episode; at the episode end
///   R = r + gamma * bootstrap (bootstrap used only when not terminal);
///   A_t = R_t - V(o_t, z_t) with V taken from traj.values.
/// `normalize` rescales advantages to mean 0, std 1 over the batch.
void returns_and_advantages(AgentTrajectory& traj, std::span<const std::uint8_t> episode_end,
                            std::span<const std::uint8_t> terminal, std::span<const double> bootstrap,
                            double gamma, bool normalize);

/// Convenience overload: evaluates the target critic on `next_inputs` for bootstrap values.
void returns_and_advantages(TrajectoryBatch& batch, int agent, const nn::Network& target_critic,
                            const nn::Matrix& next_inputs, double gamma, bool normalize);

struct LossResult {
  double value = 0.0;
  nn::Gradients grads;
};

struct PpoLossResult : LossResult {
  double surrogate = 0.0;  // mean clipped surrogate (before negation)
  double entropy = 0.0;    // mean policy entropy
  double clip_fraction = 0.0;
  std::vector<double> ratios;
};

/// -mean[min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)] - entropy_coef * mean(H).
PpoLossResult actor_loss_ppo(const nn::Network& actor, const nn::Matrix& inputs,
                             std::span<const int> actions, std::span<const double> old_log_probs,
                             std::span<const double> advantages, double epsilon_clip,
                             double entropy_coef, bool compute_gradients = true);

/// mean[(r + gamma * (1 - terminal) * V_target(next) - V(current))^2].
LossResult critic_loss(const nn::Network& critic, const nn::Network& target_critic,
                       const nn::Matrix& inputs, const nn::Matrix& next_inputs,
                       std::span<const double> rewards, std::span<const std::uint8_t> terminal,
                       double gamma, bool compute_gradients = true);

struct A2cLossResult {
  LossResult actor;
  LossResult critic;
  double entropy = 0.0;
};

/// actor = -mean[log pi(u) * A] - entropy_coef * mean(H); critic = mean[(R - V)^2].
A2cLossResult a2c_losses(const nn::Network& actor, const nn::Network& critic,
                         const nn::Matrix& actor_inputs, const nn::Matrix& critic_inputs,
                         std::span<const int> actions, std::span<const double> returns,
                         std::span<const double> advantages, double entropy_coef,
                         bool compute_gradients = true);

double entropy(std::span<const double> probs);

}  // namespace fam::rl
