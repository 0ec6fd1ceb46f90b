#include "fam/rl.hpp"

#include <algorithm>
#include <cmath>

#include "fam/errors.hpp"
#include "fam/rng.hpp"

namespace fam::rl {

nn::Network make_actor(std::size_t input_width, std::size_t hidden, Rng& rng) {
  return nn::Network::make(
      nn::mlp_specs(input_width, {hidden, hidden}, env::kNumActions, nn::Activation::kSoftmax, 0.01), rng);
}

nn::Network make_critic(std::size_t input_width, std::size_t hidden, Rng& rng) {
  return nn::Network::make(nn::mlp_specs(input_width, {hidden, hidden}, 1), rng);
}

nn::Matrix concat_inputs(const nn::Matrix& obs, const nn::Matrix& latent) {
  if (latent.cols() == 0) return obs;
  return nn::concat_cols({&obs, &latent});
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

namespace {

// log-softmax of one row of logits.
std::array<double, env::kNumActions> log_softmax(const double* logits) {
  double mx = logits[0];
  for (int k = 1; k < env::kNumActions; ++k) mx = std::max(mx, logits[k]);
  double sum = 0.0;
  for (int k = 0; k < env::kNumActions; ++k) sum += std::exp(logits[k] - mx);
  const double lse = mx + std::log(sum);
  std::array<double, env::kNumActions> out{};
  for (int k = 0; k < env::kNumActions; ++k) out[static_cast<std::size_t>(k)] = logits[k] - lse;
  return out;
}

double entropy_from_log_probs(const std::array<double, env::kNumActions>& logp) {
  double h = 0.0;
  for (double lp : logp) h -= std::exp(lp) * lp;
  return h;
}

int argmax(const double* v, int n) {
  int best = 0;
  for (int k = 1; k < n; ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

void check_action(int a) {
  if (a < 0 || a >= env::kNumActions) throw InputError("action " + std::to_string(a) + " out of range");
}

void check_rows(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw InputError(std::string(what) + ": expected " + std::to_string(expected) + " rows, got " +
                     std::to_string(got));
  }
}

}  // namespace

std::vector<PolicyOutput> act_batch(const nn::Network& actor, const nn::Matrix& inputs, ActMode mode,
                                    Rng* rng) {
  if (actor.output_width() != static_cast<std::size_t>(env::kNumActions)) {
    throw InputError("act: actor must output one logit per action");
  }
  if (mode == ActMode::kSample && !rng) throw InputError("act: sampling needs a random source");
  nn::MlpCache cache;
  const nn::Matrix probs = actor.forward(inputs, &cache);
  std::vector<PolicyOutput> out(inputs.rows());
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    PolicyOutput& p = out[r];
    std::copy_n(probs.row_ptr(r), env::kNumActions, p.probs.begin());
    const auto logp = log_softmax(cache.logits.row_ptr(r));
    p.action = mode == ActMode::kGreedy ? argmax(cache.logits.row_ptr(r), env::kNumActions)
                                        : static_cast<int>(rng->categorical(p.probs));
    p.log_prob = logp[static_cast<std::size_t>(p.action)];
    p.entropy = entropy_from_log_probs(logp);
  }
  return out;
}

PolicyOutput act(const nn::Network& actor, std::span<const double> obs, std::span<const double> z,
                 ActMode mode, Rng* rng) {
  nn::Matrix input(1, obs.size() + z.size());
  std::copy(z.begin(), z.end(), std::copy(obs.begin(), obs.end(), input.row_ptr(0)));
  return act_batch(actor, input, mode, rng).front();
}

std::vector<double> value_batch(const nn::Network& critic, const nn::Matrix& inputs) {
  const nn::Matrix v = critic.forward(inputs);
  if (v.cols() != 1) throw InputError("value: critic must output a scalar");
  return {v.data().begin(), v.data().end()};
}

double value(const nn::Network& critic, std::span<const double> obs, std::span<const double> z) {
  nn::Matrix input(1, obs.size() + z.size());
  std::copy(z.begin(), z.end(), std::copy(obs.begin(), obs.end(), input.row_ptr(0)));
  return value_batch(critic, input).front();
}

std::vector<double> log_probs(const nn::Network& actor, const nn::Matrix& inputs,
                              std::span<const int> actions) {
  check_rows(inputs.rows(), actions.size(), "log_probs");
  nn::MlpCache cache;
  actor.forward(inputs, &cache);
  std::vector<double> out(actions.size());
  for (std::size_t r = 0; r < actions.size(); ++r) {
    check_action(actions[r]);
    out[r] = log_softmax(cache.logits.row_ptr(r))[static_cast<std::size_t>(actions[r])];
  }
  return out;
}

void returns_and_advantages(AgentTrajectory& traj, std::span<const std::uint8_t> episode_end,
                            std::span<const std::uint8_t> terminal, std::span<const double> bootstrap,
                            double gamma, bool normalize) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  const std::size_t m = traj.rewards.size();
  if (episode_end.size() != m || terminal.size() != m || traj.values.size() != m) {
    throw InputError("returns_and_advantages: misaligned batch");
  }
  if (m > 0 && !episode_end[m - 1]) throw InputError("returns_and_advantages: last row must end an episode");
  traj.returns.assign(m, 0.0);
  traj.advantages.assign(m, 0.0);
  for (std::size_t r = m; r-- > 0;) {
    double next = 0.0;
    if (episode_end[r]) {
      if (!terminal[r]) {
        if (bootstrap.size() != m) throw InputError("returns_and_advantages: missing bootstrap values");
        next = bootstrap[r];
      }
    } else {
      next = traj.returns[r + 1];
    }
    traj.returns[r] = traj.rewards[r] + gamma * next;
    traj.advantages[r] = traj.returns[r] - traj.values[r];
  }
  if (normalize && m > 0) {
    double mean = 0.0;
    for (double a : traj.advantages) mean += a;
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (double a : traj.advantages) var += (a - mean) * (a - mean);
    const double std = std::sqrt(var / static_cast<double>(m));
    for (double& a : traj.advantages) a = (a - mean) / (std + 1e-8);
  }
}

void returns_and_advantages(TrajectoryBatch& batch, int agent, const nn::Network& target_critic,
                            const nn::Matrix& next_inputs, double gamma, bool normalize) {
  auto& traj = batch.agents.at(static_cast<std::size_t>(agent));
  std::vector<double> bootstrap;
  const bool needs_bootstrap = std::any_of(batch.episode_end.begin(), batch.episode_end.end(),
                                           [&, r = std::size_t{0}](std::uint8_t end) mutable {
                                             const bool need = end && !batch.terminal[r];
                                             ++r;
                                             return need;
                                           });
  if (needs_bootstrap) bootstrap = value_batch(target_critic, next_inputs);
  returns_and_advantages(traj, batch.episode_end, batch.terminal, bootstrap, gamma, normalize);
}

PpoLossResult actor_loss_ppo(const nn::Network& actor, const nn::Matrix& inputs,
                             std::span<const int> actions, std::span<const double> old_log_probs,
                             std::span<const double> advantages, double epsilon_clip,
                             double entropy_coef, bool compute_gradients) {
  const std::size_t m = inputs.rows();
  if (m == 0) throw InputError("actor_loss_ppo: empty batch");
  check_rows(m, actions.size(), "actor_loss_ppo actions");
  check_rows(m, old_log_probs.size(), "actor_loss_ppo old log-probs");
  check_rows(m, advantages.size(), "actor_loss_ppo advantages");
  const double inv_m = 1.0 / static_cast<double>(m);

  nn::MlpCache cache;
  const nn::Matrix probs = actor.forward(inputs, &cache);
  nn::Matrix grad_logits(m, env::kNumActions);
  PpoLossResult res;
  res.ratios.resize(m);
  double surrogate_sum = 0.0;
  double entropy_sum = 0.0;
  std::size_t clipped = 0;
  for (std::size_t r = 0; r < m; ++r) {
    check_action(actions[r]);
    const auto u = static_cast<std::size_t>(actions[r]);
    const auto logp = log_softmax(cache.logits.row_ptr(r));
    const double h = entropy_from_log_probs(logp);
    const double ratio = std::exp(logp[u] - old_log_probs[r]);
    const double adv = advantages[r];
    const double clipped_ratio = std::clamp(ratio, 1.0 - epsilon_clip, 1.0 + epsilon_clip);
    const double unclipped_term = ratio * adv;
    const double clipped_term = clipped_ratio * adv;
    const bool use_unclipped = unclipped_term <= clipped_term;
    surrogate_sum += use_unclipped ? unclipped_term : clipped_term;
    entropy_sum += h;
    if (std::abs(ratio - 1.0) > epsilon_clip) ++clipped;
    res.ratios[r] = ratio;

    if (compute_gradients) {
      // d(-surrogate)/d(log pi(u)) is -A * ratio on the unclipped branch, 0 otherwise.
      const double g_logp = use_unclipped ? -adv * ratio * inv_m : 0.0;
      double* g = grad_logits.row_ptr(r);
      for (std::size_t k = 0; k < static_cast<std::size_t>(env::kNumActions); ++k) {
        const double p = probs(r, k);
        g[k] = g_logp * ((k == u ? 1.0 : 0.0) - p) + entropy_coef * inv_m * p * (logp[k] + h);
      }
    }
  }
  res.surrogate = surrogate_sum * inv_m;
  res.entropy = entropy_sum * inv_m;
  res.clip_fraction = static_cast<double>(clipped) * inv_m;
  res.value = -res.surrogate - entropy_coef * res.entropy;
  if (!std::isfinite(res.value)) throw NumericError("actor_loss_ppo: non-finite loss");
  if (compute_gradients) {
    res.grads = actor.params.zeros_like();
    actor.mlp.backward(actor.params, cache, grad_logits, res.grads);
  }
  return res;
}

LossResult critic_loss(const nn::Network& critic, const nn::Network& target_critic,
                       const nn::Matrix& inputs, const nn::Matrix& next_inputs,
                       std::span<const double> rewards, std::span<const std::uint8_t> terminal,
                       double gamma, bool compute_gradients) {
  const std::size_t m = inputs.rows();
  if (m == 0) throw InputError("critic_loss: empty batch");
  check_rows(m, next_inputs.rows(), "critic_loss next inputs");
  check_rows(m, rewards.size(), "critic_loss rewards");
  check_rows(m, terminal.size(), "critic_loss terminal flags");
  const double inv_m = 1.0 / static_cast<double>(m);

  nn::MlpCache cache;
  const nn::Matrix v = critic.forward(inputs, &cache);
  const std::vector<double> v_next = value_batch(target_critic, next_inputs);
  nn::Matrix grad(m, 1);
  double sum = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double target = rewards[r] + (terminal[r] ? 0.0 : gamma * v_next[r]);
    const double td = target - v(r, 0);
    sum += td * td;
    grad(r, 0) = -2.0 * td * inv_m;
  }
  LossResult res;
  res.value = sum * inv_m;
  if (!std::isfinite(res.value)) throw NumericError("critic_loss: non-finite loss");
  if (compute_gradients) {
    res.grads = critic.params.zeros_like();
    critic.mlp.backward(critic.params, cache, grad, res.grads);
  }
  return res;
}

A2cLossResult a2c_losses(const nn::Network& actor, const nn::Network& critic,
                         const nn::Matrix& actor_inputs, const nn::Matrix& critic_inputs,
                         std::span<const int> actions, std::span<const double> returns,
                         std::span<const double> advantages, double entropy_coef,
                         bool compute_gradients) {
  const std::size_t m = actor_inputs.rows();
  if (m == 0) throw InputError("a2c_losses: empty batch");
  check_rows(m, critic_inputs.rows(), "a2c_losses critic inputs");
  check_rows(m, actions.size(), "a2c_losses actions");
  check_rows(m, returns.size(), "a2c_losses returns");
  check_rows(m, advantages.size(), "a2c_losses advantages");
  const double inv_m = 1.0 / static_cast<double>(m);

  A2cLossResult res;
  nn::MlpCache actor_cache;
  const nn::Matrix probs = actor.forward(actor_inputs, &actor_cache);
  nn::Matrix grad_logits(m, env::kNumActions);
  double pg_sum = 0.0;
  double entropy_sum = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    check_action(actions[r]);
    const auto u = static_cast<std::size_t>(actions[r]);
    const auto logp = log_softmax(actor_cache.logits.row_ptr(r));
    const double h = entropy_from_log_probs(logp);
    pg_sum += logp[u] * advantages[r];
    entropy_sum += h;
    double* g = grad_logits.row_ptr(r);
    for (std::size_t k = 0; k < static_cast<std::size_t>(env::kNumActions); ++k) {
      const double p = probs(r, k);
      g[k] = -advantages[r] * inv_m * ((k == u ? 1.0 : 0.0) - p) + entropy_coef * inv_m * p * (logp[k] + h);
    }
  }
  res.entropy = entropy_sum * inv_m;
  res.actor.value = -pg_sum * inv_m - entropy_coef * res.entropy;

  nn::MlpCache critic_cache;
  const nn::Matrix v = critic.forward(critic_inputs, &critic_cache);
  nn::Matrix grad_v(m, 1);
  double sq = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double err = returns[r] - v(r, 0);
    sq += err * err;
    grad_v(r, 0) = -2.0 * err * inv_m;
  }
  res.critic.value = sq * inv_m;
  if (!std::isfinite(res.actor.value) || !std::isfinite(res.critic.value)) {
    throw NumericError("a2c_losses: non-finite loss");
  }
  if (compute_gradients) {
    res.actor.grads = actor.params.zeros_like();
    actor.mlp.backward(actor.params, actor_cache, grad_logits, res.actor.grads);
    res.critic.grads = critic.params.zeros_like();
    critic.mlp.backward(critic.params, critic_cache, grad_v, res.critic.grads);
  }
  return res;
}

}  // namespace fam::rl
