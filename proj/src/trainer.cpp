#include "fam/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "fam/errors.hpp"
#include "fam/eval.hpp"
#include "fam/rl.hpp"
#include "fam/text.hpp"

namespace fam {

namespace {

// Stream ids for Rng::derive.
constexpr std::uint64_t kInitStream = 0x696e6974;     // "init"
constexpr std::uint64_t kRolloutStream = 0x726f6c6c;  // "roll"
constexpr std::uint64_t kTrainStream = 0x7472616e;    // "tran"

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what + " loss");
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string na_or(const std::optional<double>& v) {
  return v ? text::format_double(*v) : std::string("NA");
}

std::string slot_prefix(std::size_t slot) { return "agent" + std::to_string(slot); }

void append_line(const std::filesystem::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  out << line << '\n';
  out.flush();
  if (!out) throw RunError("cannot write " + path.string());
}

}  // namespace

Wiring make_wiring(const RunConfig& c) {
  Wiring w;
  w.algorithm = c.algorithm;
  w.n_agents = c.env.n_agents;
  w.obs_dim = env::observation_dim(c.env);
  switch (c.algorithm) {
    case Algorithm::kFam:
    case Algorithm::kFamWoInOa:
    case Algorithm::kFamWoRecObs:
    case Algorithm::kFamWoRecRew:
      w.uses_fbi = true;
      w.ppo = true;
      w.critic_input = CriticInput::kLocalLatent;
      break;
    case Algorithm::kIppo:
      w.uses_fbi = false;
      w.ppo = true;
      w.critic_input = CriticInput::kLocal;
      break;
    case Algorithm::kIa2c:
      w.uses_fbi = false;
      w.ppo = false;
      w.critic_input = CriticInput::kLocal;
      break;
    case Algorithm::kMappo:
      w.uses_fbi = false;
      w.ppo = true;
      w.critic_input = CriticInput::kJoint;
      break;
    case Algorithm::kMaa2c:
      w.uses_fbi = false;
      w.ppo = false;
      w.critic_input = CriticInput::kJoint;
      break;
  }
  w.latent_dim = w.uses_fbi ? c.latent_dim : 0;
  w.actor_input_width = w.obs_dim + w.latent_dim;
  switch (w.critic_input) {
    case CriticInput::kLocal:
      w.critic_input_width = w.obs_dim;
      break;
    case CriticInput::kLocalLatent:
      w.critic_input_width = w.obs_dim + w.latent_dim;
      break;
    case CriticInput::kJoint:
      w.critic_input_width = w.obs_dim * static_cast<std::size_t>(w.n_agents);
      break;
  }
  w.fbi.obs_dim = w.obs_dim;
  w.fbi.latent_dim = c.latent_dim;
  w.fbi.hidden = c.hidden;
  w.fbi.beta = c.beta;
  w.fbi.decoder_uses_obs_action = c.algorithm != Algorithm::kFamWoInOa;
  w.fbi.reconstruct_obs = c.algorithm != Algorithm::kFamWoRecObs;
  w.fbi.reconstruct_reward = c.algorithm != Algorithm::kFamWoRecRew;
  return w;
}

AgentStack build_variant(const RunConfig& c, Rng& rng) {
  AgentStack stack;
  stack.wiring = make_wiring(c);
  stack.shared = c.share_params;
  const auto& w = stack.wiring;
  const std::size_t slots = c.share_params ? 1 : static_cast<std::size_t>(w.n_agents);
  nn::AdamConfig adam;
  adam.max_grad_norm = c.max_grad_norm;
  for (std::size_t s = 0; s < slots; ++s) {
    AgentModels m;
    m.actor = rl::make_actor(w.actor_input_width, c.hidden, rng);
    m.critic = rl::make_critic(w.critic_input_width, c.hidden, rng);
    m.actor_old = m.actor;
    m.critic_target = m.critic;
    if (c.maintain_all_targets) m.actor_target = m.actor;
    m.actor_opt = nn::Adam(m.actor.params, adam);
    m.critic_opt = nn::Adam(m.critic.params, adam);
    if (w.uses_fbi) {
      m.fbi = fbi::make_model(w.fbi, rng);
      if (c.maintain_all_targets) m.fbi_target = m.fbi;
      m.psi_opt = nn::Adam(m.fbi->params.psi, adam);
      m.phi_opt = nn::Adam(m.fbi->params.phi, adam);
      m.varphi_opt = nn::Adam(m.fbi->params.varphi, adam);
    }
    stack.models.push_back(std::move(m));
  }
  return stack;
}

nn::Matrix actor_inputs(const TrajectoryBatch& batch, int agent, const Wiring& w) {
  const auto& a = batch.agents.at(static_cast<std::size_t>(agent));
  return w.uses_fbi ? rl::concat_inputs(a.obs, a.latent) : a.obs;
}

nn::Matrix critic_inputs(const TrajectoryBatch& batch, int agent, const Wiring& w, bool next) {
  const auto& a = batch.agents.at(static_cast<std::size_t>(agent));
  switch (w.critic_input) {
    case CriticInput::kLocal:
      return next ? a.next_obs : a.obs;
    case CriticInput::kLocalLatent:
      return next ? rl::concat_inputs(a.next_obs, a.next_latent) : rl::concat_inputs(a.obs, a.latent);
    case CriticInput::kJoint:
      return joint_observations(batch, next);
  }
  return {};
}

TrajectoryBatch collect_rollouts(std::vector<env::ParticleEnv>& envs, const AgentStack& stack,
                                 int episodes, Rng& rng, bool deterministic,
                                 bool time_limit_bootstrap) {
  if (envs.empty()) throw InputError("collect_rollouts: no environments");
  if (episodes < 1) throw InputError("collect_rollouts: episode count must be >= 1");
  const Wiring& w = stack.wiring;
  const env::EnvConfig& ecfg = envs.front().config();
  if (ecfg.n_agents != w.n_agents || env::observation_dim(ecfg) != w.obs_dim) {
    throw InputError("collect_rollouts: environment does not match the agent stack");
  }
  const int horizon = ecfg.episode_len;
  const int n = w.n_agents;
  const std::size_t obs_dim = w.obs_dim;
  const std::size_t d = w.latent_dim;
  const auto mode = deterministic ? rl::ActMode::kGreedy : rl::ActMode::kSample;
  Rng* sample_rng = deterministic ? nullptr : &rng;

  TrajectoryBatch batch;
  batch.allocate(episodes, horizon, n, obs_dim, d);

  const int wave = static_cast<int>(envs.size());
  for (int first = 0; first < episodes; first += wave) {
    const int k = std::min(wave, episodes - first);
    const auto rows = static_cast<std::size_t>(k);
    for (int j = 0; j < k; ++j) {
      const std::uint64_t seed = rng.next_u64();
      batch.episode_seeds[static_cast<std::size_t>(first + j)] = seed;
      envs[static_cast<std::size_t>(j)].reset(seed);
    }

    std::vector<nn::Matrix> obs(static_cast<std::size_t>(n), nn::Matrix(rows, obs_dim));
    std::vector<nn::Matrix> z(static_cast<std::size_t>(n), nn::Matrix(rows, d));
    std::vector<nn::Matrix> hidden;
    if (w.uses_fbi) hidden.assign(static_cast<std::size_t>(n), nn::Matrix(rows, w.fbi.hidden));
    std::vector<std::vector<int>> prev_action(static_cast<std::size_t>(n), std::vector<int>(rows, -1));
    std::vector<double> prev_reward(rows, 0.0);

    auto load_obs = [&] {
      for (std::size_t j = 0; j < rows; ++j) {
        const auto& o = envs[j].observations();
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
          std::copy(o[i].begin(), o[i].end(), obs[i].row_ptr(j));
        }
      }
    };
    // Advances agent i's encoder on (o_t, u_{t-1}, r_t) and draws z_t.
    auto infer = [&](std::size_t i) {
      const auto& model = *stack.agent(static_cast<int>(i)).fbi;
      nn::Matrix in(rows, obs_dim + env::kNumActions + 1);
      for (std::size_t j = 0; j < rows; ++j) {
        double* dst = in.row_ptr(j);
        std::copy_n(obs[i].row_ptr(j), obs_dim, dst);
        if (prev_action[i][j] >= 0) dst[obs_dim + static_cast<std::size_t>(prev_action[i][j])] = 1.0;
        dst[obs_dim + env::kNumActions] = prev_reward[j];
      }
      fbi::BatchPosterior post = fbi::encode_step_batch(model, hidden[i], in);
      hidden[i] = post.hidden;
      for (std::size_t j = 0; j < rows; ++j) {
        for (std::size_t c = 0; c < d; ++c) {
          const double mu = post.mu(j, c);
          z[i](j, c) = deterministic ? mu : mu + std::exp(post.log_sigma(j, c)) * rng.normal();
        }
      }
      return post;
    };

    load_obs();
    std::vector<std::vector<int>> joint(rows, std::vector<int>(static_cast<std::size_t>(n), 0));
    for (int t = 0; t < horizon; ++t) {
      nn::Matrix joint_obs;
      if (w.critic_input == CriticInput::kJoint) joint_obs = nn::concat_cols([&] {
        std::vector<const nn::Matrix*> parts;
        for (const auto& m : obs) parts.push_back(&m);
        return parts;
      }());
      for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        const auto& models = stack.agent(static_cast<int>(i));
        auto& traj = batch.agents[i];
        if (w.uses_fbi) {
          const auto post = infer(i);
          for (std::size_t j = 0; j < rows; ++j) {
            const std::size_t r = batch.row(first + static_cast<int>(j), t);
            std::copy_n(post.mu.row_ptr(j), d, traj.mu.row_ptr(r));
            std::copy_n(post.log_sigma.row_ptr(j), d, traj.log_sigma.row_ptr(r));
            std::copy_n(z[i].row_ptr(j), d, traj.latent.row_ptr(r));
            if (t > 0) std::copy_n(z[i].row_ptr(j), d, traj.next_latent.row_ptr(r - 1));
          }
        }
        const nn::Matrix a_in = rl::concat_inputs(obs[i], z[i]);
        const auto policy = rl::act_batch(models.actor, a_in, mode, sample_rng);
        nn::Matrix c_in;
        switch (w.critic_input) {
          case CriticInput::kLocal: c_in = obs[i]; break;
          case CriticInput::kLocalLatent: c_in = a_in; break;
          case CriticInput::kJoint: c_in = joint_obs; break;
        }
        const auto values = rl::value_batch(models.critic, c_in);
        for (std::size_t j = 0; j < rows; ++j) {
          const std::size_t r = batch.row(first + static_cast<int>(j), t);
          std::copy_n(obs[i].row_ptr(j), obs_dim, traj.obs.row_ptr(r));
          traj.actions[r] = policy[j].action;
          traj.old_log_probs[r] = policy[j].log_prob;
          traj.values[r] = values[j];
          joint[j][i] = policy[j].action;
        }
      }

      for (std::size_t j = 0; j < rows; ++j) {
        const int episode = first + static_cast<int>(j);
        const env::StepResult* res = nullptr;
        try {
          res = &envs[j].step(joint[j]);
        } catch (const std::exception& e) {
          throw RunError("episode " + std::to_string(episode) + ": " + e.what());
        }
        const std::size_t r = batch.row(episode, t);
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
          batch.agents[i].rewards[r] = res->team_reward;
          prev_action[i][j] = joint[j][i];
        }
        prev_reward[j] = res->team_reward;
        batch.states[r] = envs[j].state();
        const bool end = res->done || t == horizon - 1;
        batch.episode_end[r] = end ? 1 : 0;
        batch.terminal[r] = (end && !time_limit_bootstrap) ? 1 : 0;
      }
      load_obs();
      for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        for (std::size_t j = 0; j < rows; ++j) {
          const std::size_t r = batch.row(first + static_cast<int>(j), t);
          std::copy_n(obs[i].row_ptr(j), obs_dim, batch.agents[i].next_obs.row_ptr(r));
        }
      }
    }
    // z_T for the critic's next-state input of the final transition.
    if (w.uses_fbi) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        infer(i);
        for (std::size_t j = 0; j < rows; ++j) {
          const std::size_t r = batch.row(first + static_cast<int>(j), horizon - 1);
          std::copy_n(z[i].row_ptr(j), d, batch.agents[i].next_latent.row_ptr(r));
        }
      }
    }
  }
  return batch;
}

LossReport train_epoch(TrajectoryBatch& batch, AgentStack& stack, const RunConfig& c, Rng& rng) {
  if (batch.empty()) throw InputError("train_epoch: empty batch");
  const Wiring& w = stack.wiring;
  if (batch.n_agents != w.n_agents || batch.obs_dim != w.obs_dim || batch.latent_dim != w.latent_dim) {
    throw InputError("train_epoch: batch does not match the agent stack");
  }
  const int n = w.n_agents;

  for (auto& m : stack.models) m.actor_old.params = m.actor.params;

  struct Inputs {
    nn::Matrix actor;
    nn::Matrix critic;
    nn::Matrix critic_next;
  };
  std::vector<Inputs> inputs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& in = inputs[static_cast<std::size_t>(i)];
    in.actor = actor_inputs(batch, i, w);
    in.critic = critic_inputs(batch, i, w, false);
    in.critic_next = critic_inputs(batch, i, w, true);
    auto& traj = batch.agents[static_cast<std::size_t>(i)];
    const auto& m = stack.agent(i);
    traj.old_log_probs = rl::log_probs(m.actor_old, in.actor, traj.actions);
    rl::returns_and_advantages(batch, i, m.critic_target, in.critic_next, c.gamma,
                               c.normalize_advantages);
  }

  LossReport report;
  double sum_actor = 0.0, sum_critic = 0.0, sum_entropy = 0.0;
  double sum_fbi = 0.0, sum_kl = 0.0, sum_obs = 0.0, sum_rew = 0.0;
  int rl_count = 0, fbi_count = 0;
  const int passes = w.ppo ? c.epochs : 1;
  try {
    for (int pass = 0; pass < passes; ++pass) {
      for (int i = 0; i < n; ++i) {
        auto& m = stack.agent(i);
        const auto& in = inputs[static_cast<std::size_t>(i)];
        const auto& traj = batch.agents[static_cast<std::size_t>(i)];
        if (w.ppo) {
          auto critic = rl::critic_loss(m.critic, m.critic_target, in.critic, in.critic_next,
                                        traj.rewards, batch.terminal, c.gamma);
          require_finite(critic.value, "critic");
          m.critic_opt.update(m.critic.params, critic.grads, c.alpha1);
          auto actor = rl::actor_loss_ppo(m.actor, in.actor, traj.actions, traj.old_log_probs,
                                          traj.advantages, c.epsilon_clip, c.entropy_coef);
          require_finite(actor.value, "actor");
          m.actor_opt.update(m.actor.params, actor.grads, c.alpha1);
          sum_critic += critic.value;
          sum_actor += actor.value;
          sum_entropy += actor.entropy;
        } else {
          auto losses = rl::a2c_losses(m.actor, m.critic, in.actor, in.critic, traj.actions,
                                       traj.returns, traj.advantages, c.entropy_coef);
          require_finite(losses.critic.value, "critic");
          require_finite(losses.actor.value, "actor");
          m.critic_opt.update(m.critic.params, losses.critic.grads, c.alpha1);
          m.actor_opt.update(m.actor.params, losses.actor.grads, c.alpha1);
          sum_critic += losses.critic.value;
          sum_actor += losses.actor.value;
          sum_entropy += losses.entropy;
        }
        ++rl_count;

        if (w.uses_fbi) {
          nn::Matrix noise(batch.size(), w.latent_dim);
          for (double& v : noise.data()) v = rng.normal();
          auto f = fbi::fbi_loss(*m.fbi, batch, i, noise);
          require_finite(f.value, "belief inference");
          m.psi_opt.update(m.fbi->params.psi, f.grad_psi, c.alpha2);
          m.phi_opt.update(m.fbi->params.phi, f.grad_phi, c.alpha2);
          m.varphi_opt.update(m.fbi->params.varphi, f.grad_varphi, c.alpha2);
          sum_fbi += f.value;
          sum_kl += f.components.kl;
          sum_obs += f.components.recon_obs;
          sum_rew += f.components.recon_rew;
          ++fbi_count;
        }
      }
    }
  } catch (const NumericError& e) {
    report.aborted = true;
    report.abort_reason = e.what();
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inv_rl = rl_count > 0 ? 1.0 / rl_count : nan;
  report.loss_actor = sum_actor * inv_rl;
  report.loss_critic = sum_critic * inv_rl;
  report.entropy = sum_entropy * inv_rl;
  if (w.uses_fbi) {
    const double inv = fbi_count > 0 ? 1.0 / fbi_count : nan;
    report.loss_fbi = sum_fbi * inv;
    report.kl = sum_kl * inv;
    if (w.fbi.reconstruct_obs) report.recon_obs = sum_obs * inv;
    if (w.fbi.reconstruct_reward) report.recon_rew = sum_rew * inv;
  }
  report.total = report.loss_actor + report.loss_critic + report.loss_fbi.value_or(0.0);
  batch.clear();
  return report;
}

void soft_update_targets(AgentStack& stack, double tau) {
  for (auto& m : stack.models) {
    nn::soft_update(m.critic_target.params, m.critic.params, tau);
    if (m.actor_target) nn::soft_update(m.actor_target->params, m.actor.params, tau);
    if (m.fbi_target && m.fbi) {
      nn::soft_update(m.fbi_target->params.psi, m.fbi->params.psi, tau);
      nn::soft_update(m.fbi_target->params.phi, m.fbi->params.phi, tau);
      nn::soft_update(m.fbi_target->params.varphi, m.fbi->params.varphi, tau);
    }
  }
}

std::string metric_header() {
  return "step\tmean_episode_return\toccupied_landmarks\tloss_actor\tloss_critic\tloss_fbi\tkl\t"
         "recon_obs\trecon_rew\tentropy\twall_time";
}

std::string format_metric_row(const MetricRow& row) {
  const auto& l = row.losses;
  std::string out = std::to_string(row.step);
  for (const auto& v : {std::optional<double>(row.mean_episode_return), row.occupied_landmarks,
                        std::optional<double>(l.loss_actor), std::optional<double>(l.loss_critic),
                        l.loss_fbi, l.kl, l.recon_obs, l.recon_rew, std::optional<double>(l.entropy),
                        std::optional<double>(row.wall_time)}) {
    out += '\t';
    out += na_or(v);
  }
  return out;
}

void add_stack(nn::Checkpoint& ckpt, const AgentStack& stack) {
  ckpt.set_meta("algorithm", std::string(to_string(stack.wiring.algorithm)));
  ckpt.set_meta("slots", std::to_string(stack.models.size()));
  for (std::size_t s = 0; s < stack.models.size(); ++s) {
    const auto& m = stack.models[s];
    const std::string p = slot_prefix(s);
    ckpt.add_params(p + "/actor", m.actor.params);
    ckpt.add_params(p + "/actor_old", m.actor_old.params);
    ckpt.add_params(p + "/critic", m.critic.params);
    ckpt.add_params(p + "/critic_target", m.critic_target.params);
    ckpt.add_optimizer(p + "/opt/actor", m.actor_opt);
    ckpt.add_optimizer(p + "/opt/critic", m.critic_opt);
    if (m.actor_target) ckpt.add_params(p + "/actor_target", m.actor_target->params);
    if (m.fbi) {
      ckpt.add_params(p + "/psi", m.fbi->params.psi);
      ckpt.add_params(p + "/phi", m.fbi->params.phi);
      ckpt.add_params(p + "/varphi", m.fbi->params.varphi);
      ckpt.add_optimizer(p + "/opt/psi", m.psi_opt);
      ckpt.add_optimizer(p + "/opt/phi", m.phi_opt);
      ckpt.add_optimizer(p + "/opt/varphi", m.varphi_opt);
    }
    if (m.fbi_target) {
      ckpt.add_params(p + "/psi_target", m.fbi_target->params.psi);
      ckpt.add_params(p + "/phi_target", m.fbi_target->params.phi);
      ckpt.add_params(p + "/varphi_target", m.fbi_target->params.varphi);
    }
  }
}

AgentStack load_stack(const nn::Checkpoint& ckpt, const RunConfig& config) {
  Rng scratch(0);
  AgentStack stack = build_variant(config, scratch);
  const auto algorithm = ckpt.get_meta("algorithm");
  if (!algorithm || *algorithm != to_string(config.algorithm)) {
    throw IoError("checkpoint algorithm does not match the configuration");
  }
  const auto slots = ckpt.get_meta("slots");
  if (!slots || *slots != std::to_string(stack.models.size())) {
    throw IoError("checkpoint agent count does not match the configuration");
  }
  for (std::size_t s = 0; s < stack.models.size(); ++s) {
    auto& m = stack.models[s];
    const std::string p = slot_prefix(s);
    ckpt.load_params(p + "/actor", m.actor.params);
    ckpt.load_params(p + "/actor_old", m.actor_old.params);
    ckpt.load_params(p + "/critic", m.critic.params);
    ckpt.load_params(p + "/critic_target", m.critic_target.params);
    ckpt.load_optimizer(p + "/opt/actor", m.actor_opt);
    ckpt.load_optimizer(p + "/opt/critic", m.critic_opt);
    if (m.actor_target) ckpt.load_params(p + "/actor_target", m.actor_target->params);
    if (m.fbi) {
      ckpt.load_params(p + "/psi", m.fbi->params.psi);
      ckpt.load_params(p + "/phi", m.fbi->params.phi);
      ckpt.load_params(p + "/varphi", m.fbi->params.varphi);
      ckpt.load_optimizer(p + "/opt/psi", m.psi_opt);
      ckpt.load_optimizer(p + "/opt/phi", m.phi_opt);
      ckpt.load_optimizer(p + "/opt/varphi", m.varphi_opt);
    }
    if (m.fbi_target) {
      ckpt.load_params(p + "/psi_target", m.fbi_target->params.psi);
      ckpt.load_params(p + "/phi_target", m.fbi_target->params.phi);
      ckpt.load_params(p + "/varphi_target", m.fbi_target->params.varphi);
    }
  }
  return stack;
}

Trainer::Trainer(RunConfig config)
    : config_(std::move(config)),
      rollout_rng_(Rng::derive(config_.seed, kRolloutStream)),
      train_rng_(Rng::derive(config_.seed, kTrainStream)),
      started_(std::chrono::steady_clock::now()) {
  validate(config_);
  Rng init = Rng::derive(config_.seed, kInitStream);
  stack_ = build_variant(config_, init);
  envs_.assign(static_cast<std::size_t>(config_.n_envs), env::ParticleEnv(config_.env));
}

Trainer Trainer::resume(const nn::Checkpoint& ckpt) {
  Trainer t(from_text(ckpt.config_text));
  t.stack_ = load_stack(ckpt, t.config_);
  auto need = [&](const char* key) {
    auto v = ckpt.get_meta(key);
    if (!v) throw IoError(std::string("checkpoint lacks '") + key + "'");
    return *v;
  };
  t.rollout_rng_.deserialize(need("rng:rollout"));
  t.train_rng_.deserialize(need("rng:train"));
  t.steps_ = text::parse_uint(need("step"), "step");
  t.cycles_ = text::parse_uint(need("cycle"), "cycle");
  t.elapsed_ = text::parse_double(need("wall_time"), "wall_time");
  return t;
}

MetricRow Trainer::cycle() {
  if (finished()) throw StateError("training already reached total_steps");
  TrajectoryBatch batch = collect_rollouts(envs_, stack_, config_.batch_episodes, rollout_rng_,
                                           false, config_.time_limit_bootstrap);
  MetricRow row;
  row.mean_episode_return = mean(batch.episode_returns());
  if (config_.env.task == env::Task::kCooperativeNavigation) {
    std::vector<double> occ;
    for (int e = 0; e < batch.episodes; ++e) {
      occ.push_back(env::count_occupied(batch.states[batch.row(e, batch.horizon - 1)], config_.env));
    }
    row.occupied_landmarks = mean(occ);
  }
  row.losses = train_epoch(batch, stack_, config_, train_rng_);
  soft_update_targets(stack_, config_.tau_soft);
  steps_ += config_.steps_per_cycle();
  ++cycles_;
  row.step = steps_;
  row.wall_time =
      elapsed_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  return row;
}

nn::Checkpoint Trainer::checkpoint() const {
  nn::Checkpoint ckpt;
  ckpt.config_text = to_text(config_);
  ckpt.set_meta("step", std::to_string(steps_));
  ckpt.set_meta("cycle", std::to_string(cycles_));
  ckpt.set_meta("rng:rollout", rollout_rng_.serialize());
  ckpt.set_meta("rng:train", train_rng_.serialize());
  ckpt.set_meta("wall_time",
                text::format_double(elapsed_ + std::chrono::duration<double>(
                                                   std::chrono::steady_clock::now() - started_)
                                                   .count()));
  add_stack(ckpt, stack_);
  return ckpt;
}

namespace {

std::string eval_header() { return "step\tavg_return\tavg_final_reward\tavg_occupied\tavg_distance"; }

std::string eval_row(std::uint64_t step, const EvalReport& r) {
  return std::to_string(step) + '\t' + text::format_double(r.avg_return) + '\t' +
         text::format_double(r.avg_final_reward) + '\t' + na_or(r.avg_occupied) + '\t' +
         text::format_double(r.avg_distance);
}

void ensure_header(const std::filesystem::path& path, const std::string& header, bool fresh) {
  if (!fresh && std::filesystem::exists(path)) return;
  std::ofstream out(path, std::ios::trunc);
  out << header << '\n';
  if (!out) throw RunError("cannot write " + path.string());
}

}  // namespace

RunArtifacts run(const RunConfig& config, const RunOptions& options) {
  validate(config);
  std::optional<Trainer> trainer;
  if (options.resume_from) {
    nn::Checkpoint ckpt;
    try {
      ckpt = nn::read_checkpoint(*options.resume_from);
    } catch (const IoError& e) {
      throw RunError(std::string("cannot resume: ") + e.what());
    }
    trainer.emplace(Trainer::resume(ckpt));
  } else {
    trainer.emplace(config);
  }
  const RunConfig& cfg = trainer->config();
  const bool fresh = !options.resume_from;

  RunArtifacts art;
  art.out_dir = options.out_dir;
  art.config_path = art.out_dir / "config.cfg";
  art.metric_log = art.out_dir / "metrics.tsv";
  art.eval_log = art.out_dir / "eval.tsv";
  const auto ckpt_dir = art.out_dir / "checkpoints";
  std::error_code ec;
  std::filesystem::create_directories(ckpt_dir, ec);
  if (ec) throw RunError("cannot create " + ckpt_dir.string() + ": " + ec.message());
  {
    std::ofstream out(art.config_path, std::ios::trunc);
    out << to_text(cfg);
    if (!out) throw RunError("cannot write " + art.config_path.string());
  }
  ensure_header(art.metric_log, metric_header(), fresh);
  ensure_header(art.eval_log, eval_header(), fresh);

  auto save = [&](const std::filesystem::path& path) {
    try {
      nn::write_checkpoint(path, trainer->checkpoint());
    } catch (const std::exception& e) {
      throw RunError(std::string("checkpoint write failed: ") + e.what());
    }
    art.checkpoints.push_back(path);
  };
  std::optional<std::uint64_t> last_eval;
  auto run_eval = [&] {
    const auto report = evaluate(trainer->stack(), cfg, cfg.eval_episodes, true, eval_seed(cfg));
    append_line(art.eval_log, eval_row(trainer->steps(), report));
    last_eval = trainer->steps();
  };

  if (fresh && cfg.eval_interval > 0) run_eval();
  while (!trainer->finished()) {
    const std::uint64_t before = trainer->steps();
    MetricRow row = trainer->cycle();
    append_line(art.metric_log, format_metric_row(row));
    if (row.losses.aborted) {
      const std::string msg = "step " + std::to_string(row.step) +
                              ": update aborted: " + row.losses.abort_reason;
      std::cerr << msg << '\n';
      append_line(art.out_dir / "events.log", msg);
    }
    if (options.on_row) options.on_row(row);
    art.rows.push_back(std::move(row));
    const std::uint64_t after = trainer->steps();
    if (cfg.eval_interval > 0 && after / cfg.eval_interval != before / cfg.eval_interval) run_eval();
    if (cfg.checkpoint_interval > 0 &&
        after / cfg.checkpoint_interval != before / cfg.checkpoint_interval) {
      char name[64];
      std::snprintf(name, sizeof name, "step_%012llu.ckpt", static_cast<unsigned long long>(after));
      save(ckpt_dir / name);
    }
  }
  if (cfg.eval_interval > 0 && last_eval != trainer->steps()) run_eval();
  art.final_checkpoint = art.out_dir / "final.ckpt";
  save(art.final_checkpoint);
  return art;
}

}  // namespace fam
