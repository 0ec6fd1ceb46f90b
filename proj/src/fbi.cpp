#include "fam/fbi.hpp"

#include <algorithm>
#include <cmath>

#include "fam/errors.hpp"
#include "fam/rng.hpp"

namespace fam::fbi {

FbiModel make_model(const FbiConfig& config, Rng& rng) {
  if (config.latent_dim == 0 || config.hidden == 0 || config.obs_dim == 0) {
    throw ConfigError("fbi widths must be >= 1");
  }
  if (!(config.beta >= 0.0)) throw ConfigError("fbi beta must be >= 0");
  FbiModel m;
  m.config = config;
  m.params.beta = config.beta;
  const std::size_t h = config.hidden;
  const std::size_t d = config.latent_dim;

  m.encoder_features = nn::Mlp(
      m.params.psi, "features.",
      {{nn::LayerKind::kAffine, m.encoder_input_width(), h, nn::Activation::kRelu, std::sqrt(2.0)}});
  m.encoder_gru = nn::Gru(m.params.psi, "", h, h);
  m.encoder_head =
      nn::Mlp(m.params.psi, "head.", {{nn::LayerKind::kAffine, h, 2 * d, nn::Activation::kNone, 1.0}});
  m.obs_decoder =
      nn::Mlp(m.params.phi, "", nn::mlp_specs(m.decoder_input_width(), {h, h}, config.obs_dim));
  m.rew_decoder = nn::Mlp(m.params.varphi, "", nn::mlp_specs(m.decoder_input_width(), {h, h}, 1));

  m.encoder_features.init(m.params.psi, rng);
  m.encoder_gru.init(m.params.psi, rng);
  m.encoder_head.init(m.params.psi, rng);
  m.obs_decoder.init(m.params.phi, rng);
  m.rew_decoder.init(m.params.varphi, rng);
  return m;
}

namespace {

double clamp_log_sigma(double raw) { return std::clamp(raw, kLogSigmaMin, kLogSigmaMax); }

void split_heads(const nn::Matrix& heads, std::size_t d, nn::Matrix& mu, nn::Matrix& log_sigma) {
  mu.resize(heads.rows(), d);
  log_sigma.resize(heads.rows(), d);
  for (std::size_t r = 0; r < heads.rows(); ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      mu(r, j) = heads(r, j);
      log_sigma(r, j) = clamp_log_sigma(heads(r, d + j));
    }
  }
}

nn::Matrix decoder_inputs(const FbiModel& m, std::span<const double> obs,
                          std::span<const double> action_one_hot, std::span<const double> z) {
  if (z.size() != m.config.latent_dim) throw InputError("decoder: latent width mismatch");
  if (!m.config.decoder_uses_obs_action) return nn::Matrix::from_row(z);
  if (obs.size() != m.config.obs_dim || action_one_hot.size() != static_cast<std::size_t>(env::kNumActions)) {
    throw InputError("decoder: observation/action width mismatch");
  }
  nn::Matrix x(1, m.decoder_input_width());
  double* dst = x.row_ptr(0);
  dst = std::copy(obs.begin(), obs.end(), dst);
  dst = std::copy(action_one_hot.begin(), action_one_hot.end(), dst);
  std::copy(z.begin(), z.end(), dst);
  return x;
}

}  // namespace

BatchPosterior encode_step_batch(const FbiModel& model, const nn::Matrix& hidden,
                                 const nn::Matrix& inputs) {
  const auto& psi = model.params.psi;
  const nn::Matrix features = model.encoder_features.forward(psi, inputs);
  BatchPosterior out;
  out.hidden = model.encoder_gru.step(psi, features, hidden);
  const nn::Matrix heads = model.encoder_head.forward(psi, out.hidden);
  split_heads(heads, model.config.latent_dim, out.mu, out.log_sigma);
  return out;
}

Posterior encode_step(const FbiModel& model, const nn::RecurrentState& hidden,
                      std::span<const double> obs, std::span<const double> prev_action_one_hot,
                      double reward) {
  if (obs.size() != model.config.obs_dim ||
      prev_action_one_hot.size() != static_cast<std::size_t>(env::kNumActions) ||
      hidden.hidden.size() != model.config.hidden) {
    throw InputError("encode_step: shape mismatch");
  }
  nn::Matrix x(1, model.encoder_input_width());
  double* dst = x.row_ptr(0);
  dst = std::copy(obs.begin(), obs.end(), dst);
  dst = std::copy(prev_action_one_hot.begin(), prev_action_one_hot.end(), dst);
  *dst = reward;
  const BatchPosterior b = encode_step_batch(model, nn::Matrix::from_row(hidden.hidden), x);
  Posterior p;
  p.state.hidden.assign(b.hidden.data().begin(), b.hidden.data().end());
  p.state.step = hidden.step + 1;
  p.mu.assign(b.mu.data().begin(), b.mu.data().end());
  p.log_sigma.assign(b.log_sigma.data().begin(), b.log_sigma.data().end());
  return p;
}

std::vector<double> sample_latent(std::span<const double> mu, std::span<const double> log_sigma,
                                  std::span<const double> epsilon) {
  if (mu.size() != log_sigma.size() || mu.size() != epsilon.size()) {
    throw InputError("sample_latent: width mismatch");
  }
  std::vector<double> z(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) z[j] = mu[j] + std::exp(log_sigma[j]) * epsilon[j];
  return z;
}

std::vector<double> decode_obs(const FbiModel& model, std::span<const double> obs,
                               std::span<const double> action_one_hot, std::span<const double> z) {
  const nn::Matrix out =
      model.obs_decoder.forward(model.params.phi, decoder_inputs(model, obs, action_one_hot, z));
  return {out.data().begin(), out.data().end()};
}

double decode_rew(const FbiModel& model, std::span<const double> obs,
                  std::span<const double> action_one_hot, std::span<const double> z) {
  return model.rew_decoder.forward(model.params.varphi, decoder_inputs(model, obs, action_one_hot, z))(0, 0);
}

double kl_to_standard_normal(std::span<const double> mu, std::span<const double> log_sigma) {
  if (mu.size() != log_sigma.size()) throw InputError("kl: width mismatch");
  double sum = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const double var = std::exp(2.0 * log_sigma[j]);
    sum += 1.0 + 2.0 * log_sigma[j] - mu[j] * mu[j] - var;
  }
  return -0.5 * sum;
}

namespace {

struct EncoderPass {
  nn::MlpCache features_cache;
  std::vector<nn::GruCache> gru_cache;  // one per time step
  nn::MlpCache head_cache;
  nn::Matrix heads;
};

// Re-runs the encoder over all episodes of `batch` in lockstep over time.
EncoderPass run_encoder(const FbiModel& model, const TrajectoryBatch& batch, int agent, bool keep_cache) {
  const auto& psi = model.params.psi;
  const std::size_t h = model.config.hidden;
  const auto episodes = static_cast<std::size_t>(batch.episodes);
  EncoderPass pass;
  const nn::Matrix x = encoder_inputs(batch, agent);
  const nn::Matrix features =
      model.encoder_features.forward(psi, x, keep_cache ? &pass.features_cache : nullptr);

  nn::Matrix all_hidden(batch.size(), h);
  nn::Matrix hidden(episodes, h);
  nn::Matrix step_features(episodes, h);
  if (keep_cache) pass.gru_cache.resize(static_cast<std::size_t>(batch.horizon));
  for (int t = 0; t < batch.horizon; ++t) {
    for (std::size_t e = 0; e < episodes; ++e) {
      std::copy_n(features.row_ptr(batch.row(static_cast<int>(e), t)), h, step_features.row_ptr(e));
    }
    hidden = model.encoder_gru.step(psi, step_features, hidden,
                                    keep_cache ? &pass.gru_cache[static_cast<std::size_t>(t)] : nullptr);
    for (std::size_t e = 0; e < episodes; ++e) {
      std::copy_n(hidden.row_ptr(e), h, all_hidden.row_ptr(batch.row(static_cast<int>(e), t)));
    }
  }
  pass.heads = model.encoder_head.forward(psi, all_hidden, keep_cache ? &pass.head_cache : nullptr);
  return pass;
}

}  // namespace

BatchPosterior encode_batch(const FbiModel& model, const TrajectoryBatch& batch, int agent) {
  const EncoderPass pass = run_encoder(model, batch, agent, false);
  BatchPosterior out;
  split_heads(pass.heads, model.config.latent_dim, out.mu, out.log_sigma);
  return out;
}

FbiLossResult fbi_loss(const FbiModel& model, const TrajectoryBatch& batch, int agent,
                       const nn::Matrix& noise, bool compute_gradients) {
  if (batch.empty()) throw InputError("fbi_loss: empty batch");
  if (agent < 0 || agent >= batch.n_agents) throw InputError("fbi_loss: agent out of range");
  const FbiConfig& cfg = model.config;
  const std::size_t d = cfg.latent_dim;
  const std::size_t m = batch.size();
  if (batch.obs_dim != cfg.obs_dim) throw InputError("fbi_loss: observation width mismatch");
  if (noise.rows() != m || noise.cols() != d) throw InputError("fbi_loss: noise shape mismatch");
  const auto& traj = batch.agents[static_cast<std::size_t>(agent)];
  const double inv_m = 1.0 / static_cast<double>(m);
  const double beta = model.params.beta;

  EncoderPass pass = run_encoder(model, batch, agent, compute_gradients);
  nn::Matrix mu;
  nn::Matrix log_sigma;
  split_heads(pass.heads, d, mu, log_sigma);

  // Decoder input rows: [o_t, onehot(u_t), z_t] or [z_t].
  const std::size_t z_offset = cfg.decoder_uses_obs_action ? cfg.obs_dim + env::kNumActions : 0;
  nn::Matrix dec_in(m, model.decoder_input_width());
  for (std::size_t r = 0; r < m; ++r) {
    double* dst = dec_in.row_ptr(r);
    if (cfg.decoder_uses_obs_action) {
      std::copy_n(traj.obs.row_ptr(r), cfg.obs_dim, dst);
      dst[cfg.obs_dim + static_cast<std::size_t>(traj.actions[r])] = 1.0;
    }
    for (std::size_t j = 0; j < d; ++j) {
      dst[z_offset + j] = mu(r, j) + std::exp(log_sigma(r, j)) * noise(r, j);
    }
  }

  FbiLossResult result;
  if (compute_gradients) {
    result.grad_psi = model.params.psi.zeros_like();
    result.grad_phi = model.params.phi.zeros_like();
    result.grad_varphi = model.params.varphi.zeros_like();
  }
  nn::Matrix grad_dec_in(m, dec_in.cols());

  if (cfg.reconstruct_obs) {
    nn::MlpCache cache;
    const nn::Matrix pred = model.obs_decoder.forward(model.params.phi, dec_in, compute_gradients ? &cache : nullptr);
    nn::Matrix grad(m, cfg.obs_dim);
    double sum = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t k = 0; k < cfg.obs_dim; ++k) {
        const double diff = pred(r, k) - traj.next_obs(r, k);
        sum += diff * diff;
        grad(r, k) = 2.0 * diff * inv_m;
      }
    }
    result.components.recon_obs = sum * inv_m;
    if (compute_gradients) {
      nn::Matrix grad_in;
      model.obs_decoder.backward(model.params.phi, cache, grad, result.grad_phi, &grad_in);
      for (std::size_t i = 0; i < grad_in.size(); ++i) grad_dec_in.data()[i] += grad_in.data()[i];
    }
  }
  if (cfg.reconstruct_reward) {
    nn::MlpCache cache;
    const nn::Matrix pred =
        model.rew_decoder.forward(model.params.varphi, dec_in, compute_gradients ? &cache : nullptr);
    nn::Matrix grad(m, 1);
    double sum = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const double diff = pred(r, 0) - traj.rewards[r];
      sum += diff * diff;
      grad(r, 0) = 2.0 * diff * inv_m;
    }
    result.components.recon_rew = sum * inv_m;
    if (compute_gradients) {
      nn::Matrix grad_in;
      model.rew_decoder.backward(model.params.varphi, cache, grad, result.grad_varphi, &grad_in);
      for (std::size_t i = 0; i < grad_in.size(); ++i) grad_dec_in.data()[i] += grad_in.data()[i];
    }
  }

  double kl_sum = 0.0;
  for (std::size_t r = 0; r < m; ++r) kl_sum += kl_to_standard_normal(mu.row(r), log_sigma.row(r));
  result.components.kl = kl_sum * inv_m;
  result.value = result.components.recon_obs + result.components.recon_rew + beta * result.components.kl;
  if (!std::isfinite(result.value)) throw NumericError("fbi_loss: non-finite loss");
  if (!compute_gradients) return result;

  // Back through the reparameterization and the KL term into the encoder heads.
  nn::Matrix grad_heads(m, 2 * d);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dz = grad_dec_in(r, z_offset + j);
      const double ls = log_sigma(r, j);
      const double sigma = std::exp(ls);
      grad_heads(r, j) = dz + beta * mu(r, j) * inv_m;
      const double raw = pass.heads(r, d + j);
      const bool clamped = raw < kLogSigmaMin || raw > kLogSigmaMax;
      grad_heads(r, d + j) = clamped ? 0.0 : dz * sigma * noise(r, j) + beta * (sigma * sigma - 1.0) * inv_m;
    }
  }
  const auto& psi = model.params.psi;
  nn::Matrix grad_hidden_all;
  model.encoder_head.backward(psi, pass.head_cache, grad_heads, result.grad_psi, &grad_hidden_all);

  // Backpropagation through time, all episodes in lockstep.
  const std::size_t h = cfg.hidden;
  const auto episodes = static_cast<std::size_t>(batch.episodes);
  nn::Matrix carry(episodes, h);
  nn::Matrix grad_step(episodes, h);
  nn::Matrix grad_features(m, h);
  for (int t = batch.horizon; t-- > 0;) {
    for (std::size_t e = 0; e < episodes; ++e) {
      const double* src = grad_hidden_all.row_ptr(batch.row(static_cast<int>(e), t));
      double* dst = grad_step.row_ptr(e);
      const double* c = carry.row_ptr(e);
      for (std::size_t j = 0; j < h; ++j) dst[j] = src[j] + c[j];
    }
    nn::Matrix grad_in;
    model.encoder_gru.backward(psi, pass.gru_cache[static_cast<std::size_t>(t)], grad_step, result.grad_psi,
                               &grad_in, &carry);
    for (std::size_t e = 0; e < episodes; ++e) {
      std::copy_n(grad_in.row_ptr(e), h, grad_features.row_ptr(batch.row(static_cast<int>(e), t)));
    }
  }
  model.encoder_features.backward(psi, pass.features_cache, grad_features, result.grad_psi, nullptr);
  return result;
}

}  // namespace fam::fbi
