#pragma once

// Fact-based belief inference: a recurrent variational encoder that turns an
// agent's own (observation, previous action, reward) stream into a latent
// description of its teammates, trained by decoding the next observation and
// reward ("facts") from (o_t, u_t, z_t).

#include <cstddef>
#include <span>
#include <vector>

#include "fam/nn/layers.hpp"
#include "fam/nn/matrix.hpp"
#include "fam/nn/params.hpp"
#include "fam/trajectory.hpp"

namespace fam {
class Rng;
}

namespace fam::fbi {

inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 2.0;

struct FbiConfig {
  std::size_t obs_dim = env::kBaseObservationDim;
  std::size_t latent_dim = 5;
  std::size_t hidden = 64;
  double beta = 0.001;
  /// Decoders see (o_t, u_t, z_t); false feeds them z_t only.
  bool decoder_uses_obs_action = true;
  bool reconstruct_obs = true;
  bool reconstruct_reward = true;
};

struct FbiParams {
  nn::ParamSet psi;     // encoder
  nn::ParamSet phi;     // observation decoder
  nn::ParamSet varphi;  // reward decoder
  double beta = 0.001;

  friend bool operator==(const FbiParams&, const FbiParams&) = default;
};

/// Parameters plus the layer wiring that reads them.
struct FbiModel {
  FbiConfig config;
  FbiParams params;
  nn::Mlp encoder_features;  // affine + relu on the triplet
  nn::Gru encoder_gru;
  nn::Mlp encoder_head;      // affine -> (mu, raw log sigma)
  nn::Mlp obs_decoder;
  nn::Mlp rew_decoder;

  std::size_t encoder_input_width() const { return config.obs_dim + env::kNumActions + 1; }
  std::size_t decoder_input_width() const {
    return config.decoder_uses_obs_action ? config.obs_dim + env::kNumActions + config.latent_dim
                                          : config.latent_dim;
  }
};

/// Builds the model with orthogonal init (zero biases).
FbiModel make_model(const FbiConfig& config, Rng& rng);

struct Posterior {
  nn::RecurrentState state;
  std::vector<double> mu;
  std::vector<double> log_sigma;
};

/// One encoder step for one agent. At t = 0 pass a zero action one-hot and reward 0.
Posterior encode_step(const FbiModel& model, const nn::RecurrentState& hidden,
                      std::span<const double> obs, std::span<const double> prev_action_one_hot,
                      double reward);

struct BatchPosterior {
  nn::Matrix hidden;
  nn::Matrix mu;
  nn::Matrix log_sigma;
};

/// Encoder step for a batch of independent sequences (one row each).
BatchPosterior encode_step_batch(const FbiModel& model, const nn::Matrix& hidden,
                                 const nn::Matrix& inputs);

/// z = mu + exp(log_sigma) * epsilon.
std::vector<double> sample_latent(std::span<const double> mu, std::span<const double> log_sigma,
                                  std::span<const double> epsilon);

std::vector<double> decode_obs(const FbiModel& model, std::span<const double> obs,
                               std::span<const double> action_one_hot, std::span<const double> z);
double decode_rew(const FbiModel& model, std::span<const double> obs,
                  std::span<const double> action_one_hot, std::span<const double> z);

/// -1/2 * sum_j (1 + log sigma_j^2 - mu_j^2 - sigma_j^2).
double kl_to_standard_normal(std::span<const double> mu, std::span<const double> log_sigma);

struct FbiLossComponents {
  double recon_obs = 0.0;
  double recon_rew = 0.0;
  double kl = 0.0;  // unweighted
};

struct FbiLossResult {
  double value = 0.0;
  FbiLossComponents components;
  nn::Gradients grad_psi;
  nn::Gradients grad_phi;
  nn::Gradients grad_varphi;
};

/// Mean over transitions of ||o_hat - o'||^2 + (r_hat - r)^2 + beta * KL,
/// with disabled reconstruction terms dropped. The encoder is re-run over
/// each episode (so gradients flow through time into psi); `noise` holds the
/// standard-normal draws for z, one row per transition.
FbiLossResult fbi_loss(const FbiModel& model, const TrajectoryBatch& batch, int agent,
                       const nn::Matrix& noise, bool compute_gradients = true);

/// Encoder re-run over every episode of the batch: (mu, log_sigma) per row.
BatchPosterior encode_batch(const FbiModel& model, const TrajectoryBatch& batch, int agent);

}  // namespace fam::fbi
