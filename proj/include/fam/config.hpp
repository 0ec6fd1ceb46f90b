#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fam/env.hpp"

namespace fam {

enum class Algorithm {
  kFam,
  kFamWoInOa,
  kFamWoRecObs,
  kFamWoRecRew,
  kIppo,
  kIa2c,
  kMappo,
  kMaa2c,
};

std::string_view to_string(Algorithm a);
Algorithm algorithm_from_string(std::string_view name);  // throws ConfigError
std::vector<Algorithm> all_algorithms();

/// Everything that drives one reproducible run. Serialized as flat
/// "section.key = value" lines with sections env, algo and train.
struct RunConfig {
  env::EnvConfig env;

  // algo.*
  Algorithm algorithm = Algorithm::kFam;
  double gamma = 0.99;
  double beta = 0.001;
  double epsilon_clip = 0.2;
  double entropy_coef = 0.01;
  std::size_t latent_dim = 5;
  std::size_t hidden = 64;
  bool normalize_advantages = true;
  bool time_limit_bootstrap = false;
  bool share_params = false;
  /// Also soft-update actor and belief-inference targets (nothing reads them).
  bool maintain_all_targets = false;

  // train.*
  std::uint64_t total_steps = 10'000'000;
  int batch_episodes = 10;
  int epochs = 4;
  double alpha1 = 3e-4;
  double alpha2 = 1e-3;
  double tau_soft = 0.01;
  double max_grad_norm = 0.5;
  std::uint64_t seed = 0;
  int n_envs = 8;
  std::uint64_t eval_interval = 100'000;  // 0 disables periodic evaluation
  int eval_episodes = 100;
  std::uint64_t checkpoint_interval = 1'000'000;  // 0: final checkpoint only

  std::uint64_t steps_per_cycle() const {
    return static_cast<std::uint64_t>(batch_episodes) * static_cast<std::uint64_t>(env.episode_len);
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws ConfigError on the first violated invariant.
void validate(const RunConfig& config);

/// Every accepted dotted key, in serialization order.
std::vector<std::string> config_keys();

/// Sets one key. Accepts dotted keys and bare keys that name exactly one
/// field (a bare "seed" means train.seed). Throws ConfigError otherwise.
void set_key(RunConfig& config, std::string_view key, std::string_view value);

/// Parses "key=value" and applies it via set_key.
void apply_override(RunConfig& config, std::string_view assignment);

std::string to_text(const RunConfig& config);
/// Starts from defaults, applies every line, validates.
RunConfig from_text(std::string_view text);
RunConfig load_config(const std::string& path);

}  // namespace fam
