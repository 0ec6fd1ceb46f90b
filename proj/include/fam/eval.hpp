#pragma once

// Evaluation protocol and data exports: episode metrics over frozen
// parameters, per-step trajectory files and encoder embedding files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fam/config.hpp"
#include "fam/trainer.hpp"
#include "fam/trajectory.hpp"

namespace fam {

struct EvalReport {
  int episodes = 0;
  bool deterministic = true;
  std::uint64_t seed = 0;
  double avg_return = 0.0;
  double avg_final_reward = 0.0;
  std::optional<double> avg_occupied;  // cooperative navigation only
  double avg_distance = 0.0;           // final-step sum of target-to-nearest-agent distances

  std::vector<double> returns;
  std::vector<double> final_rewards;
  std::vector<double> occupied;
  std::vector<double> distances;

  std::string config_digest;
};

/// Stable 64-bit digest (hex) of the resolved configuration text.
std::string config_digest(const RunConfig& config);

/// Default evaluation seed of a run.
std::uint64_t eval_seed(const RunConfig& config);

/// Metrics of every episode in `batch` (states are post-step world states).
EvalReport report_from_batch(const TrajectoryBatch& batch, const env::EnvConfig& env_config);

EvalReport evaluate(const AgentStack& stack, const RunConfig& config, int episodes,
                    bool deterministic, std::uint64_t seed);

/// Loads a checkpoint (optionally checking it against `config`) and evaluates it.
EvalReport evaluate(const std::filesystem::path& checkpoint, int episodes, bool deterministic,
                    std::optional<std::uint64_t> seed = std::nullopt,
                    const std::optional<RunConfig>& config = std::nullopt);

std::string to_text(const EvalReport& report);
EvalReport eval_report_from_text(std::string_view text);

/// Loaded checkpoint: resolved configuration and parameters.
struct LoadedRun {
  RunConfig config;
  AgentStack stack;
};
/// When `config` is given its environment must match the checkpoint's,
/// otherwise IoError.
LoadedRun load_run(const std::filesystem::path& checkpoint,
                   const std::optional<RunConfig>& config = std::nullopt);

/// Header of the trajectory file for a configuration.
std::vector<std::string> trajectory_columns(const env::EnvConfig& env_config);
/// One row per step: episode, t, every entity position after the step, the
/// team reward of the step and each agent's action.
void write_trajectories(const TrajectoryBatch& batch, const env::EnvConfig& env_config,
                        const std::filesystem::path& path);
void export_trajectories(const AgentStack& stack, const RunConfig& config, int episodes,
                         bool deterministic, std::uint64_t seed, const std::filesystem::path& path);

std::vector<std::string> embedding_columns(std::size_t latent_dim);
/// One row per (episode, t, agent): mu, log_sigma, z and the agent's own
/// position when it encoded the step. Throws ConfigError without an encoder.
void write_embeddings(const TrajectoryBatch& batch, const std::filesystem::path& path);
void export_embeddings(const AgentStack& stack, const RunConfig& config, int episodes,
                       bool deterministic, std::uint64_t seed, const std::filesystem::path& path);

/// Columnar text reader for the exported files.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(std::string_view name) const;  // throws InputError
};
Table read_table(const std::filesystem::path& path);

}  // namespace fam
