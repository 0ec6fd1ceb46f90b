#pragma once

// Cooperative Navigation (CN) and Predator-Prey (PP) particle worlds.
//
// Entity layout in WorldState: controlled agents [0, n_agents) first, then
// landmarks (CN) or prey (PP). Positions start uniform in [-1, 1]^2.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fam::env {

enum class Task { kCooperativeNavigation, kPredatorPrey };

std::string_view to_string(Task task);
Task task_from_string(std::string_view text);  // "CN" / "PP"; throws ConfigError

struct EnvConfig {
  Task task = Task::kCooperativeNavigation;
  int n_agents = 5;
  int n_landmarks = 5;
  int n_prey = 0;
  int episode_len = 25;
  double agent_radius = 0.1;
  double landmark_radius = 0.05;
  double dt = 0.1;
  double damping = 0.25;
  double accel_controlled = 5.0;
  double max_speed_controlled = 1.0;
  double max_speed_prey = 1.4;
  double occupy_threshold = 0.15;
  std::uint64_t seed = 0;
  /// PP only: append the velocities of the three closest prey.
  bool prey_velocity_obs = false;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

EnvConfig cooperative_navigation(int n_agents, int n_landmarks);
EnvConfig predator_prey(int n_predators, int n_prey);

/// Throws ConfigError describing the first violated invariant.
void validate(const EnvConfig& config);

/// Flat "key = value" record, one line per field, keys named as the fields.
std::string to_record(const EnvConfig& config);
EnvConfig from_record(std::string_view text);
/// Sets one field from text; throws ConfigError on unknown key or bad value.
void set_field(EnvConfig& config, std::string_view key, std::string_view value);
std::vector<std::string> field_names();

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(Vec2 a, Vec2 b);
double norm(Vec2 v);

struct WorldState {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  int t = 0;
  bool done = false;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Layout: own velocity (2), own position (2), three closest targets
/// (landmarks or prey) relative to self (6), two closest teammates relative
/// to self (4); optionally three prey velocities (6). Missing slots are zero.
using Observation = std::vector<double>;

inline constexpr int kNumActions = 5;
inline constexpr std::size_t kBaseObservationDim = 14;
inline constexpr int kObservedTargets = 3;
inline constexpr int kObservedTeammates = 2;

enum class Action : int { kNoop = 0, kPosX = 1, kNegX = 2, kPosY = 3, kNegY = 4 };

std::size_t observation_dim(const EnvConfig& config);
int target_count(const EnvConfig& config);  // landmarks (CN) or prey (PP)
std::size_t entity_count(const EnvConfig& config);
Vec2 target_position(const WorldState& state, const EnvConfig& config, int target);

struct StepInfo {
  int occupied_count = 0;  // CN only
  int collision_count = 0;
  /// Per landmark (CN) or prey (PP): distance to the closest controlled agent.
  std::vector<double> target_min_distances;
};

struct StepResult {
  std::vector<Observation> observations;
  double team_reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct ResetResult {
  WorldState state;
  std::vector<Observation> observations;
};

ResetResult reset(const EnvConfig& config, std::uint64_t seed);

/// Advances `state` by one joint action (one entry in [0, 5) per agent).
/// Throws InputError on bad actions and StateError on a finished episode.
StepResult step(WorldState& state, std::span<const int> joint_action, const EnvConfig& config);

std::vector<Observation> observe(const WorldState& state, const EnvConfig& config);

double reward_cn(const WorldState& state, const EnvConfig& config);
double reward_pp(const WorldState& state, const EnvConfig& config);
double team_reward(const WorldState& state, const EnvConfig& config);

/// Flee direction from the closest predator, scaled to max_speed_prey, with
/// the outward component flipped when the move would leave [-1, 1]^2.
Vec2 prey_policy(const WorldState& state, int prey_id, const EnvConfig& config);

int count_occupied(const WorldState& state, const EnvConfig& config);
/// Unordered pairs of controlled agents whose centers are closer than 2 * agent_radius.
int collision_count(const WorldState& state, const EnvConfig& config);
/// Sum over targets of the distance to the closest controlled agent.
double target_distance_sum(const WorldState& state, const EnvConfig& config);

/// Stateful wrapper owning config and world state.
class ParticleEnv {
 public:
  explicit ParticleEnv(EnvConfig config);

  const std::vector<Observation>& reset(std::uint64_t seed);
  const StepResult& step(std::span<const int> joint_action);

  const EnvConfig& config() const { return config_; }
  const WorldState& state() const { return state_; }
  const std::vector<Observation>& observations() const { return observations_; }

 private:
  EnvConfig config_;
  WorldState state_;
  std::vector<Observation> observations_;
  StepResult last_;
};

}  // namespace fam::env
