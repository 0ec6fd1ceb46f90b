#include "fam/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fam/errors.hpp"
#include "fam/rng.hpp"
#include "fam/text.hpp"

namespace fam::env {

std::string_view to_string(Task task) {
  return task == Task::kCooperativeNavigation ? "CN" : "PP";
}

Task task_from_string(std::string_view text) {
  const auto t = text::trim(text);
  if (t == "CN" || t == "cn") return Task::kCooperativeNavigation;
  if (t == "PP" || t == "pp") return Task::kPredatorPrey;
  throw ConfigError("unknown task '" + std::string(text) + "' (expected CN or PP)");
}

EnvConfig cooperative_navigation(int n_agents, int n_landmarks) {
  EnvConfig c;
  c.task = Task::kCooperativeNavigation;
  c.n_agents = n_agents;
  c.n_landmarks = n_landmarks;
  c.n_prey = 0;
  return c;
}

EnvConfig predator_prey(int n_predators, int n_prey) {
  EnvConfig c;
  c.task = Task::kPredatorPrey;
  c.n_agents = n_predators;
  c.n_landmarks = 0;
  c.n_prey = n_prey;
  return c;
}

void validate(const EnvConfig& c) {
  if (c.n_agents < 1) throw ConfigError("n_agents must be >= 1");
  if (c.episode_len < 1) throw ConfigError("episode_len must be >= 1");
  if (c.task == Task::kCooperativeNavigation && c.n_landmarks < 1) {
    throw ConfigError("CN needs n_landmarks >= 1");
  }
  if (c.task == Task::kPredatorPrey && c.n_prey < 1) throw ConfigError("PP needs n_prey >= 1");
  if (c.n_landmarks < 0 || c.n_prey < 0) throw ConfigError("entity counts must be non-negative");
  if (!(c.agent_radius > 0.0) || !(c.landmark_radius > 0.0)) throw ConfigError("radii must be > 0");
  if (!(c.damping >= 0.0 && c.damping < 1.0)) throw ConfigError("damping must lie in [0, 1)");
  if (!(c.dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(c.accel_controlled >= 0.0)) throw ConfigError("accel_controlled must be >= 0");
  if (!(c.max_speed_controlled > 0.0) || !(c.max_speed_prey > 0.0)) {
    throw ConfigError("speed caps must be > 0");
  }
  if (!(c.occupy_threshold > 0.0)) throw ConfigError("occupy_threshold must be > 0");
}

std::vector<std::string> field_names() {
  return {"task",         "n_agents",        "n_landmarks",      "n_prey",
          "episode_len",  "agent_radius",    "landmark_radius",  "dt",
          "damping",      "accel_controlled", "max_speed_controlled", "max_speed_prey",
          "occupy_threshold", "seed",        "prey_velocity_obs"};
}

namespace {

int parse_count(std::string_view v, std::string_view key) {
  const auto n = text::parse_int(v, key);
  if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) {
    throw ConfigError(std::string(key) + " out of range");
  }
  return static_cast<int>(n);
}

}  // namespace

void set_field(EnvConfig& c, std::string_view key, std::string_view v) {
  if (key == "task") c.task = task_from_string(v);
  else if (key == "n_agents") c.n_agents = parse_count(v, key);
  else if (key == "n_landmarks") c.n_landmarks = parse_count(v, key);
  else if (key == "n_prey") c.n_prey = parse_count(v, key);
  else if (key == "episode_len") c.episode_len = parse_count(v, key);
  else if (key == "agent_radius") c.agent_radius = text::parse_double(v, key);
  else if (key == "landmark_radius") c.landmark_radius = text::parse_double(v, key);
  else if (key == "dt") c.dt = text::parse_double(v, key);
  else if (key == "damping") c.damping = text::parse_double(v, key);
  else if (key == "accel_controlled") c.accel_controlled = text::parse_double(v, key);
  else if (key == "max_speed_controlled") c.max_speed_controlled = text::parse_double(v, key);
  else if (key == "max_speed_prey") c.max_speed_prey = text::parse_double(v, key);
  else if (key == "occupy_threshold") c.occupy_threshold = text::parse_double(v, key);
  else if (key == "seed") c.seed = text::parse_uint(v, key);
  else if (key == "prey_velocity_obs") c.prey_velocity_obs = text::parse_bool(v, key);
  else throw ConfigError("unknown environment key '" + std::string(key) + "'");
}

std::string to_record(const EnvConfig& c) {
  std::string out;
  auto put = [&out](std::string_view k, const std::string& v) {
    out.append(k).append(" = ").append(v).append("\n");
  };
  put("task", std::string(to_string(c.task)));
  put("n_agents", std::to_string(c.n_agents));
  put("n_landmarks", std::to_string(c.n_landmarks));
  put("n_prey", std::to_string(c.n_prey));
  put("episode_len", std::to_string(c.episode_len));
  put("agent_radius", text::format_double(c.agent_radius));
  put("landmark_radius", text::format_double(c.landmark_radius));
  put("dt", text::format_double(c.dt));
  put("damping", text::format_double(c.damping));
  put("accel_controlled", text::format_double(c.accel_controlled));
  put("max_speed_controlled", text::format_double(c.max_speed_controlled));
  put("max_speed_prey", text::format_double(c.max_speed_prey));
  put("occupy_threshold", text::format_double(c.occupy_threshold));
  put("seed", std::to_string(c.seed));
  put("prey_velocity_obs", c.prey_velocity_obs ? "true" : "false");
  return out;
}

EnvConfig from_record(std::string_view record) {
  EnvConfig c;
  for (const auto& [k, v] : text::parse_key_values(record)) set_field(c, k, v);
  validate(c);
  return c;
}

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }
double norm(Vec2 v) { return std::hypot(v.x, v.y); }

int target_count(const EnvConfig& c) {
  return c.task == Task::kCooperativeNavigation ? c.n_landmarks : c.n_prey;
}

std::size_t entity_count(const EnvConfig& c) {
  return static_cast<std::size_t>(c.n_agents + target_count(c));
}

std::size_t observation_dim(const EnvConfig& c) {
  const bool with_prey_vel = c.task == Task::kPredatorPrey && c.prey_velocity_obs;
  return kBaseObservationDim + (with_prey_vel ? 2 * kObservedTargets : 0);
}

Vec2 target_position(const WorldState& s, const EnvConfig& c, int target) {
  return s.positions[static_cast<std::size_t>(c.n_agents + target)];
}

namespace {

// Indices of `count` candidates sorted by distance to `origin`, ties by index.
std::vector<int> closest(const WorldState& s, Vec2 origin, int first, int count, int exclude,
                         int keep) {
  std::vector<std::pair<double, int>> cand;
  for (int i = 0; i < count; ++i) {
    const int e = first + i;
    if (e == exclude) continue;
    cand.emplace_back(distance(origin, s.positions[static_cast<std::size_t>(e)]), e);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<int> out;
  for (int i = 0; i < std::min<int>(keep, static_cast<int>(cand.size())); ++i) {
    out.push_back(cand[static_cast<std::size_t>(i)].second);
  }
  return out;
}

double min_agent_distance(const WorldState& s, const EnvConfig& c, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < c.n_agents; ++a) {
    best = std::min(best, distance(p, s.positions[static_cast<std::size_t>(a)]));
  }
  return best;
}

void cap_speed(Vec2& v, double cap) {
  const double speed = norm(v);
  if (speed <= cap) return;
  const double k = cap / speed;
  v.x *= k;
  v.y *= k;
  // Rounding in the rescale can leave |v| one ulp above the cap.
  while (norm(v) > cap) {
    v.x *= 1.0 - 0x1.0p-52;
    v.y *= 1.0 - 0x1.0p-52;
  }
}

Vec2 action_direction(int action) {
  switch (static_cast<Action>(action)) {
    case Action::kNoop: return {0.0, 0.0};
    case Action::kPosX: return {1.0, 0.0};
    case Action::kNegX: return {-1.0, 0.0};
    case Action::kPosY: return {0.0, 1.0};
    case Action::kNegY: return {0.0, -1.0};
  }
  return {0.0, 0.0};
}

constexpr double kBound = 1.0;

double reflect(double x, double& velocity) {
  if (x > kBound) {
    velocity = -velocity;
    return 2.0 * kBound - x;
  }
  if (x < -kBound) {
    velocity = -velocity;
    return -2.0 * kBound - x;
  }
  return x;
}

}  // namespace

std::vector<Observation> observe(const WorldState& s, const EnvConfig& c) {
  const int n_targets = target_count(c);
  const std::size_t dim = observation_dim(c);
  const bool with_prey_vel = dim > kBaseObservationDim;
  std::vector<Observation> obs;
  obs.reserve(static_cast<std::size_t>(c.n_agents));
  for (int i = 0; i < c.n_agents; ++i) {
    Observation o(dim, 0.0);
    const Vec2 p = s.positions[static_cast<std::size_t>(i)];
    const Vec2 v = s.velocities[static_cast<std::size_t>(i)];
    o[0] = v.x;
    o[1] = v.y;
    o[2] = p.x;
    o[3] = p.y;
    const auto targets = closest(s, p, c.n_agents, n_targets, -1, kObservedTargets);
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const Vec2 q = s.positions[static_cast<std::size_t>(targets[k])];
      o[4 + 2 * k] = q.x - p.x;
      o[5 + 2 * k] = q.y - p.y;
      if (with_prey_vel) {
        const Vec2 qv = s.velocities[static_cast<std::size_t>(targets[k])];
        o[kBaseObservationDim + 2 * k] = qv.x;
        o[kBaseObservationDim + 2 * k + 1] = qv.y;
      }
    }
    const auto mates = closest(s, p, 0, c.n_agents, i, kObservedTeammates);
    for (std::size_t k = 0; k < mates.size(); ++k) {
      const Vec2 q = s.positions[static_cast<std::size_t>(mates[k])];
      o[10 + 2 * k] = q.x - p.x;
      o[11 + 2 * k] = q.y - p.y;
    }
    obs.push_back(std::move(o));
  }
  return obs;
}

ResetResult reset(const EnvConfig& c, std::uint64_t seed) {
  validate(c);
  Rng rng = Rng::derive(seed, 0x656e76);
  ResetResult r;
  const std::size_t n = entity_count(c);
  r.state.positions.resize(n);
  r.state.velocities.assign(n, Vec2{});
  for (auto& p : r.state.positions) {
    p.x = rng.uniform(-1.0, 1.0);
    p.y = rng.uniform(-1.0, 1.0);
  }
  r.state.t = 0;
  r.state.done = false;
  r.observations = observe(r.state, c);
  return r;
}

int collision_count(const WorldState& s, const EnvConfig& c) {
  const double limit = 2.0 * c.agent_radius;
  int count = 0;
  for (int i = 0; i < c.n_agents; ++i) {
    for (int j = i + 1; j < c.n_agents; ++j) {
      if (distance(s.positions[static_cast<std::size_t>(i)], s.positions[static_cast<std::size_t>(j)]) <
          limit) {
        ++count;
      }
    }
  }
  return count;
}

double target_distance_sum(const WorldState& s, const EnvConfig& c) {
  double sum = 0.0;
  for (int k = 0; k < target_count(c); ++k) sum += min_agent_distance(s, c, target_position(s, c, k));
  return sum;
}

double reward_cn(const WorldState& s, const EnvConfig& c) {
  if (c.task != Task::kCooperativeNavigation) throw InputError("reward_cn requires task CN");
  return -target_distance_sum(s, c) - collision_count(s, c);
}

double reward_pp(const WorldState& s, const EnvConfig& c) {
  if (c.task != Task::kPredatorPrey) throw InputError("reward_pp requires task PP");
  return -target_distance_sum(s, c) - collision_count(s, c);
}

double team_reward(const WorldState& s, const EnvConfig& c) {
  return c.task == Task::kCooperativeNavigation ? reward_cn(s, c) : reward_pp(s, c);
}

int count_occupied(const WorldState& s, const EnvConfig& c) {
  if (c.task != Task::kCooperativeNavigation) throw InputError("count_occupied requires task CN");
  int occupied = 0;
  for (int k = 0; k < c.n_landmarks; ++k) {
    if (min_agent_distance(s, c, target_position(s, c, k)) < c.occupy_threshold) ++occupied;
  }
  return occupied;
}

Vec2 prey_policy(const WorldState& s, int prey_id, const EnvConfig& c) {
  if (c.task != Task::kPredatorPrey) throw InputError("prey_policy requires task PP");
  if (prey_id < 0 || prey_id >= c.n_prey) throw InputError("prey_policy: prey id out of range");
  const Vec2 p = target_position(s, c, prey_id);
  int nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < c.n_agents; ++a) {
    const double d = distance(p, s.positions[static_cast<std::size_t>(a)]);
    if (d < best) {  // strict: ties keep the lower index
      best = d;
      nearest = a;
    }
  }
  const Vec2 q = s.positions[static_cast<std::size_t>(nearest)];
  Vec2 dir{p.x - q.x, p.y - q.y};
  const double len = norm(dir);
  if (len > 0.0) {
    dir = {dir.x / len, dir.y / len};
  } else {
    dir = {1.0, 0.0};
  }
  Vec2 cmd{dir.x * c.max_speed_prey, dir.y * c.max_speed_prey};
  if (std::abs(p.x + cmd.x * c.dt) > kBound && p.x * cmd.x > 0.0) cmd.x = -cmd.x;
  if (std::abs(p.y + cmd.y * c.dt) > kBound && p.y * cmd.y > 0.0) cmd.y = -cmd.y;
  return cmd;
}

StepResult step(WorldState& s, std::span<const int> joint_action, const EnvConfig& c) {
  if (s.done) throw StateError("step called on a finished episode");
  if (joint_action.size() != static_cast<std::size_t>(c.n_agents)) {
    throw InputError("step: expected " + std::to_string(c.n_agents) + " actions, got " +
                     std::to_string(joint_action.size()));
  }
  for (int a : joint_action) {
    if (a < 0 || a >= kNumActions) throw InputError("step: action " + std::to_string(a) + " out of range");
  }

  // Prey react to the pre-step layout; all entities then move simultaneously.
  std::vector<Vec2> prey_cmd;
  if (c.task == Task::kPredatorPrey) {
    for (int k = 0; k < c.n_prey; ++k) prey_cmd.push_back(prey_policy(s, k, c));
  }

  const double keep = 1.0 - c.damping;
  for (int i = 0; i < c.n_agents; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const Vec2 dir = action_direction(joint_action[idx]);
    Vec2& v = s.velocities[idx];
    v.x = v.x * keep + c.accel_controlled * dir.x * c.dt;
    v.y = v.y * keep + c.accel_controlled * dir.y * c.dt;
    cap_speed(v, c.max_speed_controlled);
    s.positions[idx].x += v.x * c.dt;
    s.positions[idx].y += v.y * c.dt;
  }
  for (int k = 0; k < static_cast<int>(prey_cmd.size()); ++k) {
    const auto idx = static_cast<std::size_t>(c.n_agents + k);
    Vec2& v = s.velocities[idx];
    v = prey_cmd[static_cast<std::size_t>(k)];
    cap_speed(v, c.max_speed_prey);
    Vec2& p = s.positions[idx];
    p.x = reflect(p.x + v.x * c.dt, v.x);
    p.y = reflect(p.y + v.y * c.dt, v.y);
  }

  ++s.t;
  s.done = s.t >= c.episode_len;

  StepResult r;
  r.team_reward = team_reward(s, c);
  r.done = s.done;
  r.info.collision_count = collision_count(s, c);
  if (c.task == Task::kCooperativeNavigation) r.info.occupied_count = count_occupied(s, c);
  for (int k = 0; k < target_count(c); ++k) {
    r.info.target_min_distances.push_back(min_agent_distance(s, c, target_position(s, c, k)));
  }
  r.observations = observe(s, c);
  return r;
}

ParticleEnv::ParticleEnv(EnvConfig config) : config_(config) { validate(config_); }

const std::vector<Observation>& ParticleEnv::reset(std::uint64_t seed) {
  auto r = env::reset(config_, seed);
  state_ = std::move(r.state);
  observations_ = std::move(r.observations);
  return observations_;
}

const StepResult& ParticleEnv::step(std::span<const int> joint_action) {
  last_ = env::step(state_, joint_action, config_);
  observations_ = last_.observations;
  return last_;
}

}  // namespace fam::env
