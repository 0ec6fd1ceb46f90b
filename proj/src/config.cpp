#include "fam/config.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include "fam/errors.hpp"
#include "fam/text.hpp"

namespace fam {

namespace {

struct AlgorithmName {
  Algorithm algorithm;
  std::string_view name;
};

constexpr AlgorithmName kAlgorithmNames[] = {
    {Algorithm::kFam, "fam"},
    {Algorithm::kFamWoInOa, "fam_wo_in_oa"},
    {Algorithm::kFamWoRecObs, "fam_wo_rec_obs"},
    {Algorithm::kFamWoRecRew, "fam_wo_rec_rew"},
    {Algorithm::kIppo, "ippo"},
    {Algorithm::kIa2c, "ia2c"},
    {Algorithm::kMappo, "mappo"},
    {Algorithm::kMaa2c, "maa2c"},
};

const std::vector<std::string> kAlgoKeys = {
    "algorithm",           "gamma",         "beta",          "epsilon_clip",
    "entropy_coef",        "latent_dim",    "hidden",        "normalize_advantages",
    "time_limit_bootstrap", "share_params", "maintain_all_targets"};

const std::vector<std::string> kTrainKeys = {
    "total_steps", "batch_episodes", "epochs",        "alpha1",        "alpha2",
    "tau_soft",    "max_grad_norm",  "seed",          "n_envs",        "eval_interval",
    "eval_episodes", "checkpoint_interval"};

int to_int(std::string_view v, std::string_view key) {
  const auto n = text::parse_int(v, key);
  if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) {
    throw ConfigError(std::string(key) + " out of range");
  }
  return static_cast<int>(n);
}

void set_algo(RunConfig& c, std::string_view key, std::string_view v) {
  if (key == "algorithm") c.algorithm = algorithm_from_string(v);
  else if (key == "gamma") c.gamma = text::parse_double(v, key);
  else if (key == "beta") c.beta = text::parse_double(v, key);
  else if (key == "epsilon_clip") c.epsilon_clip = text::parse_double(v, key);
  else if (key == "entropy_coef") c.entropy_coef = text::parse_double(v, key);
  else if (key == "latent_dim") c.latent_dim = text::parse_uint(v, key);
  else if (key == "hidden") c.hidden = text::parse_uint(v, key);
  else if (key == "normalize_advantages") c.normalize_advantages = text::parse_bool(v, key);
  else if (key == "time_limit_bootstrap") c.time_limit_bootstrap = text::parse_bool(v, key);
  else if (key == "share_params") c.share_params = text::parse_bool(v, key);
  else if (key == "maintain_all_targets") c.maintain_all_targets = text::parse_bool(v, key);
  else throw ConfigError("unknown key 'algo." + std::string(key) + "'");
}

void set_train(RunConfig& c, std::string_view key, std::string_view v) {
  if (key == "total_steps") c.total_steps = text::parse_uint(v, key);
  else if (key == "batch_episodes") c.batch_episodes = to_int(v, key);
  else if (key == "epochs") c.epochs = to_int(v, key);
  else if (key == "alpha1") c.alpha1 = text::parse_double(v, key);
  else if (key == "alpha2") c.alpha2 = text::parse_double(v, key);
  else if (key == "tau_soft") c.tau_soft = text::parse_double(v, key);
  else if (key == "max_grad_norm") c.max_grad_norm = text::parse_double(v, key);
  else if (key == "seed") c.seed = text::parse_uint(v, key);
  else if (key == "n_envs") c.n_envs = to_int(v, key);
  else if (key == "eval_interval") c.eval_interval = text::parse_uint(v, key);
  else if (key == "eval_episodes") c.eval_episodes = to_int(v, key);
  else if (key == "checkpoint_interval") c.checkpoint_interval = text::parse_uint(v, key);
  else throw ConfigError("unknown key 'train." + std::string(key) + "'");
}

bool contains(const std::vector<std::string>& keys, std::string_view k) {
  for (const auto& key : keys) {
    if (key == k) return true;
  }
  return false;
}

}  // namespace

std::string_view to_string(Algorithm a) {
  for (const auto& n : kAlgorithmNames) {
    if (n.algorithm == a) return n.name;
  }
  return "unknown";
}

Algorithm algorithm_from_string(std::string_view name) {
  const auto t = text::trim(name);
  for (const auto& n : kAlgorithmNames) {
    if (n.name == t) return n.algorithm;
  }
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

std::vector<Algorithm> all_algorithms() {
  std::vector<Algorithm> out;
  for (const auto& n : kAlgorithmNames) out.push_back(n.algorithm);
  return out;
}

void validate(const RunConfig& c) {
  env::validate(c.env);
  if (!(c.gamma >= 0.0 && c.gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(c.beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(c.epsilon_clip > 0.0)) throw ConfigError("epsilon_clip must be > 0");
  if (!(c.entropy_coef >= 0.0)) throw ConfigError("entropy_coef must be >= 0");
  if (c.latent_dim < 1 || c.hidden < 1) throw ConfigError("latent_dim and hidden must be >= 1");
  if (c.batch_episodes < 1) throw ConfigError("batch_episodes must be >= 1");
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(c.alpha1 >= 0.0) || !(c.alpha2 >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(c.tau_soft > 0.0 && c.tau_soft <= 1.0)) throw ConfigError("tau_soft must lie in (0, 1]");
  if (c.n_envs < 1) throw ConfigError("n_envs must be >= 1");
  if (c.eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (c.total_steps < c.steps_per_cycle()) {
    throw ConfigError("total_steps must be >= batch_episodes * episode_len");
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& k : env::field_names()) keys.push_back("env." + k);
  for (const auto& k : kAlgoKeys) keys.push_back("algo." + k);
  for (const auto& k : kTrainKeys) keys.push_back("train." + k);
  return keys;
}

void set_key(RunConfig& c, std::string_view key, std::string_view value) {
  key = text::trim(key);
  if (const auto dot = key.find('.'); dot != std::string_view::npos) {
    const auto section = key.substr(0, dot);
    const auto field = key.substr(dot + 1);
    if (section == "env") {
      env::set_field(c.env, field, value);
    } else if (section == "algo") {
      set_algo(c, field, value);
    } else if (section == "train") {
      set_train(c, field, value);
    } else {
      throw ConfigError("unknown config section '" + std::string(section) + "'");
    }
    return;
  }
  // Bare key: train, then algo, then env.
  if (contains(kTrainKeys, key)) return set_train(c, key, value);
  if (contains(kAlgoKeys, key)) return set_algo(c, key, value);
  const auto env_keys = env::field_names();
  if (contains(env_keys, key)) return env::set_field(c.env, key, value);
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_override(RunConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  set_key(c, assignment.substr(0, eq), assignment.substr(eq + 1));
}

std::string to_text(const RunConfig& c) {
  std::string out;
  const std::string record = env::to_record(c.env);
  for (const auto& line : text::split(record, '\n')) {
    if (!text::trim(line).empty()) out.append("env.").append(line).append("\n");
  }
  auto put = [&out](std::string_view k, const std::string& v) {
    out.append(k).append(" = ").append(v).append("\n");
  };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  put("algo.algorithm", std::string(to_string(c.algorithm)));
  put("algo.gamma", text::format_double(c.gamma));
  put("algo.beta", text::format_double(c.beta));
  put("algo.epsilon_clip", text::format_double(c.epsilon_clip));
  put("algo.entropy_coef", text::format_double(c.entropy_coef));
  put("algo.latent_dim", std::to_string(c.latent_dim));
  put("algo.hidden", std::to_string(c.hidden));
  put("algo.normalize_advantages", b(c.normalize_advantages));
  put("algo.time_limit_bootstrap", b(c.time_limit_bootstrap));
  put("algo.share_params", b(c.share_params));
  put("algo.maintain_all_targets", b(c.maintain_all_targets));
  put("train.total_steps", std::to_string(c.total_steps));
  put("train.batch_episodes", std::to_string(c.batch_episodes));
  put("train.epochs", std::to_string(c.epochs));
  put("train.alpha1", text::format_double(c.alpha1));
  put("train.alpha2", text::format_double(c.alpha2));
  put("train.tau_soft", text::format_double(c.tau_soft));
  put("train.max_grad_norm", text::format_double(c.max_grad_norm));
  put("train.seed", std::to_string(c.seed));
  put("train.n_envs", std::to_string(c.n_envs));
  put("train.eval_interval", std::to_string(c.eval_interval));
  put("train.eval_episodes", std::to_string(c.eval_episodes));
  put("train.checkpoint_interval", std::to_string(c.checkpoint_interval));
  return out;
}

RunConfig from_text(std::string_view text) {
  RunConfig c;
  for (const auto& [k, v] : text::parse_key_values(text)) set_key(c, k, v);
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace fam
