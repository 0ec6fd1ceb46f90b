#include "fam/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "fam/errors.hpp"
#include "fam/nn/checkpoint.hpp"
#include "fam/rng.hpp"
#include "fam/text.hpp"

namespace fam {

namespace {

constexpr std::uint64_t kEvalStream = 0x6576616c;  // "eval"

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += text::format_double(v[i]);
  }
  return out;
}

std::vector<double> parse_list(std::string_view s, std::string_view key) {
  std::vector<double> out;
  for (const auto& tok : text::split(s, ' ')) {
    if (!text::trim(tok).empty()) out.push_back(text::parse_double(tok, key));
  }
  return out;
}

std::vector<env::ParticleEnv> make_envs(const RunConfig& config, int episodes) {
  const int n = std::max(1, std::min(config.n_envs, episodes));
  return std::vector<env::ParticleEnv>(static_cast<std::size_t>(n), env::ParticleEnv(config.env));
}

TrajectoryBatch play(const AgentStack& stack, const RunConfig& config, int episodes,
                     bool deterministic, std::uint64_t seed) {
  if (episodes < 1) throw InputError("episode count must be >= 1");
  auto envs = make_envs(config, episodes);
  Rng rng = Rng::derive(seed, kEvalStream);
  return collect_rollouts(envs, stack, episodes, rng, deterministic, config.time_limit_bootstrap);
}

void write_rows(const std::filesystem::path& path, const std::vector<std::string>& columns,
                const std::vector<std::vector<double>>& rows) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "\t" : "") << columns[c];
    out << '\n';
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        out << (c ? "\t" : "") << text::format_double(row[c]);
      }
      out << '\n';
    }
    out.flush();
    if (!out) throw IoError("cannot write " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot write " + path.string() + ": " + ec.message());
}

}  // namespace

std::string config_digest(const RunConfig& config) {
  // FNV-1a, 64 bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t eval_seed(const RunConfig& config) { return splitmix64(config.seed ^ kEvalStream); }

EvalReport report_from_batch(const TrajectoryBatch& batch, const env::EnvConfig& env_config) {
  EvalReport r;
  r.episodes = batch.episodes;
  r.returns = batch.episode_returns();
  const bool cn = env_config.task == env::Task::kCooperativeNavigation;
  for (int e = 0; e < batch.episodes; ++e) {
    const std::size_t last = batch.row(e, batch.horizon - 1);
    const auto& state = batch.states[last];
    r.final_rewards.push_back(batch.agents.front().rewards[last]);
    if (cn) r.occupied.push_back(env::count_occupied(state, env_config));
    r.distances.push_back(env::target_distance_sum(state, env_config));
  }
  r.avg_return = mean(r.returns);
  r.avg_final_reward = mean(r.final_rewards);
  if (cn) r.avg_occupied = mean(r.occupied);
  r.avg_distance = mean(r.distances);
  return r;
}

EvalReport evaluate(const AgentStack& stack, const RunConfig& config, int episodes,
                    bool deterministic, std::uint64_t seed) {
  const TrajectoryBatch batch = play(stack, config, episodes, deterministic, seed);
  EvalReport r = report_from_batch(batch, config.env);
  r.deterministic = deterministic;
  r.seed = seed;
  r.config_digest = config_digest(config);
  return r;
}

LoadedRun load_run(const std::filesystem::path& checkpoint, const std::optional<RunConfig>& config) {
  const nn::Checkpoint ckpt = nn::read_checkpoint(checkpoint);
  RunConfig stored;
  try {
    stored = from_text(ckpt.config_text);
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint carries an invalid configuration: ") + e.what());
  }
  LoadedRun out;
  out.config = stored;
  if (config) {
    if (!(config->env == stored.env) || config->algorithm != stored.algorithm ||
        config->latent_dim != stored.latent_dim || config->hidden != stored.hidden ||
        config->share_params != stored.share_params ||
        config->maintain_all_targets != stored.maintain_all_targets) {
      throw IoError("checkpoint does not match the requested configuration");
    }
    out.config = *config;
  }
  out.stack = load_stack(ckpt, out.config);
  return out;
}

EvalReport evaluate(const std::filesystem::path& checkpoint, int episodes, bool deterministic,
                    std::optional<std::uint64_t> seed, const std::optional<RunConfig>& config) {
  const LoadedRun run = load_run(checkpoint, config);
  return evaluate(run.stack, run.config, episodes, deterministic,
                  seed.value_or(eval_seed(run.config)));
}

std::string to_text(const EvalReport& r) {
  std::ostringstream os;
  os << "episodes = " << r.episodes << '\n'
     << "deterministic = " << (r.deterministic ? "true" : "false") << '\n'
     << "seed = " << r.seed << '\n'
     << "avg_return = " << text::format_double(r.avg_return) << '\n'
     << "avg_final_reward = " << text::format_double(r.avg_final_reward) << '\n'
     << "avg_occupied = " << (r.avg_occupied ? text::format_double(*r.avg_occupied) : "NA") << '\n'
     << "avg_distance = " << text::format_double(r.avg_distance) << '\n'
     << "config_digest = " << r.config_digest << '\n'
     << "returns = " << join(r.returns) << '\n'
     << "final_rewards = " << join(r.final_rewards) << '\n'
     << "occupied = " << join(r.occupied) << '\n'
     << "distances = " << join(r.distances) << '\n';
  return os.str();
}

EvalReport eval_report_from_text(std::string_view s) {
  EvalReport r;
  for (const auto& [k, v] : text::parse_key_values(s)) {
    if (k == "episodes") r.episodes = static_cast<int>(text::parse_int(v, k));
    else if (k == "deterministic") r.deterministic = text::parse_bool(v, k);
    else if (k == "seed") r.seed = text::parse_uint(v, k);
    else if (k == "avg_return") r.avg_return = text::parse_double(v, k);
    else if (k == "avg_final_reward") r.avg_final_reward = text::parse_double(v, k);
    else if (k == "avg_occupied") {
      if (v != "NA") r.avg_occupied = text::parse_double(v, k);
    } else if (k == "avg_distance") r.avg_distance = text::parse_double(v, k);
    else if (k == "config_digest") r.config_digest = v;
    else if (k == "returns") r.returns = parse_list(v, k);
    else if (k == "final_rewards") r.final_rewards = parse_list(v, k);
    else if (k == "occupied") r.occupied = parse_list(v, k);
    else if (k == "distances") r.distances = parse_list(v, k);
    else throw InputError("unknown report field '" + k + "'");
  }
  return r;
}

std::vector<std::string> trajectory_columns(const env::EnvConfig& c) {
  std::vector<std::string> cols = {"episode", "t"};
  for (int i = 0; i < c.n_agents; ++i) {
    cols.push_back("agent" + std::to_string(i) + "_x");
    cols.push_back("agent" + std::to_string(i) + "_y");
  }
  const std::string target = c.task == env::Task::kCooperativeNavigation ? "landmark" : "prey";
  for (int j = 0; j < env::target_count(c); ++j) {
    cols.push_back(target + std::to_string(j) + "_x");
    cols.push_back(target + std::to_string(j) + "_y");
  }
  cols.push_back("reward");
  for (int i = 0; i < c.n_agents; ++i) cols.push_back("action" + std::to_string(i));
  return cols;
}

void write_trajectories(const TrajectoryBatch& batch, const env::EnvConfig& c,
                        const std::filesystem::path& path) {
  std::vector<std::vector<double>> rows;
  for (int e = 0; e < batch.episodes; ++e) {
    for (int t = 0; t < batch.horizon; ++t) {
      const std::size_t r = batch.row(e, t);
      std::vector<double> row = {static_cast<double>(e), static_cast<double>(t)};
      for (const auto& p : batch.states[r].positions) {
        row.push_back(p.x);
        row.push_back(p.y);
      }
      row.push_back(batch.agents.front().rewards[r]);
      for (const auto& a : batch.agents) row.push_back(a.actions[r]);
      rows.push_back(std::move(row));
    }
  }
  write_rows(path, trajectory_columns(c), rows);
}

void export_trajectories(const AgentStack& stack, const RunConfig& config, int episodes,
                         bool deterministic, std::uint64_t seed, const std::filesystem::path& path) {
  write_trajectories(play(stack, config, episodes, deterministic, seed), config.env, path);
}

std::vector<std::string> embedding_columns(std::size_t d) {
  std::vector<std::string> cols = {"episode", "t", "agent"};
  for (const char* stat : {"mu", "log_sigma", "z"}) {
    for (std::size_t k = 0; k < d; ++k) cols.push_back(std::string(stat) + "_" + std::to_string(k));
  }
  cols.push_back("pos_x");
  cols.push_back("pos_y");
  return cols;
}

void write_embeddings(const TrajectoryBatch& batch, const std::filesystem::path& path) {
  if (batch.latent_dim == 0) throw ConfigError("variant has no belief-inference encoder");
  const std::size_t d = batch.latent_dim;
  std::vector<std::vector<double>> rows;
  for (int e = 0; e < batch.episodes; ++e) {
    for (int t = 0; t < batch.horizon; ++t) {
      const std::size_t r = batch.row(e, t);
      for (int i = 0; i < batch.n_agents; ++i) {
        const auto& a = batch.agents[static_cast<std::size_t>(i)];
        std::vector<double> row = {static_cast<double>(e), static_cast<double>(t),
                                   static_cast<double>(i)};
        for (const nn::Matrix* m : {&a.mu, &a.log_sigma, &a.latent}) {
          row.insert(row.end(), m->row_ptr(r), m->row_ptr(r) + d);
        }
        // Own position is observation entries 2 and 3.
        row.push_back(a.obs(r, 2));
        row.push_back(a.obs(r, 3));
        rows.push_back(std::move(row));
      }
    }
  }
  write_rows(path, embedding_columns(d), rows);
}

void export_embeddings(const AgentStack& stack, const RunConfig& config, int episodes,
                       bool deterministic, std::uint64_t seed, const std::filesystem::path& path) {
  if (!stack.wiring.uses_fbi) throw ConfigError("variant has no belief-inference encoder");
  write_embeddings(play(stack, config, episodes, deterministic, seed), path);
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == name) return c;
  }
  throw InputError("no column '" + std::string(name) + "'");
}

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": missing header");
  for (const auto& c : text::split(line, '\t')) t.columns.push_back(std::string(text::trim(c)));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto cells = text::split(line, '\t');
    if (cells.size() != t.columns.size()) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.columns.size()) + " columns");
    }
    std::vector<double> row;
    for (const auto& cell : cells) {
      row.push_back(text::trim(cell) == "NA" ? std::numeric_limits<double>::quiet_NaN()
                                             : text::parse_double(cell, "cell"));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace fam
