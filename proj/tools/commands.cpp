#include "commands.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fam/config.hpp"
#include "fam/errors.hpp"
#include "fam/eval.hpp"
#include "fam/text.hpp"
#include "fam/trainer.hpp"
#include "plot.hpp"

namespace fam::cli {

namespace {

namespace fs = std::filesystem;

fs::path output_root() {
  const char* env = std::getenv("FAM_OUT_DIR");
  return (env && *env) ? fs::path(env) : fs::path("runs");
}

RunConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed,
                         const std::vector<std::string>& overrides) {
  RunConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : text::parse_key_values(ss.str())) set_key(c, k, v);
  }
  if (seed) c.seed = *seed;
  for (const auto& o : overrides) apply_override(c, o);
  validate(c);
  return c;
}

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::trunc);
  out << content;
  if (!out) throw IoError("cannot write " + path.string());
}

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string resume;
  int episodes = 0;
  bool deterministic = true;
  std::vector<std::string> logs;
  std::vector<std::string> keys;
};

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig config = resolve_config(o.config, o.seed, o.overrides);
  const fs::path dir = o.out.empty()
                           ? output_root() / (std::string(to_string(config.algorithm)) + "_" +
                                              std::string(env::to_string(config.env.task)) +
                                              "_seed" + std::to_string(config.seed))
                           : fs::path(o.out);
  RunOptions options;
  options.out_dir = dir;
  if (!o.resume.empty()) options.resume_from = o.resume;
  const std::uint64_t cycles = config.total_steps / config.steps_per_cycle();
  const std::uint64_t every = std::max<std::uint64_t>(1, cycles / 20);
  std::uint64_t seen = 0;
  options.on_row = [&](const MetricRow& row) {
    if (++seen % every == 0) {
      out << "step " << row.step << "  return " << text::format_double(row.mean_episode_return)
          << '\n';
      out.flush();
    }
  };
  const RunArtifacts art = run(config, options);
  out << "run directory: " << art.out_dir.string() << '\n';
  out << "final checkpoint: " << art.final_checkpoint.string() << '\n';
  return kExitOk;
}

std::optional<RunConfig> optional_config(const Options& o) {
  if (o.config.empty() && o.overrides.empty()) return std::nullopt;
  return resolve_config(o.config, std::nullopt, o.overrides);
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto config = optional_config(o);
  const LoadedRun loaded = load_run(o.checkpoint, config);
  const std::uint64_t seed = o.seed.value_or(eval_seed(loaded.config));
  const EvalReport report = evaluate(loaded.stack, loaded.config, o.episodes, o.deterministic, seed);
  const std::string text = to_text(report);
  const fs::path dir = o.out.empty() ? output_root() / "eval" : fs::path(o.out);
  write_file(dir / "eval_report.txt", text);
  out << text;
  return kExitOk;
}

int cmd_export(const Options& o, bool embeddings, std::ostream& out) {
  const auto config = optional_config(o);
  const LoadedRun loaded = load_run(o.checkpoint, config);
  const std::uint64_t seed = o.seed.value_or(eval_seed(loaded.config));
  const fs::path dir = o.out.empty() ? output_root() / "export" : fs::path(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  const fs::path file = dir / (embeddings ? "embeddings.tsv" : "trajectories.tsv");
  if (embeddings) {
    export_embeddings(loaded.stack, loaded.config, o.episodes, o.deterministic, seed, file);
  } else {
    export_trajectories(loaded.stack, loaded.config, o.episodes, o.deterministic, seed, file);
  }
  out << file.string() << '\n';
  return kExitOk;
}

int cmd_plot(const Options& o, std::ostream& out) {
  std::vector<fs::path> logs(o.logs.begin(), o.logs.end());
  const fs::path dir = o.out.empty() ? output_root() / "plot" : fs::path(o.out);
  const std::vector<std::string> keys = o.keys.empty() ? std::vector<std::string>{"mean_episode_return"} : o.keys;
  for (const auto& key : keys) {
    const auto series = plot::aggregate(logs, key);
    write_file(dir / ("plot_" + key + ".svg"), plot::render_svg(series, key));
    write_file(dir / ("band_" + key + ".csv"), plot::band_csv(series));
    out << (dir / ("plot_" + key + ".svg")).string() << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fact-based agent modeling: training, evaluation and exports", "fam"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration file (dotted key = value lines)");
    sub->add_option("--override", o.overrides, "key=value override, repeatable")->allow_extra_args(false);
  };
  auto add_seed = [&](CLI::App* sub, const char* help) { sub->add_option("--seed", seed, help); };
  auto add_det = [&](CLI::App* sub) {
    sub->add_flag("--deterministic,!--stochastic", o.deterministic,
                  "Greedy actions and z = mu (default) or sampled");
  };

  auto* train = app.add_subcommand("train", "Train a variant and write a run directory");
  add_config(train);
  add_seed(train, "Overrides train.seed");
  train->add_option("--out", o.out, "Run directory");
  train->add_option("--resume", o.resume, "Continue from a checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  eval->add_option("--episodes", o.episodes, "Episode count")->default_val(100);
  add_det(eval);
  add_seed(eval, "Evaluation seed");
  add_config(eval);
  eval->add_option("--out", o.out, "Output directory");

  CLI::App* exports[2];
  const char* names[2] = {"export-traj", "export-emb"};
  const char* helps[2] = {"Write per-step trajectories of a checkpoint",
                          "Write encoder embeddings of a checkpoint"};
  for (int k = 0; k < 2; ++k) {
    auto* sub = app.add_subcommand(names[k], helps[k]);
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
    sub->add_option("--episodes", o.episodes, "Episode count")->default_val(1);
    add_det(sub);
    add_seed(sub, "Episode seed");
    add_config(sub);
    sub->add_option("--out", o.out, "Output directory");
    exports[k] = sub;
  }

  auto* plot = app.add_subcommand("plot", "Mean and 25-75% band of metric logs");
  plot->add_option("logs", o.logs, "Metric logs (metrics.tsv)")->required();
  plot->add_option("--key", o.keys, "Column to plot, repeatable (default mean_episode_return)");
  plot->add_option("--out", o.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto seed_given = [&](CLI::App* sub) { return sub->count("--seed") > 0; };
  try {
    if (train->parsed()) {
      if (seed_given(train)) o.seed = seed;
      return cmd_train(o, out);
    }
    if (eval->parsed()) {
      if (seed_given(eval)) o.seed = seed;
      return cmd_eval(o, out);
    }
    for (int k = 0; k < 2; ++k) {
      if (exports[k]->parsed()) {
        if (seed_given(exports[k])) o.seed = seed;
        return cmd_export(o, k == 1, out);
      }
    }
    if (plot->parsed()) return cmd_plot(o, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace fam::cli
