#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "fam/config.hpp"
#include "fam/errors.hpp"
#include "fam/eval.hpp"
#include "plot.hpp"

namespace fam {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "fam");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fam_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

// A run small enough for unit tests: two cycles of two 5-step episodes.
std::vector<std::string> tiny_train(const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> args = {"train", "--out", out.string()};
  for (const char* kv : {"env.n_agents=2", "env.n_landmarks=2", "env.episode_len=5", "batch_episodes=2",
                         "total_steps=20", "hidden=8", "n_envs=2", "eval_episodes=2", "eval_interval=0",
                         "checkpoint_interval=0"}) {
    args.push_back("--override");
    args.push_back(kv);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

TEST(CliTrain, OverrideSeedLandsInResolvedConfig) {
  const fs::path dir = scratch("seed");
  const Result r = invoke(tiny_train(dir, {"--override", "seed=3"}));
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const RunConfig c = load_config((dir / "config.cfg").string());
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.env.n_agents, 2);
  EXPECT_TRUE(fs::exists(dir / "metrics.tsv"));
  EXPECT_TRUE(fs::exists(dir / "final.ckpt"));
  fs::remove_all(dir);
}

TEST(CliTrain, ConfigFileThenSeedFlagThenOverrides) {
  const fs::path dir = scratch("precedence");
  fs::create_directories(dir);
  std::ofstream(dir / "in.cfg") << "train.seed = 1\ntrain.alpha1 = 0.002\nenv.n_agents = 2\n";
  const Result r = invoke(tiny_train(dir / "run", {"--config", (dir / "in.cfg").string(), "--seed", "9"}));
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const RunConfig c = load_config((dir / "run" / "config.cfg").string());
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.alpha1, 0.002);
  fs::remove_all(dir);
}

TEST(CliTrain, UnknownKeyIsUsageErrorWithoutArtifacts) {
  const fs::path dir = scratch("badkey");
  const Result r = invoke(tiny_train(dir, {"--override", "alhpa1=0.1"}));
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_FALSE(fs::exists(dir));
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(invoke({"train", "--nope"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({}).code, cli::kExitUsage);
}

TEST(CliTrain, ObservationAblationLogsNaReconstruction) {
  const fs::path dir = scratch("ablation");
  ASSERT_EQ(invoke(tiny_train(dir, {"--override", "algorithm=fam_wo_rec_obs"})).code, cli::kExitOk);
  const Table t = read_table(dir / "metrics.tsv");
  ASSERT_EQ(t.rows.size(), 2u);
  for (const auto& row : t.rows) {
    EXPECT_TRUE(std::isnan(row[t.column("recon_obs")]));
    EXPECT_FALSE(std::isnan(row[t.column("recon_rew")]));
  }
  fs::remove_all(dir);
}

TEST(CliEval, HundredEpisodesAndRepeatable) {
  const fs::path dir = scratch("eval");
  ASSERT_EQ(invoke(tiny_train(dir / "run")).code, cli::kExitOk);
  const std::string ckpt = (dir / "run" / "final.ckpt").string();
  const Result a = invoke({"eval", "--checkpoint", ckpt, "--episodes", "100", "--out", (dir / "a").string()});
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  const EvalReport r = eval_report_from_text(slurp(dir / "a" / "eval_report.txt"));
  EXPECT_EQ(r.episodes, 100);
  EXPECT_EQ(r.returns.size(), 100u);
  EXPECT_TRUE(r.deterministic);
  const Result b = invoke({"eval", "--checkpoint", ckpt, "--episodes", "100", "--out", (dir / "b").string()});
  ASSERT_EQ(b.code, cli::kExitOk);
  EXPECT_EQ(slurp(dir / "a" / "eval_report.txt"), slurp(dir / "b" / "eval_report.txt"));
  EXPECT_EQ(a.out, b.out);
  fs::remove_all(dir);
}

TEST(CliEval, MissingCheckpointIsRuntimeFailure) {
  const fs::path dir = scratch("missing");
  EXPECT_EQ(invoke({"eval", "--checkpoint", (dir / "none.ckpt").string(), "--out", dir.string()}).code,
            cli::kExitFailure);
  EXPECT_EQ(invoke({"export-traj", "--checkpoint", (dir / "none.ckpt").string()}).code, cli::kExitFailure);
  EXPECT_EQ(invoke({"eval"}).code, cli::kExitUsage);
  fs::remove_all(dir);
}

TEST(CliExport, TrajectoryAndEmbeddingFiles) {
  const fs::path dir = scratch("export");
  ASSERT_EQ(invoke(tiny_train(dir / "run")).code, cli::kExitOk);
  const std::string ckpt = (dir / "run" / "final.ckpt").string();
  ASSERT_EQ(invoke({"export-traj", "--checkpoint", ckpt, "--out", (dir / "t").string()}).code, cli::kExitOk);
  EXPECT_EQ(read_table(dir / "t" / "trajectories.tsv").rows.size(), 5u);
  ASSERT_EQ(invoke({"export-emb", "--checkpoint", ckpt, "--out", (dir / "e").string()}).code, cli::kExitOk);
  const Table e = read_table(dir / "e" / "embeddings.tsv");
  EXPECT_EQ(e.rows.size(), 10u);
  int latent_cols = 0;
  for (const auto& c : e.columns) latent_cols += c.rfind("mu_", 0) == 0;
  EXPECT_EQ(latent_cols, 5);
  fs::remove_all(dir);
}

double oracle_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

TEST(PlotQuantile, MatchesOracle) {
  EXPECT_DOUBLE_EQ(plot::quantile({1, 2, 3, 4}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(plot::quantile({4, 1, 3, 2}, 0.75), 3.25);
  EXPECT_DOUBLE_EQ(plot::quantile({7}, 0.25), 7.0);
  EXPECT_THROW(plot::quantile({}, 0.5), InputError);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> v(1 + rng.next_u64() % 9);
    for (double& x : v) x = rng.uniform(-10, 10);
    const double q = rng.uniform();
    ASSERT_NEAR(plot::quantile(v, q), oracle_quantile(v, q), 1e-12);
  }
}

void write_log(const fs::path& dir, const std::string& algo, const std::vector<double>& values,
               const std::string& header = "step\tmean_episode_return\twall_time") {
  fs::create_directories(dir);
  std::ofstream(dir / "config.cfg") << "algo.algorithm = " << algo << "\n";
  std::ofstream out(dir / "metrics.tsv");
  out << header << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) out << (i + 1) * 250 << '\t' << values[i] << "\t0\n";
}

TEST(PlotAggregate, FiveSeedsGiveOneBandPerGroup) {
  const fs::path dir = scratch("plot");
  std::vector<fs::path> logs;
  const std::vector<std::vector<double>> runs = {{-50, -40}, {-48, -30}, {-52, -35}, {-49, -33}, {-51, -45}};
  for (std::size_t s = 0; s < runs.size(); ++s) {
    write_log(dir / ("s" + std::to_string(s)), "fam", runs[s]);
    logs.push_back(dir / ("s" + std::to_string(s)) / "metrics.tsv");
  }
  write_log(dir / "b0", "ia2c", {-60, -58});
  logs.push_back(dir / "b0" / "metrics.tsv");

  const auto series = plot::aggregate(logs, "mean_episode_return");
  ASSERT_EQ(series.size(), 2u);
  EXPECT_EQ(series[0].label, "fam");
  EXPECT_EQ(series[0].runs, 5u);
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> col;
    for (const auto& r : runs) col.push_back(r[k]);
    EXPECT_NEAR(series[0].mean[k], (col[0] + col[1] + col[2] + col[3] + col[4]) / 5, 1e-12);
    EXPECT_NEAR(series[0].q25[k], oracle_quantile(col, 0.25), 1e-12);
    EXPECT_NEAR(series[0].q75[k], oracle_quantile(col, 0.75), 1e-12);
  }
  // A single run collapses the band onto the mean.
  EXPECT_EQ(series[1].q25, series[1].mean);
  EXPECT_EQ(series[1].q75, series[1].mean);

  const std::string svg = plot::render_svg(series, "mean_episode_return");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 0, true);
  const std::string csv = plot::band_csv(series);
  EXPECT_EQ(csv.rfind("group,step,mean,q25,q75,runs\n", 0), 0u);

  const Result r = invoke({"plot", logs[0].string(), logs[1].string(), "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "out" / "plot_mean_episode_return.svg"));
  EXPECT_TRUE(fs::exists(dir / "out" / "band_mean_episode_return.csv"));
  fs::remove_all(dir);
}

TEST(PlotAggregate, MismatchedColumnsAreInputErrors) {
  const fs::path dir = scratch("plot_bad");
  write_log(dir / "a", "fam", {-1, -2});
  write_log(dir / "b", "fam", {-1, -2}, "step\tother\twall_time");
  EXPECT_THROW(plot::aggregate({dir / "a" / "metrics.tsv", dir / "b" / "metrics.tsv"}, "mean_episode_return"),
               InputError);
  EXPECT_THROW(plot::aggregate({dir / "a" / "metrics.tsv"}, "no_such_key"), InputError);
  EXPECT_NE(invoke({"plot", (dir / "a" / "metrics.tsv").string(), (dir / "b" / "metrics.tsv").string(), "--out",
                    (dir / "out").string()})
                .code,
            cli::kExitOk);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace fam
