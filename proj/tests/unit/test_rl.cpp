#include <gtest/gtest.h>

#include <cmath>

#include "fam/errors.hpp"
#include "fam/rl.hpp"
#include "fam/rng.hpp"
#include "reference.hpp"
#include "test_util.hpp"

namespace fam::rl {
namespace {

using testing::ref::Vec;
namespace ref = testing::ref;

const double kLn5 = std::log(5.0);

void zero_params(nn::ParamSet& ps) {
  for (std::size_t i = 0; i < ps.count(); ++i) std::fill(ps.values(i).begin(), ps.values(i).end(), 0.0);
}

nn::Network zero_actor(std::size_t width) {
  Rng rng(0);
  nn::Network a = make_actor(width, 4, rng);
  zero_params(a.params);
  return a;
}

// Critic whose output is the constant `v`.
nn::Network constant_critic(std::size_t width, double v) {
  Rng rng(0);
  nn::Network c = make_critic(width, 4, rng);
  zero_params(c.params);
  c.params.values(c.params.index_of("fc2.bias"))[0] = v;
  return c;
}

TEST(Act, ZeroParamsGiveUniformPolicy) {
  const nn::Network actor = zero_actor(3);
  Rng rng(1);
  const auto p = act(actor, Vec{1, 2}, Vec{3}, ActMode::kSample, &rng);
  for (double q : p.probs) EXPECT_DOUBLE_EQ(q, 0.2);
  EXPECT_NEAR(p.entropy, kLn5, 1e-12);
  EXPECT_NEAR(p.log_prob, -kLn5, 1e-12);
  EXPECT_EQ(act(actor, Vec{1, 2}, Vec{3}, ActMode::kGreedy, nullptr).action, 0);  // ties -> lowest index
  EXPECT_THROW(act(actor, Vec{1, 2}, Vec{3}, ActMode::kSample, nullptr), InputError);
}

TEST(Act, ProbabilitiesMatchReferenceSoftmax) {
  Rng rng(2);
  nn::Network actor = make_actor(4, 8, rng);
  testing::randomize(actor.params, rng, 0.7);
  for (int i = 0; i < 20; ++i) {
    const Vec obs{rng.uniform(-1, 1), rng.uniform(-1, 1)}, z{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Vec want = ref::softmax(ref::mlp(actor.params, "", 3, ref::concat({obs, z})));
    const auto got = act(actor, obs, z, ActMode::kGreedy, nullptr);
    int best = 0;
    for (int k = 0; k < 5; ++k) {
      EXPECT_NEAR(got.probs[k], want[k], 1e-12);
      if (want[k] > want[best]) best = k;
    }
    EXPECT_EQ(got.action, best);
    EXPECT_NEAR(got.log_prob, std::log(want[best]), 1e-12);
    double h = 0.0;
    for (double p : want) h -= p * std::log(p);
    EXPECT_NEAR(got.entropy, h, 1e-12);
  }
}

TEST(Act, GreedyIsDeterministicAndShiftInvariant) {
  Rng rng(3);
  nn::Network actor = make_actor(2, 8, rng);
  testing::randomize(actor.params, rng, 0.7);
  const Vec obs{0.3, -0.6};
  const auto a = act(actor, obs, {}, ActMode::kGreedy, nullptr);
  EXPECT_EQ(act(actor, obs, {}, ActMode::kGreedy, nullptr).action, a.action);
  for (double& b : actor.params.values(actor.params.index_of("fc2.bias"))) b += 3.5;
  const auto shifted = act(actor, obs, {}, ActMode::kGreedy, nullptr);
  EXPECT_EQ(shifted.action, a.action);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(shifted.probs[k], a.probs[k], 1e-12);
}

TEST(Act, SampleFrequenciesFollowProbabilities) {
  Rng rng(4);
  nn::Network actor = make_actor(1, 8, rng);
  testing::randomize(actor.params, rng, 1.0);
  const Vec obs{0.5};
  const auto probs = act(actor, obs, {}, ActMode::kGreedy, nullptr).probs;
  std::array<int, 5> counts{};
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[act(actor, obs, {}, ActMode::kSample, &rng).action];
  for (int k = 0; k < 5; ++k) {
    EXPECT_NEAR(counts[k] / double(n), probs[k], 4 * std::sqrt(probs[k] * (1 - probs[k]) / n) + 1e-9);
  }
}

TEST(Value, MatchesReferenceMlp) {
  Rng rng(5);
  nn::Network critic = make_critic(3, 8, rng);
  testing::randomize(critic.params, rng, 0.7);
  const Vec obs{0.1, 0.2}, z{-0.4};
  EXPECT_NEAR(value(critic, obs, z), ref::mlp(critic.params, "", 3, ref::concat({obs, z}))[0], 1e-12);
  EXPECT_EQ(value(constant_critic(3, -2.5), obs, z), -2.5);
}

AgentTrajectory with_rewards(Vec rewards, Vec values) {
  AgentTrajectory t;
  t.rewards = std::move(rewards);
  t.values = std::move(values);
  return t;
}

TEST(Returns, TwoStepExample) {
  auto t = with_rewards({1, 1}, {0, 0});
  const std::vector<std::uint8_t> end{0, 1}, term{0, 1};
  returns_and_advantages(t, end, term, {}, 0.9, false);
  EXPECT_DOUBLE_EQ(t.returns[0], 1.9);
  EXPECT_DOUBLE_EQ(t.returns[1], 1.0);
  EXPECT_EQ(t.advantages, t.returns);
}

TEST(Returns, MatchExplicitDiscountedSums) {
  Rng rng(6);
  const int episodes = 4, horizon = 7;
  const double gamma = 0.95;
  for (bool bootstrap_ends : {false, true}) {
    AgentTrajectory t;
    std::vector<std::uint8_t> end(episodes * horizon, 0), term(episodes * horizon, 0);
    Vec boot(episodes * horizon, 0.0);
    for (int i = 0; i < episodes * horizon; ++i) {
      t.rewards.push_back(rng.uniform(-2, 0));
      t.values.push_back(rng.uniform(-1, 1));
      boot[i] = rng.uniform(-5, 0);
    }
    for (int e = 0; e < episodes; ++e) {
      end[e * horizon + horizon - 1] = 1;
      term[e * horizon + horizon - 1] = bootstrap_ends ? 0 : 1;
    }
    returns_and_advantages(t, end, term, boot, gamma, false);
    for (int e = 0; e < episodes; ++e) {
      for (int s = 0; s < horizon; ++s) {
        double want = 0.0;
        for (int l = 0; s + l < horizon; ++l) want += std::pow(gamma, l) * t.rewards[e * horizon + s + l];
        if (bootstrap_ends) want += std::pow(gamma, horizon - s) * boot[e * horizon + horizon - 1];
        const int r = e * horizon + s;
        ASSERT_NEAR(t.returns[r], want, 1e-12);
        ASSERT_NEAR(t.advantages[r], want - t.values[r], 1e-12);
      }
    }
  }
}

TEST(Returns, NormalizedAdvantagesHaveZeroMeanUnitStd) {
  Rng rng(7);
  AgentTrajectory t;
  std::vector<std::uint8_t> end(50, 0), term(50, 0);
  for (int i = 0; i < 50; ++i) {
    t.rewards.push_back(rng.uniform(-2, 0));
    t.values.push_back(rng.uniform(-1, 1));
  }
  end[24] = term[24] = end[49] = term[49] = 1;
  returns_and_advantages(t, end, term, {}, 0.99, true);
  double mean = 0.0, sq = 0.0;
  for (double a : t.advantages) mean += a;
  mean /= 50;
  for (double a : t.advantages) sq += (a - mean) * (a - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(sq / 50), 1.0, 1e-6);
}

TEST(Returns, Errors) {
  auto t = with_rewards({1, 1}, {0, 0});
  const std::vector<std::uint8_t> end{0, 1}, term{0, 1}, open{0, 0};
  EXPECT_THROW(returns_and_advantages(t, end, term, {}, 1.0, false), ConfigError);
  EXPECT_THROW(returns_and_advantages(t, end, term, {}, -0.1, false), ConfigError);
  EXPECT_THROW(returns_and_advantages(t, open, open, {}, 0.9, false), InputError);
  const std::vector<std::uint8_t> not_terminal{0, 0};
  EXPECT_THROW(returns_and_advantages(t, end, not_terminal, {}, 0.9, false), InputError);
}

struct ToyBatch {
  nn::Matrix inputs{3, 2};
  std::vector<int> actions{0, 3, 4};
};

TEST(PpoLoss, HandComputedClipping) {
  const nn::Network actor = zero_actor(2);
  ToyBatch b;
  // Current log-prob is ln 0.2, so these give ratios 1.5, 0.5, 1.
  const Vec old{std::log(0.2 / 1.5), std::log(0.2 / 0.5), std::log(0.2)};
  const Vec adv{1.0, -1.0, 2.0};
  const auto res = actor_loss_ppo(actor, b.inputs, b.actions, old, adv, 0.2, 0.01);
  EXPECT_NEAR(res.ratios[0], 1.5, 1e-12);
  EXPECT_NEAR(res.ratios[1], 0.5, 1e-12);
  // Terms: min(1.5, 1.2) = 1.2; min(-0.5, -0.8) = -0.8; 2.
  EXPECT_NEAR(res.surrogate, (1.2 - 0.8 + 2.0) / 3, 1e-12);
  EXPECT_NEAR(res.entropy, kLn5, 1e-12);
  EXPECT_NEAR(res.value, -(1.2 - 0.8 + 2.0) / 3 - 0.01 * kLn5, 1e-12);
  EXPECT_NEAR(res.clip_fraction, 2.0 / 3, 1e-12);
}

TEST(PpoLoss, RatioIdentityAfterSync) {
  Rng rng(8);
  nn::Network actor = make_actor(4, 8, rng);
  testing::randomize(actor.params, rng, 0.5);
  const nn::Matrix inputs = testing::random_matrix(30, 4, rng);
  std::vector<int> actions(30);
  Vec adv(30);
  for (int i = 0; i < 30; ++i) {
    actions[i] = static_cast<int>(rng.next_u64() % 5);
    adv[i] = rng.normal();
  }
  const Vec old = log_probs(actor, inputs, actions);
  const auto res = actor_loss_ppo(actor, inputs, actions, old, adv, 0.2, 0.0);
  double mean_adv = 0.0;
  for (double a : adv) mean_adv += a / 30;
  for (double r : res.ratios) EXPECT_NEAR(r, 1.0, 1e-12);
  EXPECT_NEAR(res.surrogate, mean_adv, 1e-12);
  EXPECT_EQ(res.clip_fraction, 0.0);
}

TEST(PpoLoss, SurrogateBoundedByBothTerms) {
  Rng rng(9);
  nn::Network actor = make_actor(3, 8, rng);
  testing::randomize(actor.params, rng, 0.8);
  for (int trial = 0; trial < 50; ++trial) {
    const nn::Matrix inputs = testing::random_matrix(10, 3, rng);
    std::vector<int> actions(10);
    Vec adv(10), old(10);
    for (int i = 0; i < 10; ++i) {
      actions[i] = static_cast<int>(rng.next_u64() % 5);
      adv[i] = rng.normal();
      old[i] = std::log(rng.uniform(0.05, 0.6));
    }
    const auto res = actor_loss_ppo(actor, inputs, actions, old, adv, 0.2, 0.0);
    double unclipped = 0.0, clipped = 0.0;
    for (int i = 0; i < 10; ++i) {
      unclipped += res.ratios[i] * adv[i] / 10;
      clipped += std::clamp(res.ratios[i], 0.8, 1.2) * adv[i] / 10;
    }
    ASSERT_LE(res.surrogate, unclipped + 1e-12);
    ASSERT_LE(res.surrogate, clipped + 1e-12);
  }
}

TEST(CriticLoss, HandComputedTdTargets) {
  const nn::Network critic = constant_critic(2, 0.5);
  const nn::Network target = constant_critic(2, 2.0);
  const nn::Matrix in(3, 2);
  const Vec rewards{-1.0, 0.5, 0.0};
  const std::vector<std::uint8_t> terminal{0, 0, 1};
  // Targets 0.8, 2.3, 0; TD errors 0.3, 1.8, -0.5.
  const auto res = critic_loss(critic, target, in, in, rewards, terminal, 0.9);
  EXPECT_NEAR(res.value, (0.09 + 3.24 + 0.25) / 3, 1e-12);
  EXPECT_THROW(critic_loss(critic, target, nn::Matrix(0, 2), nn::Matrix(0, 2), {}, {}, 0.9), InputError);
}

TEST(A2cLosses, HandComputed) {
  const nn::Network actor = zero_actor(2);
  const nn::Network critic = constant_critic(2, 0.5);
  ToyBatch b;
  const Vec returns{1.0, -1.0, 0.0}, adv{0.5, -1.5, -0.5};
  const auto res = a2c_losses(actor, critic, b.inputs, b.inputs, b.actions, returns, adv, 0.01);
  // Every log-prob is -ln 5 and the advantages sum to -1.5.
  EXPECT_NEAR(res.actor.value, -(1.5 * kLn5) / 3 - 0.01 * kLn5, 1e-12);
  EXPECT_NEAR(res.critic.value, (0.25 + 2.25 + 0.25) / 3, 1e-12);
  EXPECT_NEAR(res.entropy, kLn5, 1e-12);
}

TEST(LossGradients, ActorCriticAndA2cMatchFiniteDifferences) {
  Rng rng(10);
  nn::Network actor = make_actor(4, 8, rng);
  nn::Network critic = make_critic(4, 8, rng);
  nn::Network target = make_critic(4, 8, rng);
  testing::randomize(actor.params, rng, 0.6);
  testing::randomize(critic.params, rng, 0.6);
  const nn::Matrix in = testing::random_matrix(12, 4, rng);
  const nn::Matrix next = testing::random_matrix(12, 4, rng);
  std::vector<int> actions(12);
  Vec adv(12), old(12), rewards(12), returns(12);
  std::vector<std::uint8_t> terminal(12, 0);
  for (int i = 0; i < 12; ++i) {
    actions[i] = static_cast<int>(rng.next_u64() % 5);
    adv[i] = rng.normal();
    rewards[i] = rng.uniform(-2, 0);
    returns[i] = rng.uniform(-5, 0);
    terminal[i] = i % 4 == 3;
  }
  // Old log-probs near the current ones so most rows sit on the unclipped branch.
  old = log_probs(actor, in, actions);
  for (double& o : old) o += rng.uniform(-0.3, 0.3);

  const auto ppo = actor_loss_ppo(actor, in, actions, old, adv, 0.2, 0.01);
  EXPECT_LT(testing::worst_gradient_error(actor.params, ppo.grads, [&] {
              return actor_loss_ppo(actor, in, actions, old, adv, 0.2, 0.01, false).value;
            }, rng, 16), 1e-3);

  const auto cl = critic_loss(critic, target, in, next, rewards, terminal, 0.99);
  EXPECT_LT(testing::worst_gradient_error(critic.params, cl.grads, [&] {
              return critic_loss(critic, target, in, next, rewards, terminal, 0.99, false).value;
            }, rng, 16), 1e-3);

  const auto a2c = a2c_losses(actor, critic, in, next, actions, returns, adv, 0.01);
  EXPECT_LT(testing::worst_gradient_error(actor.params, a2c.actor.grads, [&] {
              return a2c_losses(actor, critic, in, next, actions, returns, adv, 0.01, false).actor.value;
            }, rng, 16), 1e-3);
  EXPECT_LT(testing::worst_gradient_error(critic.params, a2c.critic.grads, [&] {
              return a2c_losses(actor, critic, in, next, actions, returns, adv, 0.01, false).critic.value;
            }, rng, 16), 1e-3);
}

TEST(CriticLoss, TargetNetworkReceivesNoGradient) {
  Rng rng(11);
  nn::Network critic = make_critic(2, 4, rng);
  nn::Network target = make_critic(2, 4, rng);
  const nn::Network before = target;
  const nn::Matrix in = testing::random_matrix(5, 2, rng);
  const auto res = critic_loss(critic, target, in, in, Vec(5, -1.0), std::vector<std::uint8_t>(5, 0), 0.9);
  EXPECT_TRUE(res.grads.matches(critic.params));
  EXPECT_TRUE(testing::same_values(target.params, before.params));
}

TEST(Entropy, Examples) {
  EXPECT_NEAR(entropy(Vec(5, 0.2)), kLn5, 1e-15);
  EXPECT_EQ(entropy(Vec{1, 0, 0, 0, 0}), 0.0);
}

}  // namespace
}  // namespace fam::rl
