#include <gtest/gtest.h>

#include "hammersim/policy.hpp"
#include "oracles.hpp"

using namespace hammersim;

namespace {

PolicyParams toy_policy(std::size_t features, std::size_t mask_len, std::size_t act, std::uint64_t seed) {
  PolicyConfig cfg;
  cfg.hidden = {5, 4};
  cfg.init_log_std = -0.5;
  cfg.mean_output_gain = 1.0;
  auto p = make_policy(features + mask_len, act, cfg, seed);
  Rng rng(seed + 1);
  for (double& v : p.log_std) v += rng.uniform(-0.3, 0.3);
  for (double& v : p.mean.params()) v += 0.1 * rng.normal();
  for (double& v : p.value.params()) v += 0.1 * rng.normal();
  return p;
}

std::vector<double> random_advantages(std::size_t n, Rng& rng) {
  std::vector<double> a(n);
  for (double& v : a) v = rng.normal();
  return a;
}

}  // namespace

TEST(Policy, ZeroWeightsGiveZeroOutputs) {
  PolicyParams p{Mlp({3, 4, 2}), {0.0, 0.0}, Mlp({3, 4, 1})};
  Observation obs{{1.0}, {0, 1}, 2};
  const auto out = policy_forward(obs, p);
  EXPECT_EQ(out.mean, (std::vector<double>{0, 0}));
  EXPECT_EQ(out.value, 0.0);
  EXPECT_THROW(policy_forward(Observation{{1.0}, {}, 5}, p), Error);
}

TEST(Policy, DeterministicInit) {
  const auto a = make_policy(10, 3, {}, 4), b = make_policy(10, 3, {}, 4), c = make_policy(10, 3, {}, 5);
  EXPECT_EQ(a.mean.params(), b.mean.params());
  EXPECT_EQ(a.value.params(), b.value.params());
  EXPECT_NE(a.mean.params(), c.mean.params());
  const Observation obs{{0.3, -0.2}, {1, 4, 7}, 8};
  EXPECT_EQ(policy_forward(obs, a).mean, policy_forward(obs, b).mean);
}

TEST(Policy, MaskIsMeanPooled) {
  // Duplicating the active set's weights leaves the pre-activation unchanged.
  PolicyParams p{Mlp({4, 1}), {0.0}, Mlp({4, 1})};
  std::fill(p.mean.params().begin(), p.mean.params().end(), 1.0);
  p.mean.params().back() = 0.0;  // bias
  EXPECT_DOUBLE_EQ(policy_forward(Observation{{}, {0}, 4}, p).mean[0], 1.0);
  EXPECT_DOUBLE_EQ(policy_forward(Observation{{}, {0, 1, 2, 3}, 4}, p).mean[0], 1.0);
  EXPECT_DOUBLE_EQ(policy_forward(Observation{{}, {}, 4}, p).mean[0], 0.0);
}

TEST(Gaussian, LogProbAndEntropy) {
  const std::vector<double> mean{0.0}, log_std{0.0};
  EXPECT_NEAR(gaussian_log_prob(std::vector<double>{0.0}, mean, log_std), -0.5 * std::log(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(gaussian_log_prob(std::vector<double>{2.0}, std::vector<double>{1.0}, std::vector<double>{std::log(2.0)}),
              -0.125 - std::log(2.0) - 0.5 * std::log(2 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(gaussian_entropy(log_std), 0.5 * std::log(2 * std::numbers::pi * std::numbers::e), 1e-15);
}

TEST(Gae, HandComputed) {
  const std::vector<double> r{1.0, 2.0}, v{0.5, 1.0};
  const auto g = compute_gae(r, v, 3.0, 0.5, 0.5);
  // td1 = 2 + 1.5 - 1 = 2.5; td0 = 1 + 0.5 - 0.5 = 1; A0 = 1 + 0.25 * 2.5.
  EXPECT_DOUBLE_EQ(g.advantages[1], 2.5);
  EXPECT_DOUBLE_EQ(g.advantages[0], 1.625);
  EXPECT_DOUBLE_EQ(g.returns[0], 2.125);
  const auto myopic = compute_gae(r, v, 3.0, 0.0, 0.95);
  EXPECT_DOUBLE_EQ(myopic.advantages[0], 0.5);
  EXPECT_DOUBLE_EQ(myopic.advantages[1], 1.0);
}

TEST(PpoLoss, PolicyGradientMatchesFiniteDifferences) {
  Rng rng(12);
  for (int trial = 0; trial < 4; ++trial) {
    auto p = toy_policy(3, 6, 2, 100 + trial);
    const auto batch = oracle::random_batch(p, 6, 3, 0.1, rng);
    const auto adv = random_advantages(batch.size(), rng);
    PpoConfig cfg;
    std::vector<double> grad;
    ppo_policy_loss(p, batch, adv, cfg, &grad);
    auto& w = p.mean.params();
    const auto num_w = oracle::numeric_gradient([&] { return ppo_policy_loss(p, batch, adv, cfg); }, w);
    for (std::size_t i = 0; i < w.size(); ++i) ASSERT_LT(oracle::relative_error(grad[i], num_w[i]), 1e-4) << i;
    const auto num_s = oracle::numeric_gradient([&] { return ppo_policy_loss(p, batch, adv, cfg); }, p.log_std);
    for (std::size_t k = 0; k < p.log_std.size(); ++k)
      ASSERT_LT(oracle::relative_error(grad[w.size() + k], num_s[k]), 1e-4) << k;
  }
}

TEST(PpoLoss, ClippedSamplesCarryNoSurrogateGradient) {
  Rng rng(13);
  auto p = toy_policy(2, 4, 2, 7);
  auto batch = oracle::random_batch(p, 5, 2, 0.0, rng);
  // ratio = e^0.5 > 1.2 with positive advantage: the clipped branch binds.
  for (auto& t : batch) t.log_prob -= 0.5;
  const std::vector<double> adv(batch.size(), 1.0);
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  std::vector<double> grad;
  const double loss = ppo_policy_loss(p, batch, adv, cfg, &grad);
  EXPECT_NEAR(loss, -(1.0 + cfg.clip_ratio), 1e-12);
  for (double g : grad) EXPECT_EQ(g, 0.0);
}

TEST(PpoLoss, EntropyGradientOnLogStd) {
  Rng rng(14);
  auto p = toy_policy(2, 3, 3, 8);
  const auto batch = oracle::random_batch(p, 4, 2, 0.1, rng);
  const std::vector<double> adv(batch.size(), 0.0);
  PpoConfig cfg;
  cfg.entropy_coef = 0.25;
  std::vector<double> grad;
  ppo_policy_loss(p, batch, adv, cfg, &grad);
  const std::size_t n = p.mean.params().size();
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(grad[i], 0.0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(grad[n + k], -0.25);
}

TEST(PpoLoss, ValueGradientMatchesFiniteDifferences) {
  Rng rng(15);
  auto p = toy_policy(3, 5, 2, 21);
  const auto batch = oracle::random_batch(p, 7, 3, 0.1, rng);
  const auto ret = random_advantages(batch.size(), rng);
  std::vector<double> grad;
  ppo_value_loss(p, batch, ret, &grad);
  auto& w = p.value.params();
  const auto num = oracle::numeric_gradient([&] { return ppo_value_loss(p, batch, ret); }, w);
  for (std::size_t i = 0; i < w.size(); ++i) ASSERT_LT(oracle::relative_error(grad[i], num[i]), 1e-4) << i;
}

TEST(PpoUpdate, ZeroAdvantageAndNoEntropyLeavesPolicyUnchanged) {
  Rng rng(16);
  auto p = toy_policy(2, 4, 2, 9);
  auto batch = oracle::random_batch(p, 8, 2, 0.0, rng);
  // Constant rewards with values equal to them under discount 0: every advantage is 0.
  for (auto& t : batch) {
    t.reward = 0.7;
    t.value = 0.7;
  }
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.discount = 0.0;
  auto opt = PpoOptimizer::for_params(p, cfg);
  const auto before_mean = p.mean.params();
  const auto before_std = p.log_std;
  ppo_update(batch, 0.0, p, opt, cfg, rng);
  EXPECT_EQ(p.mean.params(), before_mean);
  EXPECT_EQ(p.log_std, before_std);
}

TEST(PpoUpdate, DeterministicGivenSeed) {
  Rng data(17);
  const auto base = toy_policy(2, 4, 2, 10);
  const auto batch = oracle::random_batch(base, 12, 2, 0.1, data);
  PpoConfig cfg;
  cfg.minibatch = 5;
  auto a = base, b = base;
  auto oa = PpoOptimizer::for_params(a, cfg), ob = PpoOptimizer::for_params(b, cfg);
  Rng ra(3), rb(3);
  ppo_update(batch, 0.0, a, oa, cfg, ra);
  ppo_update(batch, 0.0, b, ob, cfg, rb);
  EXPECT_EQ(a.mean.params(), b.mean.params());
  EXPECT_EQ(a.value.params(), b.value.params());
  EXPECT_NE(a.mean.params(), base.mean.params());
}

TEST(PpoUpdate, ValueRegressionReducesLoss) {
  Rng rng(18);
  auto p = toy_policy(3, 2, 1, 11);
  auto batch = oracle::random_batch(p, 20, 3, 0.0, rng);
  PpoConfig cfg;
  cfg.discount = 0.0;
  cfg.value_learning_rate = 1e-2;
  std::vector<double> ret;
  for (auto& t : batch) ret.push_back(t.reward);
  const double before = ppo_value_loss(p, batch, ret);
  auto opt = PpoOptimizer::for_params(p, cfg);
  for (int i = 0; i < 30; ++i) {
    for (auto& t : batch) t.value = policy_forward(t.obs, p).value;
    ppo_update(batch, 0.0, p, opt, cfg, rng);
  }
  EXPECT_LT(ppo_value_loss(p, batch, ret), 0.5 * before);
}

TEST(PpoConfig, Validation) {
  PpoConfig cfg;
  cfg.clip_ratio = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.minibatch = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Checkpoint, RoundTripAtFloatPrecision) {
  const auto p = toy_policy(3, 4, 2, 12);
  const auto bytes = encode_checkpoint(p, 0xfeedu);
  EXPECT_EQ(bytes.substr(0, 4), "HSCK");
  const auto ck = decode_checkpoint(bytes);
  EXPECT_EQ(ck.config_hash, 0xfeedu);
  ASSERT_EQ(ck.params.mean.sizes(), p.mean.sizes());
  for (std::size_t i = 0; i < p.mean.params().size(); ++i)
    EXPECT_EQ(ck.params.mean.params()[i], static_cast<double>(static_cast<float>(p.mean.params()[i])));
  EXPECT_EQ(encode_checkpoint(ck.params, 0xfeedu), bytes);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), ConfigError);
  EXPECT_THROW(decode_checkpoint("HSCX" + bytes.substr(4)), ConfigError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), ConfigError);
}
