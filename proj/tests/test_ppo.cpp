#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "crafter/ppo.hpp"

using namespace crafter;
using namespace crafter::ppo;

namespace {

constexpr std::size_t A = kNumActions;

// Direct sum: A_t = sum_l (gamma lambda)^l delta_{t+l}, stopping after a terminal.
std::vector<double> brute_gae(const std::vector<double>& r, const std::vector<double>& v,
                              const std::vector<std::uint8_t>& d, double boot, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double coef = 1.0, sum = 0.0;
    for (std::size_t k = t; k < n; ++k) {
      const double next = k + 1 < n ? v[k + 1] : boot;
      sum += coef * (r[k] + (d[k] ? 0.0 : gamma * next) - v[k]);
      if (d[k]) break;
      coef *= gamma * lambda;
    }
    out[t] = sum;
  }
  return out;
}

struct LossTerms {
  double total, policy, value, entropy;
};

// Independent double-precision PPO objective (minimized).
LossTerms oracle_loss(const std::vector<double>& logits, const std::vector<double>& values,
                      const std::vector<std::uint8_t>& acts, const std::vector<double>& old,
                      const std::vector<double>& adv, const std::vector<double>& ret, const PPOConfig& cfg) {
  const std::size_t b = acts.size();
  LossTerms l{0, 0, 0, 0};
  for (std::size_t i = 0; i < b; ++i) {
    double m = -1e300;
    for (std::size_t j = 0; j < A; ++j) m = std::max(m, logits[i * A + j]);
    double z = 0;
    for (std::size_t j = 0; j < A; ++j) z += std::exp(logits[i * A + j] - m);
    double h = 0;
    for (std::size_t j = 0; j < A; ++j) {
      const double lp = logits[i * A + j] - m - std::log(z);
      h -= std::exp(lp) * lp;
    }
    const double lpa = logits[i * A + acts[i]] - m - std::log(z);
    const double ratio = std::exp(lpa - old[i]);
    const double clipped = std::min(std::max(ratio, 1.0 - cfg.clip_range), 1.0 + cfg.clip_range);
    l.policy -= std::min(ratio * adv[i], clipped * adv[i]) / static_cast<double>(b);
    l.value += (ret[i] - values[i]) * (ret[i] - values[i]) / static_cast<double>(b);
    l.entropy += h / static_cast<double>(b);
  }
  l.total = l.policy + cfg.vf_coef * l.value - cfg.ent_coef * l.entropy;
  return l;
}

struct Batch {
  std::vector<double> logits, values, old, adv, ret;
  std::vector<std::uint8_t> acts;
  std::vector<float> flogits, fvalues;
};

// Logits are float-representable so both sides see identical inputs.
Batch random_batch(std::size_t b, Rng& rng, double spread) {
  Batch x;
  for (std::size_t i = 0; i < b * A; ++i) x.logits.push_back(static_cast<float>(rng.normal()));
  for (std::size_t i = 0; i < b; ++i) {
    x.values.push_back(static_cast<float>(rng.normal()));
    x.acts.push_back(static_cast<std::uint8_t>(rng.below(A)));
    x.adv.push_back(rng.normal());
    x.ret.push_back(rng.normal());
  }
  x.flogits.assign(x.logits.begin(), x.logits.end());
  x.fvalues.assign(x.values.begin(), x.values.end());
  for (std::size_t i = 0; i < b; ++i) {
    const double lp = log_prob(std::span<const float>(x.flogits).subspan(i * A, A), x.acts[i]);
    x.old.push_back(lp + spread * rng.normal());
  }
  return x;
}

agents::AgentConfig tiny(agents::Architecture a) {
  auto c = agents::AgentConfig::defaults(a);
  c.cnn_channels = {4, 8, 8};
  c.fc_dim = 16;
  c.lstm_dim = 8;
  c.critic_dim = 8;
  return c;
}

TrainSetup tiny_setup(agents::Architecture a, std::uint64_t seed) {
  TrainSetup s;
  s.train_spec = env_preset("mini");
  s.agent = tiny(a);
  s.ppo.n_lanes = 2;
  s.ppo.n_rollout_steps = 64;
  s.ppo.batch_size = 32;
  s.ppo.n_epochs = 2;
  s.ppo.seq_len = 8;
  s.ppo.total_steps = 128;
  s.run_seed = seed;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::filesystem::path temp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST(Gae, MatchesDirectSum) {
  Rng rng(11);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(rng.range(1, 64));
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.normal();
      v[i] = rng.normal();
      d[i] = rng.chance(0.1);
    }
    const double boot = rng.normal(), gamma = rng.uniform(), lambda = rng.uniform();
    const Gae g = compute_gae(r, v, d, boot, gamma, lambda);
    const auto want = brute_gae(r, v, d, boot, gamma, lambda);
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(g.advantages[i] - want[i]));
      ASSERT_NEAR(g.returns[i], g.advantages[i] + v[i], 1e-12);
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Gae, LambdaLimits) {
  const std::vector<double> r{1, 0, 2, -1}, v{0.5, 0.2, -0.3, 0.1};
  const std::vector<std::uint8_t> d{0, 0, 0, 0};
  const double g = 0.9, boot = 0.7;
  const Gae td = compute_gae(r, v, d, boot, g, 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    const double next = t + 1 < 4 ? v[t + 1] : boot;
    EXPECT_NEAR(td.advantages[t], r[t] + g * next - v[t], 1e-12);
  }
  const Gae mc = compute_gae(r, v, d, boot, g, 1.0);
  double ret = boot;
  for (std::size_t t = 4; t-- > 0;) {
    ret = r[t] + g * ret;
    EXPECT_NEAR(mc.returns[t], ret, 1e-12);
  }
  EXPECT_THROW(compute_gae(r, v, d, boot, 1.5, 0.5), DomainError);
  EXPECT_THROW(compute_gae(r, std::vector<double>{1.0}, d, boot, 0.9, 0.5), ContractViolation);
}

TEST(Gae, BufferFinishIsPerLane) {
  RolloutBuffer buf;
  buf.reset(3, 10, false);
  Rng rng(5);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf.rewards[i] = rng.normal();
    buf.values[i] = rng.normal();
    buf.terminals[i] = rng.chance(0.2);
  }
  const std::vector<double> boot{0.1, -0.4, 2.0};
  buf.finish(boot, 0.95, 0.65);
  for (int l = 0; l < 3; ++l) {
    const auto off = buf.index(l, 0);
    const std::vector<double> r(buf.rewards.begin() + static_cast<std::ptrdiff_t>(off),
                                buf.rewards.begin() + static_cast<std::ptrdiff_t>(off + 10));
    const std::vector<double> v(buf.values.begin() + static_cast<std::ptrdiff_t>(off),
                                buf.values.begin() + static_cast<std::ptrdiff_t>(off + 10));
    const std::vector<std::uint8_t> d(buf.terminals.begin() + static_cast<std::ptrdiff_t>(off),
                                      buf.terminals.begin() + static_cast<std::ptrdiff_t>(off + 10));
    const auto want = brute_gae(r, v, d, boot[static_cast<std::size_t>(l)], 0.95, 0.65);
    for (std::size_t t = 0; t < 10; ++t) EXPECT_NEAR(buf.advantages[off + t], want[t], 1e-9);
  }
  EXPECT_TRUE(buf.advantages_ready);
  EXPECT_THROW(buf.finish(std::vector<double>{1.0}, 0.95, 0.65), ContractViolation);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  PPOConfig cfg;
  cfg.ent_coef = 0.05;
  double worst = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto b = static_cast<std::size_t>(rng.range(1, 12));
    Batch x = random_batch(b, rng, 0.3);
    const auto g = ppo_loss_grads(x.flogits, x.fvalues, x.acts, x.old, x.adv, x.ret, cfg, false);
    const LossTerms ref = oracle_loss(x.logits, x.values, x.acts, x.old, x.adv, x.ret, cfg);
    EXPECT_NEAR(g.policy_loss, ref.policy, 1e-9);
    EXPECT_NEAR(g.value_loss, ref.value, 1e-9);
    EXPECT_NEAR(g.entropy, ref.entropy, 1e-9);
    const double h = 1e-6;
    for (std::size_t i = 0; i < b * A; ++i) {
      // Skip coordinates whose ratio sits on a clip kink.
      const std::size_t row = i / A;
      const double lpa = log_prob(std::span<const float>(x.flogits).subspan(row * A, A), x.acts[row]);
      const double ratio = std::exp(lpa - x.old[row]);
      if (std::abs(ratio - 1.0 - cfg.clip_range) < 1e-3 || std::abs(ratio - 1.0 + cfg.clip_range) < 1e-3) continue;
      auto up = x.logits, down = x.logits;
      up[i] += h;
      down[i] -= h;
      const double num = (oracle_loss(up, x.values, x.acts, x.old, x.adv, x.ret, cfg).total -
                          oracle_loss(down, x.values, x.acts, x.old, x.adv, x.ret, cfg).total) /
                         (2 * h);
      worst = std::max(worst, std::abs(num - g.dlogits[i]) / std::max(1.0, std::abs(num)));
    }
    for (std::size_t i = 0; i < b; ++i) {
      auto up = x.values, down = x.values;
      up[i] += h;
      down[i] -= h;
      const double num = (oracle_loss(x.logits, up, x.acts, x.old, x.adv, x.ret, cfg).total -
                          oracle_loss(x.logits, down, x.acts, x.old, x.adv, x.ret, cfg).total) /
                         (2 * h);
      worst = std::max(worst, std::abs(num - g.dvalues[i]) / std::max(1.0, std::abs(num)));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Loss, NormalizationIsPerMinibatch) {
  const std::vector<double> adv{1.0, 2.0, 4.0, 9.0};
  const auto n = normalize_advantages(adv);
  const double mean = std::accumulate(n.begin(), n.end(), 0.0) / 4.0;
  double var = 0;
  for (double a : n) var += (a - mean) * (a - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(var / 3.0), 1.0, 1e-7);
  EXPECT_EQ(normalize_advantages(std::vector<double>{3.5}), std::vector<double>{3.5});

  Rng rng(9);
  Batch x = random_batch(6, rng, 0.2);
  PPOConfig cfg;
  const auto inside = ppo_loss_grads(x.flogits, x.fvalues, x.acts, x.old, x.adv, x.ret, cfg, true);
  const auto pre = normalize_advantages(x.adv);
  const auto outside = ppo_loss_grads(x.flogits, x.fvalues, x.acts, x.old, pre, x.ret, cfg, false);
  EXPECT_EQ(inside.dlogits, outside.dlogits);
  EXPECT_DOUBLE_EQ(inside.policy_loss, outside.policy_loss);
}

TEST(Loss, IdenticalPolicyHasUnitRatio) {
  Rng rng(4);
  Batch x = random_batch(16, rng, 0.0);
  PPOConfig cfg;
  cfg.ent_coef = 0;
  const auto g = ppo_loss_grads(x.flogits, x.fvalues, x.acts, x.old, x.adv, x.ret, cfg, false);
  EXPECT_EQ(g.clip_fraction, 0.0);
  EXPECT_NEAR(g.approx_kl, 0.0, 1e-12);
  EXPECT_NEAR(g.policy_loss, -std::accumulate(x.adv.begin(), x.adv.end(), 0.0) / 16.0, 1e-9);
  // Unclipped score-function gradient: -A (onehot - p) / B.
  for (std::size_t i = 0; i < 16; ++i) {
    const auto z = std::span<const float>(x.flogits).subspan(i * A, A);
    for (std::size_t j = 0; j < A; ++j) {
      const double p = std::exp(log_prob(z, static_cast<int>(j)));
      const double want = -x.adv[i] * ((j == x.acts[i] ? 1.0 : 0.0) - p) / 16.0;
      EXPECT_NEAR(g.dlogits[i * A + j], want, 1e-7);
    }
  }
}

TEST(Loss, ZeroClipFreezesImprovingDirections) {
  Rng rng(6);
  Batch x = random_batch(32, rng, 0.5);
  PPOConfig cfg;
  cfg.clip_range = 0;
  cfg.ent_coef = 0;
  const auto g = ppo_loss_grads(x.flogits, x.fvalues, x.acts, x.old, x.adv, x.ret, cfg, false);
  EXPECT_NEAR(g.clip_fraction, 1.0, 1e-12);
  for (std::size_t i = 0; i < 32; ++i) {
    const double lpa = log_prob(std::span<const float>(x.flogits).subspan(i * A, A), x.acts[i]);
    const double ratio = std::exp(lpa - x.old[i]);
    const bool pessimistic = (ratio > 1 && x.adv[i] < 0) || (ratio < 1 && x.adv[i] > 0);
    double mag = 0;
    for (std::size_t j = 0; j < A; ++j) mag += std::abs(g.dlogits[i * A + j]);
    if (pessimistic) {
      EXPECT_GT(mag, 0.0);
    } else {
      EXPECT_EQ(mag, 0.0);
    }
  }
}

TEST(Loss, NonFiniteInputsRaise) {
  Rng rng(2);
  Batch x = random_batch(2, rng, 0.0);
  x.fvalues[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(ppo_loss_grads(x.flogits, x.fvalues, x.acts, x.old, x.adv, x.ret, PPOConfig{}, false), NumericError);
  EXPECT_THROW(ppo_loss_grads(x.flogits, std::vector<float>{1.0f}, x.acts, x.old, x.adv, x.ret, PPOConfig{}),
               ContractViolation);
}

TEST(Categorical, LogProbEntropyAndSampling) {
  std::array<float, A> z{};
  for (std::size_t j = 0; j < A; ++j) z[j] = static_cast<float>(0.2 * static_cast<double>(j) - 1.0);
  double total = 0, h = 0;
  for (int a = 0; a < static_cast<int>(A); ++a) {
    const double p = std::exp(log_prob(z, a));
    total += p;
    h -= p * log_prob(z, a);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(entropy(z), h, 1e-12);
  std::array<float, A> flat{};
  EXPECT_NEAR(entropy(flat), std::log(static_cast<double>(A)), 1e-12);

  Rng rng(7);
  std::array<int, A> counts{};
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_action(z, rng))];
  double chi2 = 0;
  for (int a = 0; a < static_cast<int>(A); ++a) {
    const double e = n * std::exp(log_prob(z, a));
    chi2 += (counts[static_cast<std::size_t>(a)] - e) * (counts[static_cast<std::size_t>(a)] - e) / e;
  }
  // 16 degrees of freedom, alpha = 0.01.
  EXPECT_LT(chi2, 32.0);
}

TEST(Metrics, ExplainedVariance) {
  const std::vector<double> t{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(explained_variance(t, t), 1.0);
  EXPECT_NEAR(explained_variance(std::vector<double>{2.5, 2.5, 2.5, 2.5}, t), 0.0, 1e-12);
  EXPECT_TRUE(std::isnan(explained_variance(t, std::vector<double>{1, 1, 1, 1})));
}

TEST(Config, JsonRoundTripAndValidation) {
  PPOConfig c;
  c.learning_rate = 1e-3;
  c.n_lanes = 4;
  c.seq_len = 8;
  EXPECT_EQ(ppo_config_from_json(to_json(c)), c);
  EXPECT_EQ(ppo_config_from_json(nlohmann::json::object()), PPOConfig{});
  PPOConfig bad = c;
  bad.n_rollout_steps = 4097;
  EXPECT_THROW(bad.validate(false), ConfigError);
  bad = c;
  bad.batch_size = 100;
  EXPECT_NO_THROW(bad.validate(false));
  EXPECT_THROW(bad.validate(true), ConfigError);
  bad = c;
  bad.clip_range = -0.1;
  EXPECT_THROW(bad.validate(false), ConfigError);
}

TEST(Bandit, LossGradientsLearnTheBestArm) {
  nn::ParamSet<float> params;
  params.add("logits", {1, static_cast<int>(A)});
  params.add("value", {1});
  auto& logits = params.get("logits");
  auto& value = params.get("value");
  nn::Adam<float> opt(params, nn::AdamConfig{0.05});
  PPOConfig cfg;
  cfg.ent_coef = 0.0;
  Rng rng(1);
  constexpr int best = 5;
  for (int iter = 0; iter < 60; ++iter) {
    const std::size_t b = 64;
    std::vector<std::uint8_t> acts(b);
    std::vector<double> old(b), adv(b), ret(b);
    const std::vector<float> z(logits.data().begin(), logits.data().end());
    for (std::size_t i = 0; i < b; ++i) {
      const int a = sample_action(z, rng);
      acts[i] = static_cast<std::uint8_t>(a);
      old[i] = log_prob(z, a);
      ret[i] = a == best ? 1.0 : 0.0;
      adv[i] = ret[i] - value[0];
    }
    for (int epoch = 0; epoch < 4; ++epoch) {
      std::vector<float> lz, vz(b, value[0]);
      for (std::size_t i = 0; i < b; ++i) lz.insert(lz.end(), logits.data().begin(), logits.data().end());
      const auto g = ppo_loss_grads(lz, vz, acts, old, adv, ret, cfg);
      params.zero_grad();
      auto lg = logits.grad();
      auto vg = value.grad();
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < A; ++j) lg[j] += g.dlogits[i * A + j];
        vg[0] += g.dvalues[i];
      }
      opt.step();
    }
  }
  const std::vector<float> z(logits.data().begin(), logits.data().end());
  EXPECT_GT(std::exp(log_prob(z, best)), 0.9);
  EXPECT_NEAR(value[0], 1.0, 0.2);
}

TEST(Train, ZeroBudgetSavesInitialPolicy) {
  auto s = tiny_setup(agents::Architecture::ppo_cnn, 3);
  s.ppo.total_steps = 0;
  s.checkpoint = temp("crafter_ppo_zero.ckpt");
  const auto r = train(s);
  EXPECT_TRUE(r.report.entries.empty());
  agents::Policy<float> loaded(s.agent, 99);
  nn::load_checkpoint(*s.checkpoint, loaded.params(), s.agent.digest());
  const agents::Policy<float> fresh(s.agent, stream_seed(3, "policy"));
  auto a = fresh.params().begin();
  for (const auto& [name, t] : loaded.params()) {
    ASSERT_EQ(name, a->first);
    ASSERT_TRUE(std::ranges::equal(t.data(), a->second.data())) << name;
    ++a;
  }
  std::filesystem::remove(*s.checkpoint);
}

TEST(Train, CheckpointsAreDeterministic) {
  for (auto arch : {agents::Architecture::ppo_cnn, agents::Architecture::lstm_cnn}) {
    std::vector<std::string> bytes;
    std::vector<double> losses;
    for (std::uint64_t seed : {5u, 5u, 6u}) {
      auto s = tiny_setup(arch, seed);
      s.checkpoint = temp("crafter_ppo_det.ckpt");
      int seen = 0;
      s.on_entry = [&](const ReportEntry&) { ++seen; };
      const auto r = train(s);
      EXPECT_EQ(seen, 2);
      ASSERT_EQ(r.report.entries.size(), 2u);
      EXPECT_EQ(r.report.entries.back().steps, 128);
      EXPECT_GT(r.report.entries.back().update.minibatches, 0);
      losses.push_back(r.report.entries.back().update.policy_loss);
      bytes.push_back(slurp(*s.checkpoint));
      std::filesystem::remove(*s.checkpoint);
    }
    EXPECT_EQ(bytes[0], bytes[1]) << agents::name(arch);
    EXPECT_EQ(losses[0], losses[1]);
    EXPECT_NE(bytes[0], bytes[2]);
  }
}

TEST(Train, ThreadedSteppingMatchesInline) {
  auto a = tiny_setup(agents::Architecture::ppo_cnn, 8);
  auto b = a;
  b.ppo.threads = 3;
  a.checkpoint = temp("crafter_ppo_inline.ckpt");
  b.checkpoint = temp("crafter_ppo_threads.ckpt");
  train(a);
  train(b);
  EXPECT_EQ(slurp(*a.checkpoint), slurp(*b.checkpoint));
  std::filesystem::remove(*a.checkpoint);
  std::filesystem::remove(*b.checkpoint);
}

TEST(Evaluate, CheckpointMatchesLivePolicyAndRefusesMismatch) {
  const auto cfg = tiny(agents::Architecture::ppo_cnn);
  const agents::Policy<float> policy(cfg, 17);
  const auto path = temp("crafter_ppo_eval.ckpt");
  nn::save_checkpoint(path, policy.params(), cfg.digest());
  const EnvSpec spec = env_preset("mini");
  const EvalResult live = evaluate(policy, spec, 6, 42);
  const EvalResult loaded = evaluate(path, cfg, spec, 6, 42);
  EXPECT_EQ(live.episodes, 6);
  EXPECT_EQ(live.score, loaded.score);
  EXPECT_EQ(live.mean_length, loaded.mean_length);
  EXPECT_EQ(live.mean_reward, loaded.mean_reward);
  auto other = cfg;
  other.fc_dim = 24;
  EXPECT_ANY_THROW(evaluate(path, other, spec, 6, 42));
  EXPECT_THROW(evaluate(path, cfg, spec, 0, 42), DomainError);
  std::filesystem::remove(path);
}

TEST(Evaluate, RandomActorEpisodesAreReproducible) {
  const EnvSpec spec = env_preset("mini");
  const auto a = run_episodes(spec, 10, 1, 4, random_actor(3));
  const auto b = run_episodes(spec, 10, 1, 4, random_actor(3));
  EXPECT_EQ(a.episodes, 10);
  EXPECT_EQ(a.score, b.score);
  EXPECT_EQ(a.mean_length, b.mean_length);
  EXPECT_LE(a.mean_length, 200.0);
  EXPECT_GE(a.score, 0.0);
  EXPECT_LE(a.score, 100.0);
  EXPECT_THROW(run_episodes(spec, 0, 1, 4, random_actor(3)), DomainError);
}

TEST(Properties, ClippedGradientNormIsBounded) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    nn::ParamSet<float> params;
    params.add("a", {rng.range(1, 20)});
    params.add("b", {rng.range(1, 5), rng.range(1, 5)});
    const double scale = std::pow(10.0, rng.range(-3, 3));
    for (auto& [_, t] : params)
      for (float& g : t.grad()) g = static_cast<float>(scale * rng.normal());
    const double limit = 0.5;
    const double before = params.clip_grad_norm(limit);
    EXPECT_LE(params.grad_norm(), limit + 1e-6);
    if (before <= limit) EXPECT_NEAR(params.grad_norm(), before, 1e-6 * std::max(1.0, before));
  }
}

TEST(Properties, SampledActionsAreConsistent) {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<float, A> z{};
    for (auto& v : z) v = static_cast<float>(3.0 * rng.normal());
    const int a = sample_action(z, rng);
    ASSERT_GE(a, 0);
    ASSERT_LT(a, static_cast<int>(A));
    EXPECT_GT(std::exp(log_prob(z, a)), 0.0);
    const double h = entropy(z);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(A)) + 1e-12);
  }
}

TEST(Evaluate, RandomPolicyScoresAboveZero) {
  const auto r = run_episodes(env_preset("default"), 20, 4, 8, random_actor(1));
  EXPECT_EQ(r.episodes, 20);
  EXPECT_GT(r.score, 0.0);
  EXPECT_GT(r.rates[static_cast<std::size_t>(Achievement::collect_wood)], 0.0);
}
