// One PASS/FAIL line per acceptance criterion. Tolerances are pinned here.
// Usage: acceptance [name-substring ...]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <nlohmann/json.hpp>

#include "crafter/agents.hpp"
#include "crafter/env.hpp"
#include "crafter/ppo.hpp"
#include "crafter/worldgen.hpp"
#include "support/gradcheck.hpp"
#include "support/techtree.hpp"

using namespace crafter;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// ---- score -----------------------------------------------------------------

Outcome score_formula() {
  using Big = boost::multiprecision::cpp_bin_float_50;
  std::vector<double> zeros(kNumAchievements, 0.0), full(kNumAchievements, 100.0), one(kNumAchievements, 0.0);
  one[0] = 100.0;
  Big acc = 0;
  for (double v : one) acc += boost::multiprecision::log(Big(1) + Big(v));
  const double oracle = static_cast<double>(boost::multiprecision::exp(acc / Big(one.size())) - Big(1));
  const double s0 = crafter_score(zeros), s100 = crafter_score(full), s1 = crafter_score(one);
  const bool ok = s0 == 0.0 && s100 == 100.0 && std::abs(s1 - oracle) < 1e-5 && std::abs(s1 - 0.23340) < 1e-5;
  return {ok, fmt("S(0)=%g S(100)=%.17g S(single)=%.6f oracle=%.6f", s0, s100, s1, oracle)};
}

// ---- determinism -------------------------------------------------------------

Outcome determinism() {
  const EnvSpec spec = env_preset("default");
  const auto run = [&] {
    std::vector<std::uint64_t> digests;
    int exact = 0;
    for (std::uint64_t ep = 0; ep < 100; ++ep) {
      EnvOptions eo;
      eo.auto_reset = false;
      Env env(spec, 1000 + ep, 0, eo);
      env.reset();
      Rng rng(stream_seed(ep, "acceptance_actions"));
      for (int t = 0; t < 500 && env.active(); ++t) env.step(static_cast<Action>(rng.below(kNumActions)));
      const EpisodeRecord rec = episode_record_from_json(to_json(record_episode(env)));
      const ReplayResult r = replay(rec);
      exact += r.ok && r.message == "OK, byte-exact";
      digests.push_back(r.stream_digest);
      digests.push_back(rec.final_state_digest);
    }
    return std::pair{exact, digests};
  };
  const auto t0 = Clock::now();
  const auto [a_ok, a] = run();
  const auto [b_ok, b] = run();
  const bool ok = a_ok == 100 && b_ok == 100 && a == b;
  return {ok, fmt("byte-exact replays %d/100 and %d/100, runs identical: %s (%.1fs)", a_ok, b_ok,
                  a == b ? "yes" : "no", seconds_since(t0))};
}

// ---- object counts -------------------------------------------------------------

Outcome table6_counts() {
  const auto t0 = Clock::now();
  int mismatches = 0, worlds = 0;
  std::string worst_pop;
  double worst = 0;
  for (std::size_t p = 0; p < kNumPresetNames.size(); ++p) {
    const EnvSpec spec = env_preset(kNumPresetNames[p]);
    const CountTargets targets = spec.counts();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto w = generate(GenParams::from_spec(spec, seed));
      const auto c = count_materials(w.map);
      const auto get = [&](Material m) { return c.contains(m) ? c.at(m) : 0; };
      mismatches += get(Material::tree) != rounded_count(targets[0]) || get(Material::coal) != rounded_count(targets[1]);
      ++worlds;
    }
    // Time-averaged creature populations, immortal random-action player.
    auto ctx = std::make_shared<SimContext>(*SimContext::from_spec(spec));
    ctx->options.immortal = true;
    std::array<double, kNumCreatureKinds> sum{};
    std::int64_t samples = 0;
    for (std::uint64_t ep = 0; ep < 200; ++ep) {
      WorldState s = new_world(ctx, stream_seed(ep, "census"));
      Rng rng(ep);
      for (int t = 0; t < 1000; ++t) {
        step(s, static_cast<Action>(rng.below(kNumActions)));
        for (CreatureKind k : {CreatureKind::cow, CreatureKind::zombie, CreatureKind::skeleton})
          sum[static_cast<std::size_t>(k)] += s.population(k);
        ++samples;
      }
    }
    const std::pair<CreatureKind, CountClass> kinds[] = {{CreatureKind::cow, CountClass::cow},
                                                         {CreatureKind::zombie, CountClass::zombie},
                                                         {CreatureKind::skeleton, CountClass::skeleton}};
    for (const auto& [k, cls] : kinds) {
      const double target = targets[static_cast<std::size_t>(cls)];
      const double mean = sum[static_cast<std::size_t>(k)] / static_cast<double>(samples);
      const double rel = target > 0 ? std::abs(mean - target) / target : std::abs(mean);
      if (rel >= worst) {
        worst = rel;
        worst_pop = fmt("%s %s mean %.2f target %.1f", std::string(kNumPresetNames[p]).c_str(),
                        std::string(kCreatureNames[static_cast<std::size_t>(k)]).c_str(), mean, target);
      }
    }
  }
  const bool ok = mismatches == 0 && worst <= 0.20;
  return {ok, fmt("tree/coal mismatches %d of %d worlds; worst population deviation %.1f%% (%s) (%.0fs)", mismatches,
                  worlds, 100 * worst, worst_pop.c_str(), seconds_since(t0))};
}

// ---- appearance distributions -----------------------------------------------------

Outcome table4_distributions() {
  int tests = 0, failures = 0;
  for (const auto& p : builtin_presets()) {
    for (const EnvSpec* spec : {&p.train, &p.eval}) {
      for (std::size_t c = 0; c < kNumVariantClasses; ++c) {
        Rng rng(stream_seed(c + 17, p.name));
        std::array<int, kNumVariants> counts{};
        const int n = 10000;
        for (int i = 0; i < n; ++i)
          ++counts[static_cast<std::size_t>(sample_variant(static_cast<VariantClass>(c), spec->appearance, rng) - 1)];
        const auto& probs = spec->appearance.probs[c];
        double stat = 0;
        int dof = -1;
        bool zero_hit = false;
        for (std::size_t v = 0; v < kNumVariants; ++v) {
          if (probs[v] == 0.0) {
            zero_hit = zero_hit || counts[v] != 0;
            continue;
          }
          const double e = n * probs[v];
          stat += (counts[v] - e) * (counts[v] - e) / e;
          ++dof;
        }
        bool ok = !zero_hit;
        if (ok && dof > 0) {
          const boost::math::chi_squared dist(dof);
          ok = stat <= boost::math::quantile(boost::math::complement(dist, 0.01));
        }
        ++tests;
        failures += !ok;
      }
    }
  }
  // At alpha = 0.01 about 1% of correct fits are rejected by chance.
  const int allowed = std::max(1, static_cast<int>(std::ceil(0.01 * tests * 3)));
  return {failures <= allowed, fmt("%d of %d goodness-of-fit tests rejected at alpha=0.01 (allowed %d)", failures,
                                   tests, allowed)};
}

// ---- GAE ---------------------------------------------------------------------

Outcome gae_oracle() {
  Rng rng(2024);
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
    const auto g = ppo::compute_gae(r, v, d, boot, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      double coef = 1, sum = 0;
      for (std::size_t k = t; k < n; ++k) {
        const double next = k + 1 < n ? v[k + 1] : boot;
        sum += coef * (r[k] + (d[k] ? 0.0 : gamma * next) - v[k]);
        if (d[k]) break;
        coef *= gamma * lambda;
      }
      worst = std::max({worst, std::abs(g.advantages[t] - sum), std::abs(g.returns[t] - sum - v[t])});
    }
  }
  return {worst < 1e-6, fmt("max abs diff %.3g over 1000 instances", worst)};
}

// ---- gradients --------------------------------------------------------------------

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  Rng rng(77);
  std::string detail;
  bool ok = true;
  for (const auto& make : testing::layer_case_makers()) {
    double worst = 0;
    std::string name;
    for (int shape = 0; shape < 100; ++shape) {
      testing::LayerCase c = make(rng);
      name = c.name;
      worst = std::max(worst, testing::check_gradients(c.inputs, c.f, rng).max_rel);
    }
    ok = ok && worst < 1e-4;
    detail += fmt("%s %.1e; ", name.c_str(), worst);
  }
  return {ok, detail + fmt("(%.1fs)", seconds_since(t0))};
}

// ---- parameter counts ----------------------------------------------------------------

Outcome parameter_counts() {
  using agents::AgentConfig;
  using agents::Architecture;
  const double spcnn = static_cast<double>(agents::parameter_count(AgentConfig::defaults(Architecture::ppo_spcnn)));
  const double cnn = static_cast<double>(agents::parameter_count(AgentConfig::defaults(Architecture::ppo_cnn)));
  const bool s_ok = std::abs(spcnn - 134e6) <= 0.05 * 134e6;
  const bool c_ok = std::abs(cnn - 1e6) <= 0.10 * 1e6;
  return {s_ok && c_ok, fmt("PPO-SPCNN %.0f (%s, 134M +-5%%), PPO-CNN %.0f (%s, 1M +-10%%)", spcnn,
                            s_ok ? "ok" : "out of band", cnn, c_ok ? "ok" : "out of band")};
}

// ---- attention ----------------------------------------------------------------------

std::vector<Observation> sample_observations(int n) {
  Env env(env_preset("default"), 5);
  std::vector<Observation> out{env.reset()};
  Rng rng(5);
  while (static_cast<int>(out.size()) < n) {
    for (int i = 0; i < 7; ++i) env.step(static_cast<Action>(rng.below(kNumActions)));
    out.push_back(env.observe());
  }
  return out;
}

Outcome attention_invariants() {
  using agents::Architecture;
  const auto t0 = Clock::now();
  const auto obs = sample_observations(2);
  double row_err = 0, col_err = 0;
  for (Architecture a : {Architecture::oc_sa, Architecture::oc_ca}) {
    for (bool ln : {false, true}) {
      auto cfg = agents::AgentConfig::defaults(a);
      cfg.use_layernorm = cfg.use_residual_mlp = ln;
      const agents::Policy<double> p(cfg, 11);
      const auto out = p.forward(obs);
      for (const auto& layer : out.attention) {
        const auto& r = layer.result;
        const auto rows = r.weights.size() / static_cast<std::size_t>(r.keys);
        for (std::size_t row = 0; row < rows; ++row) {
          double s = 0;
          for (int k = 0; k < r.keys; ++k) s += r.weights[row * static_cast<std::size_t>(r.keys) + static_cast<std::size_t>(k)];
          row_err = std::max(row_err, std::abs(s - 1.0));
        }
      }
    }
  }
  auto comp_cfg = agents::apply_ablation(agents::AgentConfig::defaults(Architecture::oc_ca),
                                         {{agents::Toggle::slot_competition}});
  const agents::Policy<double> comp(comp_cfg, 11);
  const auto m = agents::extract_attention(comp.config(), comp.forward(obs))[0];
  for (int h = 0; h < m.heads; ++h)
    for (int k = 0; k < m.keys; ++k) {
      double s = 0;
      for (int r = 0; r < m.rows; ++r) s += m.at(h, r, k);
      col_err = std::max(col_err, std::abs(s - 1.0));
    }

  auto nope = agents::AgentConfig::defaults(Architecture::oc_ca);
  nope.use_positional_embeddings = false;
  const agents::Policy<double> p(nope, 12);
  const auto patches = p.encode_patches(agents::observations_to_tensor<double>(obs));
  const int n = patches.dim(0), k = patches.dim(1), f = patches.dim(2);
  const auto base = p.forward_from_patches(patches).logits;
  Rng rng(4);
  double perm_diff = 0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = k - 1; i > 0; --i)
      std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    std::vector<double> v(patches.size());
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < k; ++t)
        std::copy_n(patches.data().begin() + (i * k + perm[static_cast<std::size_t>(t)]) * f, f,
                    v.begin() + (i * k + t) * f);
    const auto shuffled = p.forward_from_patches(nn::Tensor<double>::from(patches.shape(), std::move(v))).logits;
    for (std::size_t i = 0; i < base.size(); ++i) perm_diff = std::max(perm_diff, std::abs(base[i] - shuffled[i]));
  }
  const bool ok = row_err < 1e-6 && col_err < 1e-6 && m.columns_stochastic && perm_diff < 1e-5;
  return {ok, fmt("row-sum err %.1e, competition column-sum err %.1e, permutation logit diff %.1e (%.1fs)", row_err,
                  col_err, perm_diff, seconds_since(t0))};
}

// ---- technology tree -----------------------------------------------------------------

Outcome tech_tree() {
  const auto t0 = Clock::now();
  const auto rep = testing::search_tech_tree(testing::techtree_world());
  std::size_t reached = 0, chain = 0;
  for (const auto& [a, _] : testing::tech_prerequisites()) {
    ++chain;
    reached += rep.reached.test(static_cast<std::size_t>(a));
  }
  const bool ok = rep.violations.empty() && reached == chain;
  return {ok, fmt("%zu states, %zu violations, %zu/%zu chain achievements reached (%.0fs)", rep.states,
                  rep.violations.size(), reached, chain, seconds_since(t0))};
}

// ---- PPO smoke --------------------------------------------------------------------

Outcome ppo_smoke() {
  const auto t0 = Clock::now();
  const EnvSpec spec = env_preset("mini");
  const auto wood = static_cast<std::size_t>(Achievement::collect_wood);
  std::vector<double> trained, random;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ppo::TrainSetup s;
    s.train_spec = spec;
    s.agent = agents::AgentConfig::defaults(agents::Architecture::ppo_cnn);
    s.agent.cnn_channels = {16, 32, 32};
    s.agent.fc_dim = 128;
    s.ppo.total_steps = 100'000;
    s.ppo.n_lanes = 8;
    s.run_seed = seed;
    const auto r = ppo::train(s);
    trained.push_back(ppo::evaluate(r.policy, spec, 100, stream_seed(seed, "smoke_eval")).rates[wood]);
    random.push_back(
        ppo::run_episodes(spec, 100, stream_seed(seed, "smoke_eval"), 16, ppo::random_actor(seed)).rates[wood]);
  }
  const double t = std::accumulate(trained.begin(), trained.end(), 0.0) / 3.0;
  const double r = std::accumulate(random.begin(), random.end(), 0.0) / 3.0;
  // Materially lower: at least 10 percentage points below the trained rate.
  const bool ok = t >= 50.0 && r <= t - 10.0;
  return {ok, fmt("collect_wood trained %.1f%% [%.0f %.0f %.0f], random %.1f%% (%.0fs)", t, trained[0], trained[1],
                  trained[2], r, seconds_since(t0))};
}

// ---- throughput -----------------------------------------------------------------------

Outcome throughput() {
  const EnvSpec spec = env_preset("default");
  Env env(spec, 1);
  env.reset();
  Rng rng(1);
  const int n = 50'000;
  auto t0 = Clock::now();
  for (int i = 0; i < n; ++i) {
    if (env.step(static_cast<Action>(rng.below(kNumActions))).done) env.reset();
  }
  const double single = n / seconds_since(t0);

  const auto batch_rate = [&](WorkerPool* pool) {
    std::vector<Env> lanes;
    for (int l = 0; l < 8; ++l) {
      lanes.emplace_back(spec, 2, static_cast<std::uint64_t>(l));
      lanes.back().reset();
    }
    std::vector<Action> acts(8);
    const int iters = 4000;
    const auto t = Clock::now();
    for (int i = 0; i < iters; ++i) {
      for (auto& a : acts) a = static_cast<Action>(rng.below(kNumActions));
      step_batch(std::span<Env>(lanes), acts, pool);
    }
    return 8.0 * iters / seconds_since(t);
  };
  WorkerPool pool(8);
  const double sequential = batch_rate(nullptr);
  const double parallel = batch_rate(&pool);
  const double scaling = parallel / single;
  const bool ok = single >= 10'000 && scaling >= 4.0;
  return {ok, fmt("single lane %.0f steps/s (floor 10000); 8 lanes %.0f steps/s pooled, %.0f inline; scaling %.2fx "
                  "(floor 4x) on %u hardware threads",
                  single, parallel, sequential, scaling, std::thread::hardware_concurrency())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"score_formula", score_formula},
      {"determinism_replay", determinism},
      {"table6_counts", table6_counts},
      {"table4_distributions", table4_distributions},
      {"gae_oracle", gae_oracle},
      {"gradient_checks", gradient_checks},
      {"parameter_counts", parameter_counts},
      {"attention_invariants", attention_invariants},
      {"tech_tree_ordering", tech_tree},
      {"ppo_smoke_training", ppo_smoke},
      {"throughput_floor", throughput},
  };
  int failed = 0, ran = 0;
  for (const auto& [name, fn] : criteria) {
    bool selected = argc < 2;
    for (int i = 1; i < argc; ++i) selected = selected || name.find(argv[i]) != std::string::npos;
    if (!selected) continue;
    ++ran;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
