#include "crafter/ppo.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <nlohmann/json.hpp>

namespace crafter::ppo {

using nlohmann::json;
using agents::Policy;
using agents::PolicyState;
using nn::Tensor;

void PPOConfig::validate(bool recurrent) const {
  auto fail = [](const std::string& why) { throw ConfigError("ppo config: " + why); };
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (batch_size < 1 || n_epochs < 1 || n_lanes < 1 || n_rollout_steps < 1) fail("sizes must be positive");
  if (n_rollout_steps % n_lanes != 0) fail("n_rollout_steps must be divisible by n_lanes");
  if (batch_size > n_rollout_steps) fail("batch_size exceeds n_rollout_steps");
  if (!(gamma >= 0 && gamma <= 1) || !(gae_lambda >= 0 && gae_lambda <= 1)) fail("gamma and gae_lambda must be in [0, 1]");
  if (!(clip_range >= 0) || !(max_grad_norm > 0)) fail("clip_range must be >= 0 and max_grad_norm > 0");
  if (total_steps < 0 || eval_interval < 0 || checkpoint_interval < 0) fail("step counts must be non-negative");
  if (threads < 1) fail("threads must be positive");
  if (eval_episodes < 1) fail("eval_episodes must be positive");
  if (recurrent) {
    if (seq_len < 1) fail("seq_len must be positive");
    if ((n_rollout_steps / n_lanes) % seq_len != 0) fail("per-lane horizon must be divisible by seq_len");
    if (batch_size % seq_len != 0) fail("batch_size must be divisible by seq_len");
  }
}

json to_json(const PPOConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"n_rollout_steps", c.n_rollout_steps},
              {"n_epochs", c.n_epochs},
              {"gamma", c.gamma},
              {"gae_lambda", c.gae_lambda},
              {"clip_range", c.clip_range},
              {"max_grad_norm", c.max_grad_norm},
              {"ent_coef", c.ent_coef},
              {"vf_coef", c.vf_coef},
              {"n_lanes", c.n_lanes},
              {"total_steps", c.total_steps},
              {"seq_len", c.seq_len},
              {"threads", c.threads},
              {"eval_interval", c.eval_interval},
              {"eval_episodes", c.eval_episodes},
              {"checkpoint_interval", c.checkpoint_interval}};
}

PPOConfig ppo_config_from_json(const json& j) {
  PPOConfig c;
  const json known = to_json(c);
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw ConfigError("unknown ppo key '" + key + "'");
    }
    auto opt = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("learning_rate", c.learning_rate);
    opt("batch_size", c.batch_size);
    opt("n_rollout_steps", c.n_rollout_steps);
    opt("n_epochs", c.n_epochs);
    opt("gamma", c.gamma);
    opt("gae_lambda", c.gae_lambda);
    opt("clip_range", c.clip_range);
    opt("max_grad_norm", c.max_grad_norm);
    opt("ent_coef", c.ent_coef);
    opt("vf_coef", c.vf_coef);
    opt("n_lanes", c.n_lanes);
    opt("total_steps", c.total_steps);
    opt("seq_len", c.seq_len);
    opt("threads", c.threads);
    opt("eval_interval", c.eval_interval);
    opt("eval_episodes", c.eval_episodes);
    opt("checkpoint_interval", c.checkpoint_interval);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ppo config: ") + e.what());
  }
  return c;
}

Gae compute_gae(std::span<const double> rewards, std::span<const double> values,
                std::span<const std::uint8_t> terminals, double bootstrap_value, double gamma, double lambda) {
  if (rewards.size() != values.size() || rewards.size() != terminals.size())
    throw ContractViolation("compute_gae: rewards, values and terminals differ in length");
  if (!(gamma >= 0 && gamma <= 1 && lambda >= 0 && lambda <= 1))
    throw DomainError("compute_gae: gamma and lambda must lie in [0, 1]");
  const std::size_t n = rewards.size();
  Gae g;
  g.advantages.assign(n, 0.0);
  g.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = i + 1 < n ? values[i + 1] : bootstrap_value;
    const double live = terminals[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    g.advantages[i] = next_adv;
    g.returns[i] = next_adv + values[i];
  }
  return g;
}

void RolloutBuffer::reset(int n_lanes, int n_horizon, bool recurrent) {
  lanes = n_lanes;
  horizon = n_horizon;
  const std::size_t n = size();
  obs.assign(n, Observation{});
  actions.assign(n, 0);
  log_probs.assign(n, 0.0);
  values.assign(n, 0.0);
  rewards.assign(n, 0.0);
  terminals.assign(n, 0);
  states.assign(recurrent ? n : 0, {});
  advantages.clear();
  returns.clear();
  advantages_ready = false;
}

void RolloutBuffer::finish(std::span<const double> bootstrap, double gamma, double lambda) {
  if (bootstrap.size() != static_cast<std::size_t>(lanes)) throw ContractViolation("finish: one bootstrap per lane");
  advantages.assign(size(), 0.0);
  returns.assign(size(), 0.0);
  const auto h = static_cast<std::size_t>(horizon);
  for (int l = 0; l < lanes; ++l) {
    const std::size_t off = index(l, 0);
    const Gae g = compute_gae(std::span(rewards).subspan(off, h), std::span(values).subspan(off, h),
                              std::span(terminals).subspan(off, h), bootstrap[static_cast<std::size_t>(l)], gamma,
                              lambda);
    std::copy(g.advantages.begin(), g.advantages.end(), advantages.begin() + static_cast<std::ptrdiff_t>(off));
    std::copy(g.returns.begin(), g.returns.end(), returns.begin() + static_cast<std::ptrdiff_t>(off));
  }
  advantages_ready = true;
}

std::vector<double> normalize_advantages(std::span<const double> adv) {
  std::vector<double> out(adv.begin(), adv.end());
  if (out.size() < 2) return out;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  double var = 0;
  for (double a : out) var += (a - mean) * (a - mean);
  // Sample standard deviation, as the reference implementation.
  const double sd = std::sqrt(var / static_cast<double>(out.size() - 1));
  for (double& a : out) a = (a - mean) / (sd + 1e-8);
  return out;
}

double explained_variance(std::span<const double> predicted, std::span<const double> targets) {
  const auto n = static_cast<double>(targets.size());
  if (targets.empty()) return std::nan("");
  double mt = 0, md = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    mt += targets[i];
    md += targets[i] - predicted[i];
  }
  mt /= n;
  md /= n;
  double vt = 0, vd = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    vt += (targets[i] - mt) * (targets[i] - mt);
    const double d = targets[i] - predicted[i] - md;
    vd += d * d;
  }
  return vt == 0 ? std::nan("") : 1.0 - vd / vt;
}

namespace {

double logsumexp(std::span<const float> z) {
  double mx = z[0];
  for (float v : z) mx = std::max(mx, static_cast<double>(v));
  double s = 0;
  for (float v : z) s += std::exp(static_cast<double>(v) - mx);
  return mx + std::log(s);
}

}  // namespace

double log_prob(std::span<const float> logits, int action) {
  return static_cast<double>(logits[static_cast<std::size_t>(action)]) - logsumexp(logits);
}

double entropy(std::span<const float> logits) {
  const double lse = logsumexp(logits);
  double h = 0;
  for (float v : logits) {
    const double lp = static_cast<double>(v) - lse;
    h -= std::exp(lp) * lp;
  }
  return h;
}

int sample_action(std::span<const float> logits, Rng& rng) {
  const double lse = logsumexp(logits);
  const double u = rng.uniform();
  double acc = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    acc += std::exp(static_cast<double>(logits[i]) - lse);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(logits.size()) - 1;
}

MinibatchGrads ppo_loss_grads(std::span<const float> logits, std::span<const float> values,
                              std::span<const std::uint8_t> actions, std::span<const double> old_log_probs,
                              std::span<const double> advantages, std::span<const double> returns,
                              const PPOConfig& cfg, bool normalize) {
  const std::size_t b = actions.size();
  constexpr std::size_t A = kNumActions;
  if (logits.size() != b * A || values.size() != b || old_log_probs.size() != b || advantages.size() != b ||
      returns.size() != b)
    throw ContractViolation("ppo_loss_grads: minibatch arrays differ in length");
  const std::vector<double> adv = normalize ? normalize_advantages(advantages)
                                            : std::vector<double>(advantages.begin(), advantages.end());
  MinibatchGrads g;
  g.dlogits.assign(b * A, 0.0f);
  g.dvalues.assign(b, 0.0f);
  const double inv_b = 1.0 / static_cast<double>(b);
  const double eps = cfg.clip_range;
  for (std::size_t i = 0; i < b; ++i) {
    const auto z = logits.subspan(i * A, A);
    const double lse = logsumexp(z);
    std::array<double, A> lp{}, p{};
    double h = 0;
    for (std::size_t j = 0; j < A; ++j) {
      lp[j] = static_cast<double>(z[j]) - lse;
      p[j] = std::exp(lp[j]);
      h -= p[j] * lp[j];
    }
    const int a = actions[i];
    const double ratio = std::exp(lp[static_cast<std::size_t>(a)] - old_log_probs[i]);
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    g.policy_loss -= std::min(ratio * adv[i], clipped * adv[i]) * inv_b;
    const bool active = (ratio >= 1.0 - eps && ratio <= 1.0 + eps) || (ratio > 1.0 + eps && adv[i] < 0) ||
                        (ratio < 1.0 - eps && adv[i] > 0);
    const double coef = active ? adv[i] * ratio : 0.0;
    for (std::size_t j = 0; j < A; ++j) {
      const double onehot = j == static_cast<std::size_t>(a) ? 1.0 : 0.0;
      const double d = -coef * (onehot - p[j]) + cfg.ent_coef * p[j] * (lp[j] + h);
      g.dlogits[i * A + j] = static_cast<float>(d * inv_b);
    }
    const double v = values[i];
    g.value_loss += (returns[i] - v) * (returns[i] - v) * inv_b;
    g.dvalues[i] = static_cast<float>(cfg.vf_coef * 2.0 * (v - returns[i]) * inv_b);
    g.entropy += h * inv_b;
    if (std::abs(ratio - 1.0) > eps) g.clip_fraction += inv_b;
    const double log_ratio = lp[static_cast<std::size_t>(a)] - old_log_probs[i];
    g.approx_kl += (std::exp(log_ratio) - 1.0 - log_ratio) * inv_b;
  }
  if (!std::isfinite(g.policy_loss) || !std::isfinite(g.value_loss) || !std::isfinite(g.entropy)) {
    float peak = 0;
    for (float v : logits) peak = std::max(peak, std::abs(v));
    std::ostringstream os;
    os << "non-finite PPO loss: policy " << g.policy_loss << " value " << g.value_loss << " entropy " << g.entropy
       << " max|logit| " << peak << " minibatch " << b;
    throw NumericError(os.str());
  }
  return g;
}

namespace {

template <class T>
void pack_state(const PolicyState<T>& s, int row, std::vector<float>& out) {
  const int h = s.actor.h.dim(1);
  out.assign(static_cast<std::size_t>(4 * h), 0.0f);
  auto copy = [&](const Tensor<T>& t, int slot) {
    if (!t.defined()) return;
    for (int j = 0; j < h; ++j)
      out[static_cast<std::size_t>(slot * h + j)] = static_cast<float>(t[static_cast<std::size_t>(row * h + j)]);
  };
  copy(s.actor.h, 0);
  copy(s.actor.c, 1);
  copy(s.critic.h, 2);
  copy(s.critic.c, 3);
}

PolicyState<float> unpack_states(const Policy<float>& policy, const std::vector<const std::vector<float>*>& rows) {
  const int n = static_cast<int>(rows.size());
  PolicyState<float> s = policy.initial_state(n);
  const int h = policy.config().lstm_dim;
  auto fill = [&](Tensor<float>& t, int slot) {
    if (!t.defined()) return;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < h; ++j)
        t.data()[static_cast<std::size_t>(i * h + j)] = (*rows[static_cast<std::size_t>(i)])[static_cast<std::size_t>(slot * h + j)];
  };
  fill(s.actor.h, 0);
  fill(s.actor.c, 1);
  fill(s.critic.h, 2);
  fill(s.critic.c, 3);
  return s;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

void apply_gradients(Policy<float>& policy, nn::Adam<float>& opt,
                     const std::vector<std::pair<Tensor<float>, std::vector<float>>>& roots, const PPOConfig& cfg,
                     UpdateStats& st) {
  policy.params().zero_grad();
  nn::backward<float>(roots);
  const double norm = policy.params().clip_grad_norm(cfg.max_grad_norm);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  st.grad_norm += norm;
  opt.step();
}

void accumulate(UpdateStats& st, const MinibatchGrads& g) {
  st.policy_loss += g.policy_loss;
  st.value_loss += g.value_loss;
  st.entropy += g.entropy;
  st.clip_fraction += g.clip_fraction;
  st.approx_kl += g.approx_kl;
  ++st.minibatches;
}

}  // namespace

UpdateStats ppo_update(Policy<float>& policy, nn::Adam<float>& optimizer, const RolloutBuffer& buf,
                       const PPOConfig& cfg, Rng& rng) {
  if (!buf.advantages_ready) throw ContractViolation("ppo_update: buffer has no advantages yet");
  UpdateStats st;
  const bool recurrent = agents::is_recurrent(policy.config().arch);
  if (!recurrent) {
    std::vector<std::size_t> order(buf.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
      shuffle(order, rng);
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        const std::size_t b = end - start;
        std::vector<Observation> obs(b);
        std::vector<std::uint8_t> acts(b);
        std::vector<double> old(b), adv(b), ret(b);
        for (std::size_t i = 0; i < b; ++i) {
          const std::size_t k = order[start + i];
          obs[i] = buf.obs[k];
          acts[i] = buf.actions[k];
          old[i] = buf.log_probs[k];
          adv[i] = buf.advantages[k];
          ret[i] = buf.returns[k];
        }
        const auto out = policy.forward(std::span<const Observation>(obs));
        const auto g = ppo_loss_grads(out.logits.data(), out.value.data(), acts, old, adv, ret, cfg);
        accumulate(st, g);
        apply_gradients(policy, optimizer, {{out.logits, g.dlogits}, {out.value, g.dvalues}}, cfg, st);
      }
    }
  } else {
    const int L = cfg.seq_len;
    std::vector<std::size_t> chunks;
    for (int l = 0; l < buf.lanes; ++l)
      for (int t = 0; t < buf.horizon; t += L) chunks.push_back(buf.index(l, t));
    const std::size_t per_batch = static_cast<std::size_t>(std::max(1, cfg.batch_size / L));
    for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
      shuffle(chunks, rng);
      for (std::size_t start = 0; start < chunks.size(); start += per_batch) {
        const std::size_t end = std::min(chunks.size(), start + per_batch);
        const int m = static_cast<int>(end - start);
        std::vector<const std::vector<float>*> init;
        for (std::size_t c = start; c < end; ++c) init.push_back(&buf.states[chunks[c]]);
        PolicyState<float> state = unpack_states(policy, init);
        std::vector<Tensor<float>> logits_t, values_t;
        std::vector<float> logits, values;
        std::vector<std::uint8_t> acts;
        std::vector<double> old, adv, ret;
        for (int t = 0; t < L; ++t) {
          std::vector<Observation> obs(static_cast<std::size_t>(m));
          std::vector<float> keep(static_cast<std::size_t>(m));
          for (int i = 0; i < m; ++i) {
            const std::size_t k = chunks[start + static_cast<std::size_t>(i)] + static_cast<std::size_t>(t);
            obs[static_cast<std::size_t>(i)] = buf.obs[k];
            keep[static_cast<std::size_t>(i)] = buf.terminals[k] ? 0.0f : 1.0f;
            acts.push_back(buf.actions[k]);
            old.push_back(buf.log_probs[k]);
            adv.push_back(buf.advantages[k]);
            ret.push_back(buf.returns[k]);
          }
          auto out = policy.forward(std::span<const Observation>(obs), &state);
          logits.insert(logits.end(), out.logits.data().begin(), out.logits.data().end());
          values.insert(values.end(), out.value.data().begin(), out.value.data().end());
          logits_t.push_back(out.logits);
          values_t.push_back(out.value);
          state = agents::mask_state<float>(out.state, keep);
        }
        const auto g = ppo_loss_grads(logits, values, acts, old, adv, ret, cfg);
        accumulate(st, g);
        std::vector<std::pair<Tensor<float>, std::vector<float>>> roots;
        const auto mz = static_cast<std::size_t>(m);
        for (int t = 0; t < L; ++t) {
          const auto off = static_cast<std::size_t>(t) * mz;
          roots.emplace_back(logits_t[static_cast<std::size_t>(t)],
                             std::vector<float>(g.dlogits.begin() + static_cast<std::ptrdiff_t>(off * kNumActions),
                                                g.dlogits.begin() + static_cast<std::ptrdiff_t>((off + mz) * kNumActions)));
          roots.emplace_back(values_t[static_cast<std::size_t>(t)],
                             std::vector<float>(g.dvalues.begin() + static_cast<std::ptrdiff_t>(off),
                                                g.dvalues.begin() + static_cast<std::ptrdiff_t>(off + mz)));
        }
        apply_gradients(policy, optimizer, roots, cfg, st);
      }
    }
  }
  if (st.minibatches > 0) {
    const double n = st.minibatches;
    st.policy_loss /= n;
    st.value_loss /= n;
    st.entropy /= n;
    st.clip_fraction /= n;
    st.approx_kl /= n;
    st.grad_norm /= n;
  }
  st.explained_variance = explained_variance(buf.values, buf.returns);
  return st;
}

json to_json(const ReportEntry& e) {
  json j{{"iteration", e.iteration},
         {"steps", e.steps},
         {"policy_loss", e.update.policy_loss},
         {"value_loss", e.update.value_loss},
         {"entropy", e.update.entropy},
         {"clip_fraction", e.update.clip_fraction},
         {"approx_kl", e.update.approx_kl},
         {"explained_variance", e.update.explained_variance},
         {"grad_norm", e.update.grad_norm},
         {"steps_per_second", e.steps_per_second},
         {"episodes", e.episodes},
         {"mean_episode_reward", e.mean_episode_reward}};
  if (e.eval_score) j["eval_score"] = *e.eval_score;
  return j;
}

EvalResult run_episodes(const EnvSpec& spec, int n_episodes, std::uint64_t seed, int lanes, const ActFn& act,
                        std::shared_ptr<StatsLog> stats, std::shared_ptr<const Rules> rules) {
  if (n_episodes <= 0) throw DomainError("evaluation needs at least one episode");
  const int width = std::max(1, std::min(lanes, n_episodes));
  EnvOptions opts;
  opts.rules = std::move(rules);
  opts.auto_reset = false;
  opts.stats = std::move(stats);
  std::vector<std::optional<Env>> envs(static_cast<std::size_t>(width));
  std::vector<Observation> obs(static_cast<std::size_t>(width));
  std::vector<std::uint8_t> fresh(static_cast<std::size_t>(width), 0);
  int next = 0;
  auto start = [&](std::size_t i) {
    if (next >= n_episodes) {
      envs[i].reset();
      return;
    }
    envs[i].emplace(spec, seed, static_cast<std::uint64_t>(next++), opts);
    obs[i] = envs[i]->reset();
    fresh[i] = 1;
  };
  for (std::size_t i = 0; i < envs.size(); ++i) start(i);
  EvalResult res;
  double total_len = 0, total_reward = 0;
  for (;;) {
    bool any = false;
    for (const auto& e : envs) any = any || e.has_value();
    if (!any) break;
    const std::vector<Action> actions = act(obs, fresh);
    std::fill(fresh.begin(), fresh.end(), 0);
    for (std::size_t i = 0; i < envs.size(); ++i) {
      if (!envs[i]) continue;
      auto r = envs[i]->step(actions[i]);
      obs[i] = r.obs;
      if (r.done) {
        res.ledger.add(*r.info.episode);
        total_len += static_cast<double>(r.info.episode->length);
        total_reward += r.info.episode->reward;
        start(i);
      }
    }
  }
  res.episodes = res.ledger.episodes();
  res.rates = success_rates(res.ledger);
  res.score = crafter_score(res.rates);
  res.mean_length = total_len / static_cast<double>(res.episodes);
  res.mean_reward = total_reward / static_cast<double>(res.episodes);
  return res;
}

ActFn policy_actor(const Policy<float>& policy, std::uint64_t seed, bool greedy) {
  struct Ctx {
    Rng rng;
    PolicyState<float> state;
  };
  auto ctx = std::make_shared<Ctx>(Ctx{Rng(seed), {}});
  return [&policy, ctx, greedy](std::span<const Observation> obs, std::span<const std::uint8_t> fresh) {
    nn::NoGrad guard;
    const int n = static_cast<int>(obs.size());
    const PolicyState<float>* sp = nullptr;
    PolicyState<float> masked;
    if (agents::is_recurrent(policy.config().arch)) {
      if (!ctx->state.defined() || ctx->state.actor.h.dim(0) != n) ctx->state = policy.initial_state(n);
      std::vector<float> keep(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) keep[static_cast<std::size_t>(i)] = fresh[static_cast<std::size_t>(i)] ? 0.0f : 1.0f;
      masked = agents::mask_state<float>(ctx->state, keep);
      sp = &masked;
    }
    const auto out = policy.forward(obs, sp);
    if (sp) ctx->state = out.state;
    std::vector<Action> acts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto z = out.logits.data().subspan(static_cast<std::size_t>(i) * kNumActions, kNumActions);
      const int a = greedy ? static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()) : sample_action(z, ctx->rng);
      acts[static_cast<std::size_t>(i)] = static_cast<Action>(a);
    }
    return acts;
  };
}

ActFn random_actor(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](std::span<const Observation> obs, std::span<const std::uint8_t>) {
    std::vector<Action> acts(obs.size());
    for (auto& a : acts) a = static_cast<Action>(rng->below(kNumActions));
    return acts;
  };
}

EvalResult evaluate(const Policy<float>& policy, const EnvSpec& spec, int n_episodes, std::uint64_t seed,
                    std::shared_ptr<StatsLog> stats, bool greedy) {
  return run_episodes(spec, n_episodes, seed, 16, policy_actor(policy, stream_seed(seed, "eval_actions"), greedy),
                      std::move(stats));
}

EvalResult evaluate(const std::filesystem::path& checkpoint, const agents::AgentConfig& config, const EnvSpec& spec,
                    int n_episodes, std::uint64_t seed, std::shared_ptr<StatsLog> stats) {
  if (n_episodes <= 0) throw DomainError("evaluation needs at least one episode");
  Policy<float> policy(config, 0);
  nn::load_checkpoint(checkpoint, policy.params(), config.digest());
  return evaluate(policy, spec, n_episodes, seed, std::move(stats));
}

namespace {

// Keeps large activation buffers on the heap instead of mapping and unmapping
// them on every minibatch.
void tune_allocator() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

TrainResult train(const TrainSetup& setup) {
  tune_allocator();
  setup.agent.validate();
  setup.train_spec.validate();
  const PPOConfig& cfg = setup.ppo;
  const bool recurrent = agents::is_recurrent(setup.agent.arch);
  cfg.validate(recurrent);
  TrainResult result{Policy<float>(setup.agent, stream_seed(setup.run_seed, "policy")), {}};
  Policy<float>& policy = result.policy;
  const auto save = [&] {
    if (setup.checkpoint) nn::save_checkpoint(*setup.checkpoint, policy.params(), setup.agent.digest());
  };
  if (cfg.total_steps == 0) {
    save();
    return result;
  }
  nn::Adam<float> opt(policy.params(), nn::AdamConfig{cfg.learning_rate});
  Rng action_rng(stream_seed(setup.run_seed, "actions"));
  Rng batch_rng(stream_seed(setup.run_seed, "minibatches"));
  EnvOptions opts;
  opts.rules = setup.rules;
  opts.stats = setup.stats;
  std::vector<Env> lanes;
  lanes.reserve(static_cast<std::size_t>(cfg.n_lanes));
  for (int l = 0; l < cfg.n_lanes; ++l) lanes.emplace_back(setup.train_spec, setup.run_seed, static_cast<std::uint64_t>(l), opts);
  std::vector<Observation> obs;
  for (auto& e : lanes) obs.push_back(e.reset());
  std::optional<WorkerPool> pool;
  if (cfg.threads > 1) pool.emplace(static_cast<unsigned>(cfg.threads));
  const int horizon = cfg.n_rollout_steps / cfg.n_lanes;
  PolicyState<float> state = policy.initial_state(cfg.n_lanes);
  RolloutBuffer buf;
  std::int64_t steps = 0;
  std::int64_t next_eval = cfg.eval_interval, next_ckpt = cfg.checkpoint_interval;
  for (int iter = 1; steps < cfg.total_steps; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    buf.reset(cfg.n_lanes, horizon, recurrent);
    ReportEntry entry;
    double reward_sum = 0;
    for (int t = 0; t < horizon; ++t) {
      std::vector<Action> actions(static_cast<std::size_t>(cfg.n_lanes));
      {
        nn::NoGrad guard;
        const auto out = policy.forward(std::span<const Observation>(obs), recurrent ? &state : nullptr);
        for (int l = 0; l < cfg.n_lanes; ++l) {
          const std::size_t k = buf.index(l, t);
          const auto z = out.logits.data().subspan(static_cast<std::size_t>(l) * kNumActions, kNumActions);
          const int a = sample_action(z, action_rng);
          actions[static_cast<std::size_t>(l)] = static_cast<Action>(a);
          buf.obs[k] = obs[static_cast<std::size_t>(l)];
          buf.actions[k] = static_cast<std::uint8_t>(a);
          buf.log_probs[k] = log_prob(z, a);
          buf.values[k] = out.value[static_cast<std::size_t>(l)];
          if (recurrent) pack_state(state, l, buf.states[k]);
        }
        if (recurrent) state = out.state;
      }
      const auto results = step_batch(std::span<Env>(lanes), actions, pool ? &*pool : nullptr);
      std::vector<float> keep(static_cast<std::size_t>(cfg.n_lanes));
      for (int l = 0; l < cfg.n_lanes; ++l) {
        const auto& r = results[static_cast<std::size_t>(l)];
        const std::size_t k = buf.index(l, t);
        buf.rewards[k] = r.reward;
        buf.terminals[k] = r.done ? 1 : 0;
        keep[static_cast<std::size_t>(l)] = r.done ? 0.0f : 1.0f;
        obs[static_cast<std::size_t>(l)] = r.obs;
        if (r.info.episode) {
          ++entry.episodes;
          reward_sum += r.info.episode->reward;
        }
      }
      if (recurrent) {
        nn::NoGrad guard;
        state = agents::mask_state<float>(state, keep);
      }
    }
    std::vector<double> bootstrap(static_cast<std::size_t>(cfg.n_lanes));
    {
      nn::NoGrad guard;
      const auto out = policy.forward(std::span<const Observation>(obs), recurrent ? &state : nullptr);
      for (int l = 0; l < cfg.n_lanes; ++l) bootstrap[static_cast<std::size_t>(l)] = out.value[static_cast<std::size_t>(l)];
    }
    buf.finish(bootstrap, cfg.gamma, cfg.gae_lambda);
    entry.update = ppo_update(policy, opt, buf, cfg, batch_rng);
    steps += cfg.n_rollout_steps;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    entry.iteration = iter;
    entry.steps = steps;
    entry.steps_per_second = secs > 0 ? cfg.n_rollout_steps / secs : 0;
    entry.mean_episode_reward = entry.episodes ? reward_sum / static_cast<double>(entry.episodes) : std::nan("");
    if (cfg.eval_interval > 0 && steps >= next_eval) {
      const EnvSpec& spec = setup.eval_spec ? *setup.eval_spec : setup.train_spec;
      entry.eval_score = evaluate(policy, spec, cfg.eval_episodes, stream_seed(setup.run_seed, "eval")).score;
      while (next_eval <= steps) next_eval += cfg.eval_interval;
    }
    if (cfg.checkpoint_interval > 0 && steps >= next_ckpt) {
      save();
      while (next_ckpt <= steps) next_ckpt += cfg.checkpoint_interval;
    }
    if (setup.on_entry) setup.on_entry(entry);
    result.report.entries.push_back(entry);
  }
  save();
  return result;
}

}  // namespace crafter::ppo
