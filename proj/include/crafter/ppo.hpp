#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crafter/agents.hpp"
#include "crafter/env.hpp"

namespace crafter::ppo {

struct PPOConfig {
  double learning_rate = 3e-4;
  int batch_size = 128;
  // Transitions per update, summed over lanes.
  int n_rollout_steps = 4096;
  int n_epochs = 4;
  double gamma = 0.95;
  double gae_lambda = 0.65;
  double clip_range = 0.2;
  double max_grad_norm = 0.5;
  double ent_coef = 0.01;
  double vf_coef = 0.5;
  int n_lanes = 8;
  std::int64_t total_steps = 1'000'000;
  // Truncated-backprop window for recurrent agents.
  int seq_len = 16;
  // Worker threads for environment stepping (1 = inline).
  int threads = 1;
  // Periodic evaluation and checkpoints, in environment steps (0 = off).
  std::int64_t eval_interval = 0;
  int eval_episodes = 100;
  std::int64_t checkpoint_interval = 0;

  void validate(bool recurrent) const;
  friend bool operator==(const PPOConfig&, const PPOConfig&) = default;
};

nlohmann::json to_json(const PPOConfig& c);
// Missing keys keep their defaults.
PPOConfig ppo_config_from_json(const nlohmann::json& j);

struct Gae {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// terminals[t] marks that the episode ended after step t; bootstrap_value is
// v(s_T) for the state after the last step.
Gae compute_gae(std::span<const double> rewards, std::span<const double> values,
                std::span<const std::uint8_t> terminals, double bootstrap_value, double gamma, double lambda);

// One lane-major rollout: index = lane * horizon + t.
struct RolloutBuffer {
  int lanes = 0;
  int horizon = 0;
  std::vector<Observation> obs;
  std::vector<std::uint8_t> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminals;
  // Recurrent state fed into each step, [index][4 * lstm_dim]: actor h, c,
  // critic h, c (critic zero when absent).
  std::vector<std::vector<float>> states;
  std::vector<double> advantages;
  std::vector<double> returns;
  bool advantages_ready = false;

  void reset(int n_lanes, int n_horizon, bool recurrent);
  std::size_t size() const { return static_cast<std::size_t>(lanes) * static_cast<std::size_t>(horizon); }
  std::size_t index(int lane, int t) const {
    return static_cast<std::size_t>(lane) * static_cast<std::size_t>(horizon) + static_cast<std::size_t>(t);
  }
  // Fills advantages and returns from per-lane bootstrap values.
  void finish(std::span<const double> bootstrap, double gamma, double lambda);
};

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double approx_kl = 0;
  double explained_variance = 0;
  double grad_norm = 0;
  int minibatches = 0;
};

struct MinibatchGrads {
  std::vector<float> dlogits;
  std::vector<float> dvalues;
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double approx_kl = 0;
};

// Loss terms and their gradients with respect to logits [B, 17] and values
// [B]. Advantages are normalized inside (mean 0, std 1) when normalize is set.
MinibatchGrads ppo_loss_grads(std::span<const float> logits, std::span<const float> values,
                              std::span<const std::uint8_t> actions, std::span<const double> old_log_probs,
                              std::span<const double> advantages, std::span<const double> returns,
                              const PPOConfig& cfg, bool normalize = true);

// Per-minibatch advantage normalization.
std::vector<double> normalize_advantages(std::span<const double> adv);

double explained_variance(std::span<const double> predicted, std::span<const double> targets);

// Categorical helpers over 17 logits.
double log_prob(std::span<const float> logits, int action);
double entropy(std::span<const float> logits);
int sample_action(std::span<const float> logits, Rng& rng);

// n_epochs passes of shuffled minibatches over a finished buffer.
UpdateStats ppo_update(agents::Policy<float>& policy, nn::Adam<float>& optimizer, const RolloutBuffer& buffer,
                       const PPOConfig& cfg, Rng& rng);

struct ReportEntry {
  int iteration = 0;
  std::int64_t steps = 0;
  UpdateStats update;
  double steps_per_second = 0;
  std::int64_t episodes = 0;
  double mean_episode_reward = 0;
  std::optional<double> eval_score;
};

nlohmann::json to_json(const ReportEntry& e);

struct TrainReport {
  std::vector<ReportEntry> entries;
};

struct EvalResult {
  double score = 0;
  ScoreInput rates{};
  AchievementLedger ledger;
  std::int64_t episodes = 0;
  double mean_length = 0;
  double mean_reward = 0;
};

// Chooses actions for a batch of lanes; `fresh[i]` marks a lane whose
// episode just started.
using ActFn = std::function<std::vector<Action>(std::span<const Observation> obs, std::span<const std::uint8_t> fresh)>;

// Runs n_episodes episodes with deterministic seeds derived from `seed`, on
// up to `lanes` environments at a time.
EvalResult run_episodes(const EnvSpec& spec, int n_episodes, std::uint64_t seed, int lanes, const ActFn& act,
                        std::shared_ptr<StatsLog> stats = nullptr, std::shared_ptr<const Rules> rules = default_rules());

// Actor sampling from the policy with its own recurrent state per lane.
ActFn policy_actor(const agents::Policy<float>& policy, std::uint64_t seed, bool greedy = false);
ActFn random_actor(std::uint64_t seed);

EvalResult evaluate(const agents::Policy<float>& policy, const EnvSpec& spec, int n_episodes, std::uint64_t seed,
                    std::shared_ptr<StatsLog> stats = nullptr, bool greedy = false);
// Loads a checkpoint for `config` (refusing a digest mismatch) and evaluates.
EvalResult evaluate(const std::filesystem::path& checkpoint, const agents::AgentConfig& config, const EnvSpec& spec,
                    int n_episodes, std::uint64_t seed, std::shared_ptr<StatsLog> stats = nullptr);

struct TrainSetup {
  EnvSpec train_spec;
  std::optional<EnvSpec> eval_spec;
  agents::AgentConfig agent;
  PPOConfig ppo;
  std::uint64_t run_seed = 0;
  std::shared_ptr<const Rules> rules = default_rules();
  std::shared_ptr<StatsLog> stats;
  // Receives each report entry as it is produced.
  std::function<void(const ReportEntry&)> on_entry;
  // Checkpoint path; written at checkpoint_interval and at the end.
  std::optional<std::filesystem::path> checkpoint;
};

// Raised when a loss or gradient stops being finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  agents::Policy<float> policy;
  TrainReport report;
};

TrainResult train(const TrainSetup& setup);

}  // namespace crafter::ppo
