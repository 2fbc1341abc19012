#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crafter/sim.hpp"

namespace crafter {

using ScoreInput = std::array<double, kNumAchievements>;

// One finished episode in the benchmark's stats-log shape.
struct StatsLine {
  std::int64_t length = 0;
  double reward = 0.0;
  // Number of times each achievement triggered during the episode.
  std::array<std::int64_t, kNumAchievements> achievements{};

  friend bool operator==(const StatsLine&, const StatsLine&) = default;
};

nlohmann::json to_json(const StatsLine& line);
StatsLine stats_line_from_json(const nlohmann::json& j);

class AchievementLedger {
 public:
  // Clears per-episode state.
  void begin_episode();
  // Reward for one step's events; records triggers and first unlocks.
  double reward(const StepEvents& events);
  // Folds the current episode into the run totals and returns its line.
  StatsLine end_episode(std::int64_t length);
  // Stats of the episode in progress.
  StatsLine current(std::int64_t length) const;
  // Adds a finished episode from a stats log.
  void add(const StatsLine& line);
  // Associative combination of two run ledgers (episode state excluded).
  void merge(const AchievementLedger& other);

  const AchievementSet& unlocked() const { return unlocked_; }
  std::int64_t episodes() const { return episodes_; }
  std::int64_t episodes_unlocking(Achievement a) const {
    return episodes_unlocking_[static_cast<std::size_t>(a)];
  }
  double episode_reward() const { return episode_reward_; }

  friend bool operator==(const AchievementLedger&, const AchievementLedger&) = default;

 private:
  AchievementSet unlocked_;
  std::array<std::int64_t, kNumAchievements> triggers_{};
  double episode_reward_ = 0.0;
  std::array<std::int64_t, kNumAchievements> episodes_unlocking_{};
  std::int64_t episodes_ = 0;
};

// Reward for a step given the achievements already unlocked this episode.
double step_reward(const StepEvents& events, const AchievementSet& unlocked_before);

// exp(mean(ln(1 + s_i))) - 1 over success percentages in [0, 100].
double crafter_score(std::span<const double> success_rates);

// Percentage of episodes unlocking each achievement.
ScoreInput success_rates(const AchievementLedger& ledger);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Cross-run aggregation: arithmetic mean and population standard deviation.
MeanStd aggregate(std::span<const double> values);

// Reads a line-delimited stats log.
std::vector<StatsLine> read_stats_log(const std::string& path);

}  // namespace crafter
