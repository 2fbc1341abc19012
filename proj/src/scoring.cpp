#include "crafter/scoring.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace crafter {

using nlohmann::json;

json to_json(const StatsLine& line) {
  json j;
  j["length"] = line.length;
  j["reward"] = line.reward;
  for (std::size_t a = 0; a < kNumAchievements; ++a) {
    j["achievement_" + std::string(kAchievementNames[a])] = line.achievements[a];
  }
  return j;
}

StatsLine stats_line_from_json(const json& j) {
  StatsLine line;
  try {
    line.length = j.at("length").get<std::int64_t>();
    line.reward = j.at("reward").get<double>();
    for (std::size_t a = 0; a < kNumAchievements; ++a) {
      line.achievements[a] =
          j.at("achievement_" + std::string(kAchievementNames[a])).get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("stats line: ") + e.what());
  }
  return line;
}

double step_reward(const StepEvents& events, const AchievementSet& unlocked_before) {
  const auto fresh = events.achieved & ~unlocked_before;
  return static_cast<double>(fresh.count()) + 0.1 * events.health_delta;
}

void AchievementLedger::begin_episode() {
  unlocked_.reset();
  triggers_.fill(0);
  episode_reward_ = 0.0;
}

double AchievementLedger::reward(const StepEvents& events) {
  const double r = step_reward(events, unlocked_);
  unlocked_ |= events.achieved;
  for (std::size_t a = 0; a < kNumAchievements; ++a) triggers_[a] += events.achieved[a];
  episode_reward_ += r;
  return r;
}

StatsLine AchievementLedger::end_episode(std::int64_t length) {
  const StatsLine line = current(length);
  add(line);
  begin_episode();
  return line;
}

StatsLine AchievementLedger::current(std::int64_t length) const {
  StatsLine line;
  line.length = length;
  line.reward = episode_reward_;
  line.achievements = triggers_;
  return line;
}

void AchievementLedger::add(const StatsLine& line) {
  for (std::size_t a = 0; a < kNumAchievements; ++a) {
    if (line.achievements[a] > 0) ++episodes_unlocking_[a];
  }
  ++episodes_;
}

void AchievementLedger::merge(const AchievementLedger& other) {
  for (std::size_t a = 0; a < kNumAchievements; ++a) {
    episodes_unlocking_[a] += other.episodes_unlocking_[a];
  }
  episodes_ += other.episodes_;
}

double crafter_score(std::span<const double> s) {
  if (s.empty()) throw DomainError("crafter_score: no success rates");
  double acc = 0.0;
  bool uniform = true;
  for (double v : s) {
    if (!(v >= 0.0 && v <= 100.0)) {
      throw DomainError("crafter_score: success rate " + std::to_string(v) + " outside [0, 100]");
    }
    acc += std::log1p(v);
    uniform = uniform && v == s.front();
  }
  // The mean of identical terms is the term itself; skip the round trip
  // through log/exp so that equal rates score exactly their value.
  if (uniform) return s.front();
  return std::exp(acc / static_cast<double>(s.size())) - 1.0;
}

ScoreInput success_rates(const AchievementLedger& ledger) {
  if (ledger.episodes() < 1) throw DomainError("success_rates: no finished episodes");
  ScoreInput out{};
  for (std::size_t a = 0; a < kNumAchievements; ++a) {
    out[a] = 100.0 * static_cast<double>(ledger.episodes_unlocking(static_cast<Achievement>(a))) /
             static_cast<double>(ledger.episodes());
  }
  return out;
}

MeanStd aggregate(std::span<const double> values) {
  if (values.empty()) throw DomainError("aggregate: no values");
  MeanStd r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(var / static_cast<double>(values.size()));
  return r;
}

std::vector<StatsLine> read_stats_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open stats log '" + path + "'");
  std::vector<StatsLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(stats_line_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace crafter
