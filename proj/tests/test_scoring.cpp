#include <cstdio>
#include <filesystem>
#include <fstream>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "crafter/rng.hpp"
#include "crafter/scoring.hpp"

using namespace crafter;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

// Independent 50-digit evaluation of exp(mean(log(1 + s))) - 1.
double oracle_score(const std::vector<double>& s) {
  Big acc = 0;
  for (double v : s) acc += boost::multiprecision::log(Big(1) + Big(v));
  return static_cast<double>(boost::multiprecision::exp(acc / Big(s.size())) - Big(1));
}

StepEvents events_with(std::initializer_list<Achievement> as, int health_delta = 0) {
  StepEvents e;
  for (Achievement a : as) e.achieved.set(static_cast<std::size_t>(a));
  e.health_delta = health_delta;
  return e;
}

}  // namespace

TEST(CrafterScore, ExtremesAreExact) {
  std::vector<double> zeros(kNumAchievements, 0.0), full(kNumAchievements, 100.0);
  EXPECT_EQ(crafter_score(zeros), 0.0);
  EXPECT_EQ(crafter_score(full), 100.0);
}

TEST(CrafterScore, SingleAchievementMatchesOracle) {
  std::vector<double> s(kNumAchievements, 0.0);
  s[3] = 100.0;
  EXPECT_NEAR(crafter_score(s), oracle_score(s), 1e-12);
  EXPECT_NEAR(crafter_score(s), 0.23340, 1e-5);
}

TEST(CrafterScore, RandomRatesMatchOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> s(kNumAchievements);
    for (auto& v : s) v = rng.chance(0.3) ? 0.0 : 100.0 * rng.uniform();
    EXPECT_NEAR(crafter_score(s), oracle_score(s), 1e-10) << "trial " << trial;
  }
}

TEST(CrafterScore, MonotoneInEachRate) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(kNumAchievements);
    for (auto& v : s) v = 90.0 * rng.uniform();
    const double before = crafter_score(s);
    s[rng.below(kNumAchievements)] += 5.0;
    EXPECT_GT(crafter_score(s), before);
  }
}

TEST(CrafterScore, RejectsOutOfRange) {
  std::vector<double> s(kNumAchievements, 10.0);
  s[0] = 100.5;
  EXPECT_THROW(crafter_score(s), DomainError);
  s[0] = -1.0;
  EXPECT_THROW(crafter_score(s), DomainError);
  EXPECT_THROW(crafter_score(std::vector<double>{}), DomainError);
}

TEST(StepReward, FirstUnlockOnlyPlusHealth) {
  AchievementSet before;
  EXPECT_DOUBLE_EQ(step_reward(events_with({Achievement::collect_wood}), before), 1.0);
  before.set(static_cast<std::size_t>(Achievement::collect_wood));
  EXPECT_DOUBLE_EQ(step_reward(events_with({Achievement::collect_wood}), before), 0.0);
  EXPECT_NEAR(step_reward(events_with({}, -2), before), -0.2, 1e-12);
  EXPECT_NEAR(step_reward(events_with({Achievement::place_table}, 1), before), 1.1, 1e-12);
}

TEST(Ledger, CountsEpisodesAndTriggers) {
  AchievementLedger l;
  l.begin_episode();
  EXPECT_DOUBLE_EQ(l.reward(events_with({Achievement::collect_wood})), 1.0);
  EXPECT_DOUBLE_EQ(l.reward(events_with({Achievement::collect_wood})), 0.0);
  const StatsLine line = l.end_episode(12);
  EXPECT_EQ(line.length, 12);
  EXPECT_EQ(line.achievements[static_cast<std::size_t>(Achievement::collect_wood)], 2);
  EXPECT_DOUBLE_EQ(line.reward, 1.0);
  l.reward(events_with({}));
  l.end_episode(5);
  EXPECT_EQ(l.episodes(), 2);
  const auto rates = success_rates(l);
  EXPECT_DOUBLE_EQ(rates[static_cast<std::size_t>(Achievement::collect_wood)], 50.0);
  EXPECT_DOUBLE_EQ(rates[static_cast<std::size_t>(Achievement::place_table)], 0.0);
}

TEST(Ledger, MergeIsAssociativeAndMatchesSequentialAdds) {
  Rng rng(3);
  std::vector<StatsLine> lines(30);
  for (auto& l : lines)
    for (auto& a : l.achievements) a = rng.chance(0.4) ? rng.range(1, 4) : 0;
  AchievementLedger all, a, b, c;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    all.add(lines[i]);
    (i < 10 ? a : i < 20 ? b : c).add(lines[i]);
  }
  AchievementLedger left = a, right = b;
  left.merge(b);
  left.merge(c);
  right.merge(c);
  AchievementLedger right_total = a;
  right_total.merge(right);
  EXPECT_EQ(left, all);
  EXPECT_EQ(right_total, all);
}

TEST(Ledger, RatesNeedEpisodes) {
  AchievementLedger l;
  EXPECT_THROW(success_rates(l), DomainError);
}

TEST(Aggregate, MeanAndPopulationStd) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto r = aggregate(v);
  EXPECT_DOUBLE_EQ(r.mean, 2.5);
  EXPECT_DOUBLE_EQ(r.std, std::sqrt(1.25));
  EXPECT_THROW(aggregate(std::vector<double>{}), DomainError);
}

TEST(StatsLog, JsonRoundTripAndReader) {
  StatsLine line;
  line.length = 321;
  line.reward = 2.7;
  line.achievements[5] = 3;
  const auto j = to_json(line);
  EXPECT_TRUE(j.contains("achievement_collect_wood"));
  EXPECT_EQ(stats_line_from_json(j), line);

  const auto path = std::filesystem::temp_directory_path() / "crafter_scoring_log.jsonl";
  {
    std::ofstream out(path);
    out << j.dump() << "\n\n" << to_json(StatsLine{}).dump() << "\n";
  }
  const auto lines = read_stats_log(path.string());
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], line);
  {
    std::ofstream out(path);
    out << "{not json\n";
  }
  EXPECT_THROW(read_stats_log(path.string()), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(stats_line_from_json(nlohmann::json{{"length", 1}}), ConfigError);
}
