#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crafter/observe.hpp"
#include "crafter/scoring.hpp"
#include "crafter/sim.hpp"

namespace boost::asio {
class thread_pool;
}

namespace crafter {

// Append-only line-delimited stats sink, safe to share between lanes.
class StatsLog {
 public:
  explicit StatsLog(const std::filesystem::path& path, bool truncate = false);
  void append(const StatsLine& line);
  std::int64_t lines() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::int64_t lines_ = 0;
};

struct EnvOptions {
  std::shared_ptr<const Rules> rules = default_rules();
  SimOptions sim;
  // In batch mode a finished lane starts its next episode immediately.
  bool auto_reset = true;
  std::shared_ptr<StatsLog> stats;
};

struct StepInfo {
  // Achievements unlocked for the first time this episode by this step.
  AchievementSet unlocked;
  StepEvents events;
  std::int64_t episode_step = 0;
  std::uint64_t episode_seed = 0;
  // Set on the terminal step.
  std::optional<StatsLine> episode;
  // Batch mode: the observation is the first frame of a new episode.
  bool reset = false;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// Episode seed for `episode` of `lane` under a run seed.
std::uint64_t episode_seed(const SeedPolicy& policy, std::uint64_t run_seed, std::uint64_t lane,
                           std::uint64_t episode);

class Env {
 public:
  Env(EnvSpec spec, std::uint64_t run_seed = 0, std::uint64_t lane = 0, EnvOptions options = {});

  // Next episode from the seed schedule.
  Observation reset();
  // Episode with an explicit world seed.
  Observation reset_with_seed(std::uint64_t seed);
  StepResult step(Action action);

  bool active() const { return started_ && !done_; }
  bool done() const { return done_; }
  const EnvSpec& spec() const { return spec_; }
  const WorldState& state() const { return *state_; }
  const AchievementLedger& ledger() const { return ledger_; }
  std::uint64_t current_seed() const { return seed_; }
  std::uint64_t episodes_started() const { return episode_index_; }
  const std::vector<Action>& actions() const { return actions_; }
  std::uint64_t stream_digest() const { return stream_digest_; }
  const EnvOptions& options() const { return options_; }
  Observation observe() const;

 private:
  EnvSpec spec_;
  std::uint64_t run_seed_;
  std::uint64_t lane_;
  EnvOptions options_;
  std::shared_ptr<const SimContext> ctx_;
  std::optional<WorldState> state_;
  AchievementLedger ledger_;
  std::uint64_t seed_ = 0;
  std::uint64_t episode_index_ = 0;
  std::vector<Action> actions_;
  std::uint64_t stream_digest_ = 0;
  bool started_ = false;
  bool done_ = false;
};

// Fixed-size worker pool used to step lanes in parallel.
class WorkerPool {
 public:
  explicit WorkerPool(unsigned threads);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  // Runs fn(i) for i in [0, n) and waits for completion. Exceptions from
  // tasks are rethrown (the first one wins).
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);
  unsigned size() const { return threads_; }

 private:
  unsigned threads_;
  std::unique_ptr<boost::asio::thread_pool> pool_;
};

// Steps each lane with its action. Lanes run on the pool when given, else
// sequentially; results are identical either way. With auto_reset, a lane
// that finishes returns the terminal reward and info with the first frame
// of its next episode.
std::vector<StepResult> step_batch(std::span<Env> lanes, std::span<const Action> actions,
                                   WorkerPool* pool = nullptr);

struct EpisodeRecord {
  static constexpr int kVersion = 1;
  std::uint64_t seed = 0;
  EnvSpec spec;
  std::uint64_t spec_digest = 0;
  SimOptions sim;
  std::vector<Action> actions;
  StatsLine final_stats;
  std::uint64_t stream_digest = 0;
  std::uint64_t final_state_digest = 0;
};

// Snapshot of the env's current episode.
EpisodeRecord record_episode(const Env& env);

nlohmann::json to_json(const EpisodeRecord& rec);
EpisodeRecord episode_record_from_json(const nlohmann::json& j);
void save_record(const std::filesystem::path& path, const EpisodeRecord& rec);
EpisodeRecord load_record(const std::filesystem::path& path);

struct ReplayResult {
  bool ok = false;
  std::string message;
  std::uint64_t stream_digest = 0;
};

// Re-runs a record and compares every digest.
ReplayResult replay(const EpisodeRecord& rec, std::shared_ptr<const Rules> rules = default_rules());

}  // namespace crafter
