#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "crafter/agents.hpp"
#include "crafter/env.hpp"
#include "crafter/ppo.hpp"

namespace crafter::harness {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8765;
  std::filesystem::path static_dir = "web";
  // Episodes of every session are appended here when set.
  std::optional<std::filesystem::path> stats_log;
  std::uint64_t seed = 0;

  friend bool operator==(const ServerConfig&, const ServerConfig&) = default;
};

// One declarative document: {"seed", "env", "agent", "ppo", "server"}.
// "env" may name a preset and override individual fields.
struct Config {
  std::uint64_t seed = 0;
  EnvSpec env;
  agents::AgentConfig agent;
  ppo::PPOConfig ppo;
  ServerConfig server;
};

nlohmann::json to_json(const Config& c);
// Throws ConfigError for malformed documents or unknown keys.
Config config_from_json(const nlohmann::json& j);
Config load_config(const std::filesystem::path& path);
// "section.key=value"; the value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// World census of a freshly generated episode.
struct Census {
  std::uint64_t seed = 0;
  std::map<Material, int> materials;
  std::array<int, kNumCreatureKinds> creatures{};
};

Census census(const EnvSpec& spec, std::uint64_t seed);
nlohmann::json to_json(const Census& c);

// An env_preset name, a scenario name (its training side) or
// "scenario:train" / "scenario:eval".
EnvSpec resolve_preset(std::string_view name);

struct LogScore {
  std::int64_t episodes = 0;
  ScoreInput rates{};
  double score = 0;
};

// Crafter score of a stats log; throws ConfigError on an empty log.
LogScore score_log(const std::filesystem::path& path);

namespace protocol {

inline constexpr int kVersion = 1;

enum class Kind : std::uint8_t { hello, frame, act, stats, done, error };
inline constexpr std::array<std::string_view, 6> kKindNames = {"hello", "frame", "act", "stats", "done", "error"};

std::string_view name(Kind k);
std::optional<Kind> parse_kind(std::string_view s);

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws ProtocolError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

// A message sent by a client: hello, act or stats.
struct ClientMessage {
  Kind kind = Kind::hello;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<Action> action;
};

// Throws ProtocolError for malformed text, unknown kinds, server-only kinds
// and unknown action names.
ClientMessage parse_client_message(std::string_view text);

// Decoded frame, for clients and tests.
struct Frame {
  std::int64_t index = 0;
  std::int64_t step = 0;
  Observation obs;
  std::map<std::string, int> inventory;
  std::vector<std::string> achievements;
  std::vector<std::string> unlocked_now;
  double reward = 0;
  double score = 0;
  bool done = false;
  bool reset = false;
};

Frame parse_frame(const nlohmann::json& j);

}  // namespace protocol

enum class PlayMode : std::uint8_t { human, spectate };

// Protocol state machine of one connection, independent of the transport.
// Every applied action produces exactly one frame; every episode start
// produces one reset frame.
class PlaySession {
 public:
  struct Options {
    std::string default_preset = "default";
    std::uint64_t seed = 0;
    std::shared_ptr<StatsLog> stats;
    // Drives spectate mode.
    std::shared_ptr<const agents::Policy<float>> policy;
  };

  PlaySession(std::string id, Options options);

  // Replies to one client message, in order. Malformed input yields a single
  // error reply and leaves the session unchanged.
  std::vector<std::string> handle(std::string_view text);

  void disconnect() { connected_ = false; }
  bool connected() const { return connected_; }
  bool started() const { return env_.has_value(); }
  PlayMode mode() const { return mode_; }
  const std::string& id() const { return id_; }
  std::int64_t frames() const { return frames_; }
  std::int64_t acts() const { return acts_; }
  std::int64_t resets() const { return resets_; }
  const AchievementLedger& ledger() const { return totals_; }

 private:
  std::vector<std::string> on_hello(const protocol::ClientMessage& m);
  std::vector<std::string> on_act(const protocol::ClientMessage& m);
  std::string stats_message() const;
  std::string frame_message(const Observation& obs, double reward, bool done, bool reset,
                            const AchievementSet& unlocked_now);
  Observation start_episode();

  std::string id_;
  Options options_;
  bool connected_ = true;
  PlayMode mode_ = PlayMode::human;
  std::string preset_;
  std::optional<Env> env_;
  std::optional<ppo::ActFn> actor_;
  bool fresh_ = true;
  Observation last_obs_;
  AchievementLedger totals_;
  std::int64_t frames_ = 0;
  std::int64_t acts_ = 0;
  std::int64_t resets_ = 0;
};

// HTTP + websocket server: static assets under static_dir, sessions on /ws.
// Each connection runs on its own thread.
class PlayServer {
 public:
  PlayServer(ServerConfig config, std::shared_ptr<const agents::Policy<float>> policy = nullptr,
             std::string default_preset = "default");
  ~PlayServer();
  PlayServer(const PlayServer&) = delete;
  PlayServer& operator=(const PlayServer&) = delete;

  // Binds and starts accepting; port 0 picks a free port.
  void start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();
  int port() const { return port_.load(); }
  std::int64_t sessions_started() const { return sessions_.load(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<int> port_{0};
  std::atomic<std::int64_t> sessions_{0};
};

// Content type for a static asset path.
std::string_view content_type(const std::filesystem::path& path);
// Maps a request target to a file under root; nullopt for escapes.
std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, std::string_view target);

// Two rows (inputs, attention overlay) and one column per step, each cell
// upscaled by `scale`.
struct Montage {
  Image image;
  std::vector<Observation> inputs;
  std::vector<std::vector<double>> heatmaps;
};

Montage attention_montage(const agents::Policy<float>& policy, const EnvSpec& spec, std::uint64_t seed, int steps,
                          int scale = 2);

struct SweepAxis {
  std::string key;
  std::vector<nlohmann::json> values;
};

// Parses "key=v1,v2,...".
SweepAxis parse_sweep_axis(std::string_view text);
// Cartesian product over the axes, first axis slowest; each point is
// validated.
std::vector<ppo::PPOConfig> expand_grid(const ppo::PPOConfig& base, std::span<const SweepAxis> axes,
                                        bool recurrent);

struct SweepPoint {
  ppo::PPOConfig ppo;
  double score = 0;
  ppo::EvalResult eval;
};

// Trains and evaluates every grid point; `on_point` sees each as it ends.
std::vector<SweepPoint> run_sweep(const Config& base, std::span<const SweepAxis> axes, int eval_episodes,
                                  const std::function<void(const SweepPoint&)>& on_point = {});

}  // namespace crafter::harness
