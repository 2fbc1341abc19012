#include "crafter/env.hpp"

#include <cstring>
#include <exception>
#include <iomanip>
#include <latch>
#include <sstream>

#include <boost/asio/post.hpp>
#include <boost/asio/thread_pool.hpp>
#include <nlohmann/json.hpp>

namespace crafter {

using nlohmann::json;

namespace {

std::uint64_t digest_step(std::uint64_t h, const Observation& obs, double reward, bool done) {
  h = fnv1a(std::span<const std::uint8_t>(obs.pixels), h);
  std::uint64_t bits = 0;
  std::memcpy(&bits, &reward, sizeof bits);
  return hash_combine(hash_combine(h, bits), done ? 1 : 0);
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t parse_hex(const std::string& s) {
  std::size_t used = 0;
  const std::uint64_t v = std::stoull(s, &used, 16);
  if (used != s.size()) throw ConfigError("bad hex digest '" + s + "'");
  return v;
}

}  // namespace

StatsLog::StatsLog(const std::filesystem::path& path, bool truncate)
    : path_(path), out_(path, truncate ? std::ios::trunc : std::ios::app) {
  if (!out_) throw ConfigError("cannot open stats log '" + path.string() + "'");
}

void StatsLog::append(const StatsLine& line) {
  const std::string text = to_json(line).dump() + "\n";
  std::lock_guard lock(mu_);
  out_ << text;
  out_.flush();
  ++lines_;
}

std::int64_t StatsLog::lines() const {
  std::lock_guard lock(mu_);
  return lines_;
}

std::uint64_t episode_seed(const SeedPolicy& policy, std::uint64_t run_seed, std::uint64_t lane,
                           std::uint64_t episode) {
  if (policy.mode == SeedPolicy::Mode::fixed) return policy.base_seed;
  return split_seed(split_seed(run_seed, lane), episode);
}

Env::Env(EnvSpec spec, std::uint64_t run_seed, std::uint64_t lane, EnvOptions options)
    : spec_(std::move(spec)), run_seed_(run_seed), lane_(lane), options_(std::move(options)) {
  spec_.validate();
  ctx_ = SimContext::from_spec(spec_, options_.rules, options_.sim);
}

Observation Env::reset() {
  const std::uint64_t seed = episode_seed(spec_.seed_policy, run_seed_, lane_, episode_index_);
  return reset_with_seed(seed);
}

Observation Env::reset_with_seed(std::uint64_t seed) {
  state_ = new_world(ctx_, seed);
  seed_ = seed;
  ++episode_index_;
  ledger_.begin_episode();
  actions_.clear();
  started_ = true;
  done_ = false;
  Observation obs = observe();
  stream_digest_ = digest_step(0xcbf29ce484222325ULL, obs, 0.0, false);
  return obs;
}

Observation Env::observe() const {
  if (!state_) throw ContractViolation("observe: no episode; call reset first");
  return render(*state_, spec_);
}

StepResult Env::step(Action action) {
  if (!started_) throw ContractViolation("step: no episode; call reset first");
  if (done_) throw ContractViolation("step: episode is done; call reset first");
  StepResult res;
  const AchievementSet before = ledger_.unlocked();
  res.info.events = crafter::step(*state_, action);
  res.reward = ledger_.reward(res.info.events);
  res.info.unlocked = ledger_.unlocked() & ~before;
  res.info.episode_step = state_->step_count;
  res.info.episode_seed = seed_;
  actions_.push_back(action);
  res.obs = render(*state_, spec_);
  done_ = is_terminal(*state_);
  res.done = done_;
  if (done_) {
    res.info.episode = ledger_.end_episode(state_->step_count);
    if (options_.stats) options_.stats->append(*res.info.episode);
  }
  stream_digest_ = digest_step(stream_digest_, res.obs, res.reward, res.done);
  return res;
}

WorkerPool::WorkerPool(unsigned threads)
    : threads_(std::max(1u, threads)), pool_(std::make_unique<boost::asio::thread_pool>(threads_)) {}

WorkerPool::~WorkerPool() {
  pool_->join();
}

void WorkerPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::latch done(static_cast<std::ptrdiff_t>(n));
  std::mutex mu;
  std::exception_ptr first;
  for (std::size_t i = 0; i < n; ++i) {
    boost::asio::post(*pool_, [&, i] {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
      done.count_down();
    });
  }
  done.wait();
  if (first) std::rethrow_exception(first);
}

std::vector<StepResult> step_batch(std::span<Env> lanes, std::span<const Action> actions,
                                   WorkerPool* pool) {
  if (lanes.size() != actions.size()) {
    throw ContractViolation("step_batch: " + std::to_string(lanes.size()) + " lanes but " +
                            std::to_string(actions.size()) + " actions");
  }
  std::vector<StepResult> out(lanes.size());
  auto one = [&](std::size_t i) {
    Env& env = lanes[i];
    out[i] = env.step(actions[i]);
    if (out[i].done && env.options().auto_reset) {
      out[i].obs = env.reset();
      out[i].info.reset = true;
    }
  };
  if (pool && lanes.size() > 1) {
    pool->parallel_for(lanes.size(), one);
  } else {
    for (std::size_t i = 0; i < lanes.size(); ++i) one(i);
  }
  return out;
}

EpisodeRecord record_episode(const Env& env) {
  if (env.episodes_started() == 0) throw ContractViolation("record_episode: no episode");
  EpisodeRecord rec;
  rec.seed = env.current_seed();
  rec.spec = env.spec();
  rec.spec_digest = env.spec().digest();
  rec.sim = env.options().sim;
  rec.actions = env.actions();
  rec.final_stats = env.ledger().current(0);
  rec.final_stats.length = env.state().step_count;
  rec.stream_digest = env.stream_digest();
  rec.final_state_digest = state_digest(env.state());
  return rec;
}

json to_json(const EpisodeRecord& rec) {
  json j;
  j["version"] = EpisodeRecord::kVersion;
  j["seed"] = rec.seed;
  j["spec"] = to_json(rec.spec);
  j["spec_digest"] = hex(rec.spec_digest);
  j["sim"] = {{"survival", rec.sim.survival}, {"creatures", rec.sim.creatures}, {"immortal", rec.sim.immortal}};
  json acts = json::array();
  for (Action a : rec.actions) acts.push_back(std::string(name(a)));
  j["actions"] = std::move(acts);
  j["final_stats"] = to_json(rec.final_stats);
  j["stream_digest"] = hex(rec.stream_digest);
  j["final_state_digest"] = hex(rec.final_state_digest);
  return j;
}

EpisodeRecord episode_record_from_json(const json& j) {
  EpisodeRecord rec;
  try {
    const int version = j.at("version").get<int>();
    if (version != EpisodeRecord::kVersion) {
      throw ConfigError("episode record: unsupported version " + std::to_string(version));
    }
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.spec = env_spec_from_json(j.at("spec"));
    rec.spec_digest = parse_hex(j.at("spec_digest").get<std::string>());
    const auto& sim = j.at("sim");
    rec.sim.survival = sim.at("survival").get<bool>();
    rec.sim.creatures = sim.at("creatures").get<bool>();
    rec.sim.immortal = sim.at("immortal").get<bool>();
    for (const auto& a : j.at("actions")) {
      const auto s = a.get<std::string>();
      auto act = parse_action(s);
      if (!act) throw ConfigError("episode record: unknown action '" + s + "'");
      rec.actions.push_back(*act);
    }
    rec.final_stats = stats_line_from_json(j.at("final_stats"));
    rec.stream_digest = parse_hex(j.at("stream_digest").get<std::string>());
    rec.final_state_digest = parse_hex(j.at("final_state_digest").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("episode record: ") + e.what());
  }
  return rec;
}

void save_record(const std::filesystem::path& path, const EpisodeRecord& rec) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write episode record '" + path.string() + "'");
  out << to_json(rec).dump() << "\n";
}

EpisodeRecord load_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open episode record '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("episode record '" + path.string() + "': " + e.what());
  }
  return episode_record_from_json(j);
}

ReplayResult replay(const EpisodeRecord& rec, std::shared_ptr<const Rules> rules) {
  ReplayResult res;
  if (rec.spec.digest() != rec.spec_digest) {
    res.message = "spec digest mismatch";
    return res;
  }
  EnvOptions opts;
  opts.rules = std::move(rules);
  opts.sim = rec.sim;
  opts.auto_reset = false;
  Env env(rec.spec, 0, 0, opts);
  env.reset_with_seed(rec.seed);
  for (std::size_t i = 0; i < rec.actions.size(); ++i) {
    if (env.done()) {
      res.message = "episode ended after " + std::to_string(i) + " of " +
                    std::to_string(rec.actions.size()) + " actions";
      return res;
    }
    env.step(rec.actions[i]);
  }
  res.stream_digest = env.stream_digest();
  if (res.stream_digest != rec.stream_digest) {
    res.message = "observation/reward stream differs";
  } else if (state_digest(env.state()) != rec.final_state_digest) {
    res.message = "final state differs";
  } else {
    StatsLine stats = env.ledger().current(0);
    stats.length = env.state().step_count;
    if (!(stats == rec.final_stats)) {
      res.message = "final achievement ledger differs";
    } else {
      res.ok = true;
      res.message = "OK, byte-exact";
    }
  }
  return res;
}

}  // namespace crafter
