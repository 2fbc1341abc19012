#include "crafter/harness.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <boost/beast/core/detail/base64.hpp>

#include "crafter/worldgen.hpp"

namespace crafter::harness {

using json = nlohmann::json;

namespace {

const std::array<std::string_view, 5> kSections = {"seed", "env", "agent", "ppo", "server"};

json server_to_json(const ServerConfig& s) {
  json j{{"host", s.host}, {"port", s.port}, {"static_dir", s.static_dir.string()}, {"seed", s.seed}};
  j["stats_log"] = s.stats_log ? json(s.stats_log->string()) : json(nullptr);
  return j;
}

ServerConfig server_from_json(const json& j) {
  ServerConfig s;
  for (const auto& [key, value] : j.items()) {
    if (key == "host") {
      s.host = value.get<std::string>();
    } else if (key == "port") {
      s.port = value.get<int>();
    } else if (key == "static_dir") {
      s.static_dir = value.get<std::string>();
    } else if (key == "stats_log") {
      if (value.is_null()) s.stats_log.reset();
      else s.stats_log = value.get<std::string>();
    } else if (key == "seed") {
      s.seed = value.get<std::uint64_t>();
    } else {
      throw ConfigError("unknown server key '" + key + "'");
    }
  }
  if (s.port < 0 || s.port > 65535) throw ConfigError("server: port out of range");
  return s;
}

EnvSpec env_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("env section must be an object");
  json doc = j;
  json base = to_json(EnvSpec{});
  if (doc.contains("preset")) {
    base = to_json(resolve_preset(doc.at("preset").get<std::string>()));
    doc.erase("preset");
  }
  base.merge_patch(doc);
  return env_spec_from_json(base);
}

}  // namespace

json to_json(const Config& c) {
  return json{{"seed", c.seed},
              {"env", to_json(c.env)},
              {"agent", agents::to_json(c.agent)},
              {"ppo", ppo::to_json(c.ppo)},
              {"server", server_to_json(c.server)}};
}

Config config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Config c;
  try {
    for (const auto& [key, value] : j.items())
      if (std::find(kSections.begin(), kSections.end(), key) == kSections.end())
        throw ConfigError("unknown config section '" + key + "'");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("env")) c.env = env_from_json(j.at("env"));
    if (j.contains("agent")) c.agent = agents::agent_config_from_json(j.at("agent"));
    if (j.contains("ppo")) c.ppo = ppo::ppo_config_from_json(j.at("ppo"));
    if (j.contains("server")) c.server = server_from_json(j.at("server"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.env.validate();
  c.agent.validate();
  c.ppo.validate(agents::is_recurrent(c.agent.arch));
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' lacks '='");
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  if (dot == std::string_view::npos || dot > eq) {
    doc[path] = value;
    return;
  }
  const std::string section = path.substr(0, dot);
  const std::string key = path.substr(dot + 1);
  if (key.empty()) throw ConfigError("override '" + std::string(assignment) + "' has an empty key");
  doc[section][key] = value;
}

Census census(const EnvSpec& spec, std::uint64_t seed) {
  spec.validate();
  const GeneratedWorld world = generate(GenParams::from_spec(spec, seed));
  Census c;
  c.seed = seed;
  c.materials = count_materials(world.map);
  for (const auto& cr : world.creatures) ++c.creatures[static_cast<std::size_t>(cr.kind)];
  return c;
}

json to_json(const Census& c) {
  json materials = json::object();
  for (std::size_t m = 0; m < kNumMaterials; ++m) {
    const auto it = c.materials.find(static_cast<Material>(m));
    materials[std::string(kMaterialNames[m])] = it == c.materials.end() ? 0 : it->second;
  }
  json creatures = json::object();
  for (std::size_t k = 0; k < kNumCreatureKinds; ++k) creatures[std::string(kCreatureNames[k])] = c.creatures[k];
  return json{{"seed", c.seed}, {"materials", materials}, {"creatures", creatures}};
}

EnvSpec resolve_preset(std::string_view name) {
  const auto colon = name.rfind(':');
  if (colon != std::string_view::npos) {
    const std::string_view side = name.substr(colon + 1);
    if (side != "train" && side != "eval") throw ConfigError("unknown scenario side '" + std::string(side) + "'");
    const ScenarioPair& p = find_scenario(name.substr(0, colon));
    return side == "train" ? p.train : p.eval;
  }
  for (const auto& p : builtin_presets())
    if (p.name == name) return p.train;
  return env_preset(name);
}

LogScore score_log(const std::filesystem::path& path) {
  const auto lines = read_stats_log(path.string());
  if (lines.empty()) throw ConfigError("stats log '" + path.string() + "' has no episodes");
  AchievementLedger ledger;
  for (const auto& l : lines) ledger.add(l);
  LogScore s;
  s.episodes = ledger.episodes();
  s.rates = success_rates(ledger);
  s.score = crafter_score(s.rates);
  return s;
}

namespace protocol {

std::string_view name(Kind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<Kind> parse_kind(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return static_cast<Kind>(i);
  return std::nullopt;
}

namespace b64 = boost::beast::detail::base64;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ProtocolError("base64 length is not a multiple of 4");
  std::size_t body = text.size();
  for (int pad = 0; pad < 2 && body > 0 && text[body - 1] == '='; ++pad) --body;
  std::vector<std::uint8_t> out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), body);
  if (read != body) throw ProtocolError("invalid base64 character");
  out.resize(written);
  return out;
}

ClientMessage parse_client_message(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    throw ProtocolError("message is not valid JSON");
  }
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw ProtocolError("message needs a string 'kind'");
  const std::string kind_name = j["kind"].get<std::string>();
  const auto kind = parse_kind(kind_name);
  if (!kind) throw ProtocolError("unknown message kind '" + kind_name + "'");
  if (*kind != Kind::hello && *kind != Kind::act && *kind != Kind::stats)
    throw ProtocolError("clients may not send '" + kind_name + "'");
  ClientMessage m;
  m.kind = *kind;
  try {
    if (m.kind == Kind::hello) {
      if (j.contains("version") && j["version"].get<int>() != kVersion)
        throw ProtocolError("unsupported protocol version " + j["version"].dump());
      if (j.contains("preset")) m.preset = j["preset"].get<std::string>();
      if (j.contains("seed")) m.seed = j["seed"].get<std::uint64_t>();
      if (j.contains("mode")) m.mode = j["mode"].get<std::string>();
    } else if (m.kind == Kind::act && j.contains("action")) {
      const std::string a = j["action"].get<std::string>();
      m.action = parse_action(a);
      if (!m.action) throw ProtocolError("unknown action '" + a + "'");
    }
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed field: ") + e.what());
  }
  return m;
}

Frame parse_frame(const json& j) {
  if (j.value("kind", "") != "frame") throw ProtocolError("not a frame");
  Frame f;
  f.index = j.at("index").get<std::int64_t>();
  f.step = j.at("step").get<std::int64_t>();
  const auto bytes = base64_decode(j.at("pixels").get<std::string>());
  if (bytes.size() != kObsBytes) throw ProtocolError("frame has " + std::to_string(bytes.size()) + " pixel bytes");
  std::copy(bytes.begin(), bytes.end(), f.obs.pixels.begin());
  f.inventory = j.at("inventory").get<std::map<std::string, int>>();
  f.achievements = j.at("achievements").get<std::vector<std::string>>();
  f.unlocked_now = j.at("unlocked_now").get<std::vector<std::string>>();
  f.reward = j.at("reward").get<double>();
  f.score = j.at("score").get<double>();
  f.done = j.at("done").get<bool>();
  f.reset = j.at("reset").get<bool>();
  return f;
}

}  // namespace protocol

namespace {

std::string error_message(const std::string& what) {
  return json{{"kind", "error"}, {"message", what}}.dump();
}

json names_of(const AchievementSet& set) {
  json out = json::array();
  for (std::size_t a = 0; a < kNumAchievements; ++a)
    if (set.test(a)) out.push_back(kAchievementNames[a]);
  return out;
}

}  // namespace

PlaySession::PlaySession(std::string id, Options options) : id_(std::move(id)), options_(std::move(options)) {}

std::vector<std::string> PlaySession::handle(std::string_view text) {
  connected_ = true;
  try {
    const auto m = protocol::parse_client_message(text);
    switch (m.kind) {
      case protocol::Kind::hello: return on_hello(m);
      case protocol::Kind::act: return on_act(m);
      case protocol::Kind::stats: return {stats_message()};
      default: break;
    }
    return {error_message("unexpected message")};
  } catch (const protocol::ProtocolError& e) {
    return {error_message(e.what())};
  } catch (const ConfigError& e) {
    return {error_message(e.what())};
  }
}

Observation PlaySession::start_episode() {
  last_obs_ = env_->reset();
  fresh_ = true;
  ++resets_;
  return last_obs_;
}

std::vector<std::string> PlaySession::on_hello(const protocol::ClientMessage& m) {
  PlayMode mode = PlayMode::human;
  if (m.mode) {
    if (*m.mode == "spectate") mode = PlayMode::spectate;
    else if (*m.mode != "human") throw protocol::ProtocolError("unknown mode '" + *m.mode + "'");
  }
  if (mode == PlayMode::spectate && !options_.policy)
    throw protocol::ProtocolError("spectate mode needs a server started with a policy");
  const std::string preset = m.preset.value_or(options_.default_preset);
  EnvSpec spec = resolve_preset(preset);
  EnvOptions eo;
  eo.auto_reset = false;
  eo.stats = options_.stats;
  // A fresh hello replaces any running episode.
  env_.emplace(spec, m.seed.value_or(options_.seed), 0, eo);
  mode_ = mode;
  preset_ = preset;
  actor_.reset();
  if (mode_ == PlayMode::spectate)
    actor_ = ppo::policy_actor(*options_.policy, stream_seed(m.seed.value_or(options_.seed), "spectate"));
  json hello{{"kind", "hello"},   {"version", protocol::kVersion}, {"session", id_},
             {"preset", preset_}, {"spec", to_json(spec)},         {"mode", mode_ == PlayMode::human ? "human" : "spectate"}};
  hello["actions"] = json(std::vector<std::string>(kActionNames.begin(), kActionNames.end()));
  hello["achievements"] = json(std::vector<std::string>(kAchievementNames.begin(), kAchievementNames.end()));
  std::vector<std::string> out{hello.dump()};
  const Observation obs = start_episode();
  out.push_back(frame_message(obs, 0.0, false, true, {}));
  return out;
}

std::vector<std::string> PlaySession::on_act(const protocol::ClientMessage& m) {
  if (!env_) throw protocol::ProtocolError("send hello before act");
  Action action = Action::noop;
  if (mode_ == PlayMode::spectate) {
    const std::uint8_t fresh = fresh_ ? 1 : 0;
    action = (*actor_)(std::span<const Observation>(&last_obs_, 1), std::span<const std::uint8_t>(&fresh, 1))[0];
  } else {
    if (!m.action) throw protocol::ProtocolError("act needs an 'action'");
    action = *m.action;
  }
  fresh_ = false;
  const StepResult r = env_->step(action);
  ++acts_;
  last_obs_ = r.obs;
  std::vector<std::string> out;
  if (r.done) totals_.add(*r.info.episode);
  out.push_back(frame_message(r.obs, r.reward, r.done, false, r.info.unlocked));
  if (r.done) {
    out.push_back(json{{"kind", "done"}, {"stats", to_json(*r.info.episode)}}.dump());
    out.push_back(frame_message(start_episode(), 0.0, false, true, {}));
  }
  return out;
}

std::string PlaySession::stats_message() const {
  json rates = json::object();
  const ScoreInput r = totals_.episodes() > 0 ? success_rates(totals_) : ScoreInput{};
  for (std::size_t a = 0; a < kNumAchievements; ++a) rates[std::string(kAchievementNames[a])] = r[a];
  return json{{"kind", "stats"},
              {"episodes", totals_.episodes()},
              {"score", totals_.episodes() > 0 ? crafter_score(r) : 0.0},
              {"rates", rates},
              {"frames", frames_},
              {"acts", acts_},
              {"resets", resets_}}
      .dump();
}

std::string PlaySession::frame_message(const Observation& obs, double reward, bool done, bool reset,
                                       const AchievementSet& unlocked_now) {
  const WorldState& st = env_->state();
  json inventory = json::object();
  for (std::size_t i = 0; i < kNumResources; ++i)
    inventory[std::string(kResourceNames[i])] = st.player.inventory[i];
  // Score so far: finished episodes plus the one in progress.
  AchievementLedger view = totals_;
  if (!done) view.add(env_->ledger().current(st.step_count));
  json j{{"kind", "frame"},
         {"index", frames_},
         {"step", st.step_count},
         {"width", kObsSize},
         {"height", kObsSize},
         {"pixels", protocol::base64_encode(obs.pixels)},
         {"inventory", inventory},
         {"achievements", names_of(env_->ledger().unlocked())},
         {"unlocked_now", names_of(unlocked_now)},
         {"reward", reward},
         {"score", crafter_score(success_rates(view))},
         {"daylight", st.light},
         {"sleeping", st.player.sleeping},
         {"done", done},
         {"reset", reset}};
  ++frames_;
  return j.dump();
}

Montage attention_montage(const agents::Policy<float>& policy, const EnvSpec& spec, std::uint64_t seed, int steps,
                          int scale) {
  if (!agents::is_object_centric(policy.config().arch))
    throw agents::UnsupportedError(std::string(agents::name(policy.config().arch)) + " has no attention maps");
  if (steps < 1 || scale < 1) throw DomainError("montage needs at least one step and scale >= 1");
  EnvOptions eo;
  eo.auto_reset = false;
  Env env(spec, seed, 0, eo);
  Observation obs = env.reset();
  auto act = ppo::policy_actor(policy, stream_seed(seed, "viz_actions"));
  Montage m;
  const int cell = kObsSize * scale;
  m.image = Image(cell * steps, cell * 2);
  for (int t = 0; t < steps; ++t) {
    const auto out = policy.forward_one(obs);
    auto heat = agents::attention_heatmap(out.attention.at(0));
    const Image top = upscale(obs.image(), scale);
    const Image bottom = upscale(agents::attention_overlay(obs, heat), scale);
    for (int y = 0; y < cell; ++y)
      for (int x = 0; x < cell; ++x) {
        m.image.put(t * cell + x, y, top.at(x, y));
        m.image.put(t * cell + x, cell + y, bottom.at(x, y));
      }
    m.inputs.push_back(obs);
    m.heatmaps.push_back(std::move(heat));
    if (t + 1 == steps) break;
    const std::uint8_t fresh = t == 0 ? 1 : 0;
    const Action a = act(std::span<const Observation>(&obs, 1), std::span<const std::uint8_t>(&fresh, 1))[0];
    const StepResult r = env.step(a);
    obs = r.done ? env.reset() : r.obs;
  }
  return m;
}

SweepAxis parse_sweep_axis(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0 || eq + 1 == text.size())
    throw ConfigError("sweep axis '" + std::string(text) + "' must look like key=v1,v2");
  SweepAxis axis;
  axis.key = std::string(text.substr(0, eq));
  std::stringstream ss{std::string(text.substr(eq + 1))};
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      axis.values.push_back(json::parse(item));
    } catch (const json::parse_error&) {
      axis.values.emplace_back(item);
    }
  }
  return axis;
}

std::vector<ppo::PPOConfig> expand_grid(const ppo::PPOConfig& base, std::span<const SweepAxis> axes,
                                        bool recurrent) {
  std::vector<json> points{ppo::to_json(base)};
  for (const auto& axis : axes) {
    if (!points.front().contains(axis.key)) throw ConfigError("unknown sweep key '" + axis.key + "'");
    if (axis.values.empty()) throw ConfigError("sweep axis '" + axis.key + "' has no values");
    std::vector<json> next;
    for (const auto& p : points)
      for (const auto& v : axis.values) {
        json q = p;
        q[axis.key] = v;
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  std::vector<ppo::PPOConfig> out;
  for (const auto& p : points) {
    out.push_back(ppo::ppo_config_from_json(p));
    out.back().validate(recurrent);
  }
  return out;
}

std::vector<SweepPoint> run_sweep(const Config& base, std::span<const SweepAxis> axes, int eval_episodes,
                                  const std::function<void(const SweepPoint&)>& on_point) {
  const auto grid = expand_grid(base.ppo, axes, agents::is_recurrent(base.agent.arch));
  std::vector<SweepPoint> out;
  for (const auto& cfg : grid) {
    ppo::TrainSetup setup;
    setup.train_spec = base.env;
    setup.agent = base.agent;
    setup.ppo = cfg;
    setup.run_seed = base.seed;
    auto trained = ppo::train(setup);
    SweepPoint p;
    p.ppo = cfg;
    p.eval = ppo::evaluate(trained.policy, base.env, eval_episodes, stream_seed(base.seed, "sweep_eval"));
    p.score = p.eval.score;
    if (on_point) on_point(p);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace crafter::harness
