#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include "crafter/harness.hpp"

using namespace crafter;
using namespace crafter::harness;
using json = nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path temp(const std::string& name) { return fs::temp_directory_path() / name; }

std::vector<json> parse_all(const std::vector<std::string>& msgs) {
  std::vector<json> out;
  for (const auto& m : msgs) out.push_back(json::parse(m));
  return out;
}

json hello(std::uint64_t seed, const std::string& preset = "default") {
  return json{{"kind", "hello"}, {"version", 1}, {"preset", preset}, {"seed", seed}};
}

std::string act(std::string_view a) { return json{{"kind", "act"}, {"action", a}}.dump(); }

StatsLine all_unlocked(std::int64_t length) {
  StatsLine l;
  l.length = length;
  l.reward = 22;
  l.achievements.fill(1);
  return l;
}

agents::AgentConfig small_oc() {
  auto c = agents::AgentConfig::defaults(agents::Architecture::oc_sa);
  c.embed_dim = 16;
  c.mlp_dim = 16;
  c.n_heads = 4;
  c.lstm_dim = 16;
  c.critic_dim = 16;
  c.cnn_channels = {8, 8, 8};
  c.spcnn_channels = 4;
  c.spcnn_layers = 2;
  c.fc_dim = 32;
  return c;
}

struct Cli {
  int code;
  std::string out;
};

Cli run_cli(const std::string& args) {
  const fs::path out = temp("crafter_cli_out.txt");
  const std::string cmd = std::string(CRAFTER_CLI) + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  fs::remove(out);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text};
}

}  // namespace

TEST(Config, RoundTripOverridesAndErrors) {
  json doc{{"seed", 4},
           {"env", {{"preset", "mini"}}},
           {"agent", {{"architecture", "LSTM-CNN"}}},
           {"ppo", {{"n_lanes", 4}, {"seq_len", 8}}}};
  apply_override(doc, "ppo.learning_rate=1e-4");
  apply_override(doc, "server.host=0.0.0.0");
  apply_override(doc, "seed=9");
  const Config c = config_from_json(doc);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.env.world, WorldKind::mini);
  EXPECT_EQ(c.agent.arch, agents::Architecture::lstm_cnn);
  EXPECT_DOUBLE_EQ(c.ppo.learning_rate, 1e-4);
  EXPECT_EQ(c.ppo.n_lanes, 4);
  EXPECT_EQ(c.server.host, "0.0.0.0");

  const Config back = config_from_json(to_json(c));
  EXPECT_EQ(back.env, c.env);
  EXPECT_EQ(back.agent, c.agent);
  EXPECT_EQ(back.ppo, c.ppo);
  EXPECT_EQ(back.server, c.server);

  EXPECT_THROW(config_from_json(json{{"optimizer", {}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"server", {{"colour", "red"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"ppo", {{"n_rollout_steps", 4097}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"env", {{"preset", "nowhere"}}}}), ConfigError);
  EXPECT_THROW(apply_override(doc, "ppo.learning_rate"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);

  const fs::path path = temp("crafter_harness_config.json");
  std::ofstream(path) << to_json(c).dump();
  EXPECT_EQ(load_config(path).ppo, c.ppo);
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_config(path), ConfigError);
  fs::remove(path);
}

TEST(Presets, ScenarioSides) {
  const EnvSpec train = resolve_preset("app_o1_52:train");
  const EnvSpec eval = resolve_preset("app_o1_52:eval");
  EXPECT_EQ(resolve_preset("app_o1_52"), train);
  EXPECT_NE(train, eval);
  EXPECT_EQ(resolve_preset("default"), env_preset("default"));
  EXPECT_THROW(resolve_preset("app_o1_52:test"), ConfigError);
  EXPECT_ANY_THROW(resolve_preset("nothing:train"));
}

TEST(Census, DefaultWorldTreeCount) {
  const Census c = census(env_preset("default"), 1);
  EXPECT_EQ(c.materials.at(Material::tree), 189);
  const json j = to_json(c);
  EXPECT_EQ(j["materials"]["tree"], 189);
  EXPECT_EQ(j["seed"], 1);
  EXPECT_TRUE(j["creatures"].contains("zombie"));
}

TEST(ScoreLog, EveryAchievementEveryEpisodeIsHundred) {
  const fs::path path = temp("crafter_harness_score.jsonl");
  {
    StatsLog log(path, true);
    for (int i = 0; i < 5; ++i) log.append(all_unlocked(100 + i));
  }
  const LogScore s = score_log(path);
  EXPECT_EQ(s.episodes, 5);
  EXPECT_NEAR(s.score, 100.0, 1e-9);
  for (double r : s.rates) EXPECT_DOUBLE_EQ(r, 100.0);
  { StatsLog empty(path, true); }
  EXPECT_THROW(score_log(path), ConfigError);
  fs::remove(path);
}

TEST(Protocol, ActionRosterAndKinds) {
  for (const auto a : kActionNames) {
    const auto m = protocol::parse_client_message(act(a));
    ASSERT_TRUE(m.action);
    EXPECT_EQ(name(*m.action), a);
  }
  std::set<std::string_view> distinct(kActionNames.begin(), kActionNames.end());
  EXPECT_EQ(distinct.size(), 17u);
  EXPECT_THROW(protocol::parse_client_message(act("jump")), protocol::ProtocolError);
  EXPECT_THROW(protocol::parse_client_message(R"({"kind":"teleport"})"), protocol::ProtocolError);
  EXPECT_THROW(protocol::parse_client_message(R"({"kind":"frame"})"), protocol::ProtocolError);
  EXPECT_THROW(protocol::parse_client_message(R"({"kind":"hello","version":2})"), protocol::ProtocolError);
  EXPECT_THROW(protocol::parse_client_message(R"({"kind":"hello","seed":"x"})"), protocol::ProtocolError);
  EXPECT_THROW(protocol::parse_client_message("not json"), protocol::ProtocolError);
  EXPECT_THROW(protocol::parse_client_message("[1,2]"), protocol::ProtocolError);
  for (std::size_t k = 0; k < protocol::kKindNames.size(); ++k)
    EXPECT_EQ(protocol::parse_kind(protocol::name(static_cast<protocol::Kind>(k))), static_cast<protocol::Kind>(k));
}

TEST(Protocol, Base64) {
  const std::string text = "foobar";
  const std::vector<std::pair<std::size_t, std::string>> known = {
      {0, ""}, {1, "Zg=="}, {2, "Zm8="}, {3, "Zm9v"}, {4, "Zm9vYg=="}, {5, "Zm9vYmE="}, {6, "Zm9vYmFy"}};
  for (const auto& [n, enc] : known) {
    const std::vector<std::uint8_t> bytes(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_EQ(protocol::base64_encode(bytes), enc);
    EXPECT_EQ(protocol::base64_decode(enc), bytes) << enc;
  }
  Rng rng(3);
  for (int n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.below(256));
    EXPECT_EQ(protocol::base64_decode(protocol::base64_encode(bytes)), bytes);
  }
  EXPECT_THROW(protocol::base64_decode("Zm9"), protocol::ProtocolError);
  EXPECT_THROW(protocol::base64_decode("Zm!v"), protocol::ProtocolError);
  EXPECT_THROW(protocol::base64_decode("Z=9v"), protocol::ProtocolError);
}

TEST(PlaySession, HelloStartsWithResetFrame) {
  PlaySession s("a", {});
  const auto replies = parse_all(s.handle(hello(3).dump()));
  ASSERT_EQ(replies.size(), 2u);
  EXPECT_EQ(replies[0]["kind"], "hello");
  EXPECT_EQ(replies[0]["actions"].size(), 17u);
  EXPECT_EQ(replies[0]["achievements"].size(), 22u);
  const protocol::Frame f = protocol::parse_frame(replies[1]);
  EXPECT_TRUE(f.reset);
  EXPECT_EQ(f.step, 0);
  EXPECT_EQ(f.index, 0);
  Env env(env_preset("default"), 3, 0);
  EXPECT_EQ(f.obs, env.reset());
  EXPECT_EQ(s.frames(), 1);
  EXPECT_EQ(s.resets(), 1);
}

TEST(PlaySession, ErrorsLeaveSessionUnchanged) {
  PlaySession s("b", {});
  auto r = parse_all(s.handle(act("noop")));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0]["kind"], "error");
  EXPECT_FALSE(s.started());
  s.handle(hello(1).dump());
  s.handle(act("noop"));
  for (const char* bad : {"{", R"({"kind":"done"})", R"({"kind":"act","action":"fly"})", R"({"kind":"act"})",
                          R"({"kind":"hello","mode":"spectate"})"}) {
    r = parse_all(s.handle(bad));
    ASSERT_EQ(r.size(), 1u) << bad;
    EXPECT_EQ(r[0]["kind"], "error") << bad;
  }
  EXPECT_EQ(s.frames(), 2);
  EXPECT_EQ(s.acts(), 1);
  r = parse_all(s.handle(act("noop")));
  EXPECT_EQ(protocol::parse_frame(r[0]).step, 2);
}

TEST(PlaySession, LockstepOverEpisodeBoundaries) {
  const fs::path log = temp("crafter_harness_play.jsonl");
  PlaySession::Options opts;
  opts.stats = std::make_shared<StatsLog>(log, true);
  PlaySession s("c", opts);
  s.handle(hello(7, "mini").dump());
  Rng rng(2);
  std::int64_t frames_seen = 1, done_seen = 0;
  for (int t = 0; t < 450; ++t) {
    const auto replies = parse_all(s.handle(act(kActionNames[rng.below(kNumActions)])));
    for (const auto& m : replies) {
      if (m["kind"] == "frame") ++frames_seen;
      if (m["kind"] == "done") ++done_seen;
    }
    ASSERT_EQ(s.frames(), s.acts() + s.resets());
  }
  EXPECT_EQ(frames_seen, s.frames());
  EXPECT_GE(done_seen, 2);
  EXPECT_EQ(s.resets(), done_seen + 1);
  const auto stats = json::parse(s.handle(R"({"kind":"stats"})")[0]);
  EXPECT_EQ(stats["episodes"], done_seen);
  EXPECT_EQ(stats["frames"], s.frames());
  EXPECT_EQ(score_log(log).episodes, done_seen);
  EXPECT_NEAR(score_log(log).score, stats["score"].get<double>(), 1e-9);
  fs::remove(log);
}

// Shortest walk over open ground to a cell beside a tree, then a turn to face it.
std::vector<std::string> walk_to_tree(const WorldState& st) {
  struct Dir {
    Pos d;
    const char* action;
  };
  static const Dir dirs[] = {{{-1, 0}, "move_left"}, {{1, 0}, "move_right"}, {{0, -1}, "move_up"}, {{0, 1}, "move_down"}};
  const WorldMap& map = st.map;
  std::vector<int> from(static_cast<std::size_t>(map.width * map.height), -1);
  std::vector<int> via(from.size(), -1);
  std::vector<Pos> queue{st.player.pos};
  from[static_cast<std::size_t>(map.index(st.player.pos))] = map.index(st.player.pos);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const Pos p = queue[head];
    for (int k = 0; k < 4; ++k) {
      const Pos q = p + dirs[k].d;
      if (!map.in_bounds(q)) continue;
      if (map.at(q) == Material::tree) {
        std::vector<std::string> path{dirs[k].action};
        for (int i = map.index(p); i != map.index(st.player.pos); i = from[static_cast<std::size_t>(i)])
          path.push_back(dirs[via[static_cast<std::size_t>(i)]].action);
        std::reverse(path.begin(), path.end());
        return path;
      }
      const Material m = map.at(q);
      if (m != Material::grass && m != Material::sand && m != Material::path) continue;
      if (from[static_cast<std::size_t>(map.index(q))] >= 0) continue;
      from[static_cast<std::size_t>(map.index(q))] = map.index(p);
      via[static_cast<std::size_t>(map.index(q))] = k;
      queue.push_back(q);
    }
  }
  return {};
}

TEST(PlaySession, DoFacingTreeCollectsWood) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    EnvOptions eo;
    eo.auto_reset = false;
    Env env(env_preset("default"), seed, 0, eo);
    env.reset();
    const auto path = walk_to_tree(env.state());
    if (path.empty() || path.size() > 20) continue;
    for (const auto& a : path) env.step(*parse_action(a));
    const WorldState& st = env.state();
    const Pos ahead = st.player.pos + facing_offset(st.player.facing);
    if (!st.map.in_bounds(ahead) || st.map.at(ahead) != Material::tree) continue;
    if (st.player.inventory[static_cast<std::size_t>(Resource::wood)] != 0) continue;

    PlaySession s("d", {});
    s.handle(hello(seed).dump());
    for (const auto& a : path) s.handle(act(a));
    const auto r = parse_all(s.handle(act("do")));
    const protocol::Frame f = protocol::parse_frame(r.at(0));
    EXPECT_EQ(f.inventory.at("wood"), 1);
    EXPECT_EQ(f.unlocked_now, std::vector<std::string>{"collect_wood"});
    EXPECT_NEAR(f.reward, 1.0, 0.2);
    EXPECT_EQ(decode_slot(f.obs, static_cast<int>(Resource::wood)), 1);
    EXPECT_GT(f.score, 0.0);
    return;
  }
  FAIL() << "no reachable tree";
}

TEST(PlaySession, SpectateDrivesWithPolicy) {
  PlaySession::Options opts;
  opts.policy = std::make_shared<const agents::Policy<float>>(agents::AgentConfig::defaults(agents::Architecture::ppo_cnn), 1);
  PlaySession s("e", opts);
  auto r = parse_all(s.handle(json{{"kind", "hello"}, {"mode", "spectate"}, {"seed", 2}}.dump()));
  EXPECT_EQ(r[0]["mode"], "spectate");
  for (int t = 0; t < 5; ++t) {
    r = parse_all(s.handle(R"({"kind":"act"})"));
    EXPECT_EQ(r[0]["kind"], "frame");
  }
  EXPECT_EQ(s.mode(), PlayMode::spectate);
  EXPECT_EQ(s.acts(), 5);
}

TEST(Static, ResolveAndContentTypes) {
  const fs::path root = "/srv/web";
  EXPECT_EQ(resolve_static(root, "/"), root / "index.html");
  EXPECT_EQ(resolve_static(root, "/app.js?v=2"), root / "app.js");
  EXPECT_EQ(resolve_static(root, "/a/./b.css"), root / "a" / "b.css");
  EXPECT_EQ(resolve_static(root, "/docs/"), root / "docs" / "index.html");
  EXPECT_FALSE(resolve_static(root, "/../etc/passwd"));
  EXPECT_FALSE(resolve_static(root, "/a/../../x"));
  EXPECT_FALSE(resolve_static(root, "relative"));
  EXPECT_EQ(content_type("x.html"), "text/html; charset=utf-8");
  EXPECT_EQ(content_type("x.js"), "text/javascript; charset=utf-8");
  EXPECT_EQ(content_type("x.png"), "image/png");
  EXPECT_EQ(content_type("x.bin"), "application/octet-stream");
}

TEST(Server, ServesAssetsAndWebsocketSessions) {
  namespace asio = boost::asio;
  namespace beast = boost::beast;
  namespace http = beast::http;
  namespace websocket = beast::websocket;
  using tcp = asio::ip::tcp;

  const fs::path dir = temp("crafter_harness_static");
  fs::create_directories(dir);
  std::ofstream(dir / "index.html") << "<!doctype html><title>play</title>";
  const fs::path log = temp("crafter_harness_server.jsonl");
  fs::remove(log);
  ServerConfig cfg;
  cfg.port = 0;
  cfg.static_dir = dir;
  cfg.stats_log = log;
  PlayServer server(cfg, nullptr, "mini");
  server.start();
  ASSERT_GT(server.port(), 0);
  asio::io_context ioc;
  const tcp::endpoint ep(asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(server.port()));

  auto get = [&](const std::string& target) {
    tcp::socket sock(ioc);
    sock.connect(ep);
    http::request<http::string_body> req{http::verb::get, target, 11};
    req.set(http::field::host, "localhost");
    http::write(sock, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(sock, buf, res);
    return res;
  };
  const auto index = get("/");
  EXPECT_EQ(index.result(), http::status::ok);
  EXPECT_EQ(index[http::field::content_type], "text/html; charset=utf-8");
  EXPECT_NE(index.body().find("play"), std::string::npos);
  EXPECT_EQ(get("/missing.js").result(), http::status::not_found);
  EXPECT_EQ(get("/../secret").result(), http::status::bad_request);
  const auto presets = json::parse(get("/presets").body());
  EXPECT_EQ(presets["default"], "mini");

  websocket::stream<tcp::socket> ws(ioc);
  ws.next_layer().connect(ep);
  ws.handshake("localhost", "/ws");
  auto read = [&] {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  };
  ws.write(asio::buffer(json{{"kind", "hello"}, {"seed", 5}}.dump()));
  EXPECT_EQ(read()["kind"], "hello");
  const json first = read();
  EXPECT_TRUE(first["reset"].get<bool>());
  std::int64_t frames = 1, resets = 1;
  for (int t = 0; t < 210; ++t) {
    ws.write(asio::buffer(act("noop")));
    json m = read();
    ASSERT_EQ(m["kind"], "frame");
    ++frames;
    if (m["done"].get<bool>()) {
      EXPECT_EQ(read()["kind"], "done");
      json next = read();
      EXPECT_TRUE(next["reset"].get<bool>());
      ++frames;
      ++resets;
    }
  }
  EXPECT_EQ(frames, 210 + resets);
  EXPECT_EQ(resets, 2);
  ws.write(asio::buffer(std::string("garbage")));
  EXPECT_EQ(read()["kind"], "error");
  ws.write(asio::buffer(act("noop")));
  EXPECT_EQ(read()["kind"], "frame");
  ws.close(websocket::close_code::normal);
  server.stop();
  EXPECT_GE(server.sessions_started(), 5);
  EXPECT_EQ(score_log(log).episodes, 1);
  fs::remove_all(dir);
  fs::remove(log);
}

TEST(Montage, TwoRowsOneColumnPerStep) {
  const agents::Policy<float> policy(small_oc(), 3);
  const Montage m = attention_montage(policy, env_preset("default"), 4, 3, 2);
  EXPECT_EQ(m.image.width, 3 * 128);
  EXPECT_EQ(m.image.height, 2 * 128);
  ASSERT_EQ(m.inputs.size(), 3u);
  ASSERT_EQ(m.heatmaps.size(), 3u);
  for (int t = 0; t < 3; ++t) {
    const Image up = upscale(m.inputs[static_cast<std::size_t>(t)].image(), 2);
    for (int y = 0; y < 128; y += 9)
      for (int x = 0; x < 128; x += 7) ASSERT_EQ(m.image.at(t * 128 + x, y), up.at(x, y));
    EXPECT_EQ(m.heatmaps[static_cast<std::size_t>(t)].size(), 64u * 64u);
  }
  const agents::Policy<float> cnn(agents::AgentConfig::defaults(agents::Architecture::ppo_cnn), 3);
  EXPECT_THROW(attention_montage(cnn, env_preset("default"), 4, 3), agents::UnsupportedError);
  EXPECT_THROW(attention_montage(policy, env_preset("default"), 4, 0), DomainError);
}

TEST(Sweep, GridOrderAndErrors) {
  const SweepAxis lr = parse_sweep_axis("learning_rate=1e-4,3e-4");
  ASSERT_EQ(lr.values.size(), 2u);
  const SweepAxis ep = parse_sweep_axis("n_epochs=1,2,4");
  const std::vector<SweepAxis> axes{lr, ep};
  const auto grid = expand_grid(ppo::PPOConfig{}, axes, false);
  ASSERT_EQ(grid.size(), 6u);
  EXPECT_DOUBLE_EQ(grid[0].learning_rate, 1e-4);
  EXPECT_EQ(grid[0].n_epochs, 1);
  EXPECT_EQ(grid[2].n_epochs, 4);
  EXPECT_DOUBLE_EQ(grid[3].learning_rate, 3e-4);
  EXPECT_THROW(parse_sweep_axis("learning_rate"), ConfigError);
  const std::vector<SweepAxis> bad{parse_sweep_axis("momentum=1,2")};
  EXPECT_THROW(expand_grid(ppo::PPOConfig{}, bad, false), ConfigError);
  const std::vector<SweepAxis> invalid{parse_sweep_axis("batch_size=99999")};
  EXPECT_THROW(expand_grid(ppo::PPOConfig{}, invalid, false), ConfigError);
}

TEST(Sweep, RunsEveryPoint) {
  Config base;
  base.env = env_preset("mini");
  base.agent = agents::AgentConfig::defaults(agents::Architecture::ppo_cnn);
  base.agent.cnn_channels = {4, 8, 8};
  base.agent.fc_dim = 16;
  base.ppo.n_lanes = 2;
  base.ppo.n_rollout_steps = 64;
  base.ppo.batch_size = 32;
  base.ppo.total_steps = 64;
  const std::vector<SweepAxis> axes{parse_sweep_axis("n_epochs=1,2")};
  int seen = 0;
  const auto points = run_sweep(base, axes, 2, [&](const SweepPoint&) { ++seen; });
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(seen, 2);
  EXPECT_EQ(points[1].ppo.n_epochs, 2);
  EXPECT_EQ(points[0].eval.episodes, 2);
}

TEST(Cli, ExitCodesAndSubcommands) {
  EXPECT_EQ(run_cli("").code, 1);
  EXPECT_EQ(run_cli("gen --bogus").code, 1);
  EXPECT_EQ(run_cli("frobnicate").code, 1);

  const Cli gen = run_cli("gen --preset default --seed 1 --json");
  EXPECT_EQ(gen.code, 0);
  EXPECT_EQ(json::parse(gen.out)["materials"]["tree"], 189);
  EXPECT_EQ(run_cli("gen --preset nowhere").code, 2);

  const fs::path log = temp("crafter_cli_score.jsonl");
  {
    StatsLog l(log, true);
    l.append(all_unlocked(10));
    l.append(all_unlocked(20));
  }
  const Cli score = run_cli("score " + log.string());
  EXPECT_EQ(score.code, 0);
  EXPECT_EQ(score.out, "100.0\n");
  fs::remove(log);
  EXPECT_EQ(run_cli("score /nonexistent/log.jsonl").code, 2);

  const fs::path rec = temp("crafter_cli_record.json");
  EXPECT_EQ(run_cli("record --preset mini --seed 3 --steps 50 -o " + rec.string()).code, 0);
  const Cli rep = run_cli("replay " + rec.string());
  EXPECT_EQ(rep.code, 0);
  EXPECT_EQ(rep.out, "OK, byte-exact\n");
  auto doc = json::parse(std::ifstream(rec));
  std::string digest = doc["final_state_digest"].get<std::string>();
  digest.back() = digest.back() == '0' ? '1' : '0';
  doc["final_state_digest"] = digest;
  std::ofstream(rec) << doc.dump();
  EXPECT_EQ(run_cli("replay " + rec.string()).code, 3);
  fs::remove(rec);

  const fs::path run = temp("crafter_cli_run");
  fs::remove_all(run);
  const std::string tiny = " --set agent.cnn_channels=[4,8,8] --set agent.fc_dim=16 --set ppo.n_lanes=2"
                           " --set ppo.n_rollout_steps=64 --set ppo.batch_size=32";
  EXPECT_EQ(run_cli("train -p mini -a OC-SA --steps 64 -o " + run.string() +
                    " --set agent.embed_dim=16 --set agent.mlp_dim=16 --set agent.n_heads=4 --set agent.spcnn_channels=4"
                    " --set agent.spcnn_layers=2" + tiny)
                .code,
            0);
  EXPECT_TRUE(fs::exists(run / "policy.ckpt"));
  EXPECT_TRUE(fs::exists(run / "report.jsonl"));
  const Cli eval = run_cli("eval " + run.string() + " -n 2");
  EXPECT_EQ(eval.code, 0);
  EXPECT_EQ(json::parse(eval.out)["episodes"], 2);
  const fs::path png = temp("crafter_cli_montage.png");
  EXPECT_EQ(run_cli("viz-attn " + run.string() + " --steps 4 --scale 1 -o " + png.string()).code, 0);
  const Image montage = read_png(png);
  EXPECT_EQ(montage.width, 4 * 64);
  EXPECT_EQ(montage.height, 2 * 64);
  fs::remove(png);
  EXPECT_EQ(run_cli("train -p mini -a PPO-CNN --steps 64 -o " + run.string() + tiny + " --set ppo.n_lanes=3").code, 2);
  EXPECT_EQ(run_cli("train -a Dreamer -o " + run.string()).code, 2);
  EXPECT_EQ(run_cli("eval /nonexistent/run").code, 2);
  fs::remove_all(run);
}
