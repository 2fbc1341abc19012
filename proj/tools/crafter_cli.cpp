#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "crafter/harness.hpp"
#include "crafter/worldgen.hpp"

namespace {

using namespace crafter;
using json = nlohmann::json;

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::string preset;
  std::string arch;
  std::int64_t steps = -1;
  std::int64_t seed = -1;

  void add_to(CLI::App* app, bool with_training) {
    app->add_option("-c,--config", file, "JSON config with env/agent/ppo/server sections");
    app->add_option("--set", sets, "Override, e.g. ppo.learning_rate=1e-4 (repeatable)");
    app->add_option("-p,--preset", preset, "Environment preset, e.g. default, hard_x2+o1_52, mini");
    app->add_option("--seed", seed, "Run seed");
    if (with_training) {
      app->add_option("-a,--arch", arch, "Agent: PPO-CNN, PPO-SPCNN, LSTM-CNN, LSTM-SPCNN, OC-SA, OC-CA");
      app->add_option("--steps", steps, "Total environment steps");
    }
  }

  harness::Config build() const {
    json doc = json::object();
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw ConfigError("cannot open config '" + file + "'");
      try {
        doc = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError(file + ": " + e.what());
      }
    }
    if (!preset.empty()) doc["env"]["preset"] = preset;
    if (!arch.empty()) doc["agent"]["architecture"] = arch;
    if (steps >= 0) doc["ppo"]["total_steps"] = steps;
    if (seed >= 0) doc["seed"] = seed;
    for (const auto& s : sets) harness::apply_override(doc, s);
    return harness::config_from_json(doc);
  }
};

std::filesystem::path run_file(const std::filesystem::path& run, const char* name) { return run / name; }

// A run directory holds config.json and policy.ckpt written by `train`.
struct LoadedPolicy {
  harness::Config config;
  std::shared_ptr<agents::Policy<float>> policy;
};

LoadedPolicy load_run(const std::filesystem::path& run) {
  LoadedPolicy lp{harness::load_config(run_file(run, "config.json")), nullptr};
  lp.policy = std::make_shared<agents::Policy<float>>(lp.config.agent, 0);
  nn::load_checkpoint(run_file(run, "policy.ckpt"), lp.policy->params(), lp.config.agent.digest());
  return lp;
}

json rates_json(const ScoreInput& rates) {
  json j = json::object();
  for (std::size_t a = 0; a < kNumAchievements; ++a) j[std::string(kAchievementNames[a])] = rates[a];
  return j;
}

json eval_json(const ppo::EvalResult& r) {
  return json{{"score", r.score},
              {"episodes", r.episodes},
              {"mean_length", r.mean_length},
              {"mean_reward", r.mean_reward},
              {"rates", rates_json(r.rates)}};
}

int cmd_gen(const std::string& preset, std::uint64_t seed, const std::string& png, bool as_json) {
  const EnvSpec spec = harness::resolve_preset(preset);
  const auto c = harness::census(spec, seed);
  if (as_json) {
    std::cout << harness::to_json(c).dump(2) << "\n";
  } else {
    std::printf("preset %s seed %llu\n", preset.c_str(), static_cast<unsigned long long>(seed));
    for (std::size_t m = 0; m < kNumMaterials; ++m) {
      const auto it = c.materials.find(static_cast<Material>(m));
      std::printf("  %-8s %d\n", std::string(kMaterialNames[m]).c_str(), it == c.materials.end() ? 0 : it->second);
    }
    for (std::size_t k = 0; k < kNumCreatureKinds; ++k)
      std::printf("  %-8s %d\n", std::string(kCreatureNames[k]).c_str(), c.creatures[k]);
  }
  if (!png.empty()) {
    const auto ctx = SimContext::from_spec(spec);
    write_png(png, render_full_map(new_world(ctx, seed)));
  }
  return kOk;
}

int cmd_train(const ConfigFlags& flags, const std::string& out, const std::string& eval_preset) {
  const harness::Config cfg = flags.build();
  const std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(run_file(dir, "config.json"));
    f << harness::to_json(cfg).dump(2) << "\n";
  }
  std::ofstream report(run_file(dir, "report.jsonl"));
  ppo::TrainSetup setup;
  setup.train_spec = cfg.env;
  if (!eval_preset.empty()) setup.eval_spec = harness::resolve_preset(eval_preset);
  setup.agent = cfg.agent;
  setup.ppo = cfg.ppo;
  setup.run_seed = cfg.seed;
  setup.stats = std::make_shared<StatsLog>(run_file(dir, "stats.jsonl"), true);
  setup.checkpoint = run_file(dir, "policy.ckpt");
  setup.on_entry = [&](const ppo::ReportEntry& e) {
    const std::string line = ppo::to_json(e).dump();
    report << line << "\n" << std::flush;
    std::cout << line << "\n" << std::flush;
  };
  std::fprintf(stderr, "%s: %zu parameters\n", std::string(agents::name(cfg.agent.arch)).c_str(),
               agents::parameter_count(cfg.agent));
  ppo::train(setup);
  return kOk;
}

int cmd_eval(const std::string& run, const std::string& preset, int episodes, std::int64_t seed,
             const std::string& stats_log) {
  const LoadedPolicy lp = load_run(run);
  const EnvSpec spec = preset.empty() ? lp.config.env : harness::resolve_preset(preset);
  std::shared_ptr<StatsLog> stats;
  if (!stats_log.empty()) stats = std::make_shared<StatsLog>(stats_log, true);
  const int n = episodes > 0 ? episodes : lp.config.ppo.eval_episodes;
  const std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed) : stream_seed(lp.config.seed, "eval");
  std::cout << eval_json(ppo::evaluate(*lp.policy, spec, n, s, stats)).dump(2) << "\n";
  return kOk;
}

int cmd_score(const std::string& log, bool as_json) {
  const auto s = harness::score_log(log);
  if (as_json) {
    std::cout << json{{"score", s.score}, {"episodes", s.episodes}, {"rates", rates_json(s.rates)}}.dump(2) << "\n";
  } else {
    std::printf("%.1f\n", s.score);
  }
  return kOk;
}

int cmd_record(const std::string& preset, std::uint64_t seed, int steps, const std::string& run,
               const std::string& out) {
  EnvOptions eo;
  eo.auto_reset = false;
  std::optional<LoadedPolicy> lp;
  if (!run.empty()) lp = load_run(run);
  const EnvSpec spec = preset.empty() && lp ? lp->config.env : harness::resolve_preset(preset.empty() ? "default" : preset);
  Env env(spec, seed, 0, eo);
  Observation obs = env.reset();
  ppo::ActFn act = lp ? ppo::policy_actor(*lp->policy, stream_seed(seed, "record_actions"))
                      : ppo::random_actor(stream_seed(seed, "record_actions"));
  for (int t = 0; t < steps && env.active(); ++t) {
    const std::uint8_t fresh = t == 0 ? 1 : 0;
    const Action a = act(std::span<const Observation>(&obs, 1), std::span<const std::uint8_t>(&fresh, 1))[0];
    obs = env.step(a).obs;
  }
  save_record(out, record_episode(env));
  std::printf("recorded %zu actions to %s\n", env.actions().size(), out.c_str());
  return kOk;
}

int cmd_replay(const std::string& path) {
  const auto r = replay(load_record(path));
  std::printf("%s\n", r.message.c_str());
  return r.ok ? kOk : kRuntime;
}

int cmd_viz(const std::string& run, const std::string& preset, std::uint64_t seed, int steps, int scale,
            const std::string& out) {
  const LoadedPolicy lp = load_run(run);
  const EnvSpec spec = preset.empty() ? lp.config.env : harness::resolve_preset(preset);
  const auto m = harness::attention_montage(*lp.policy, spec, seed, steps, scale);
  write_png(out, m.image);
  std::printf("wrote %dx%d montage (%d steps) to %s\n", m.image.width, m.image.height, steps, out.c_str());
  return kOk;
}

int cmd_play(const ConfigFlags& flags, const std::string& run, int port, const std::string& static_dir,
             const std::string& stats_log) {
  harness::Config cfg = flags.build();
  if (port >= 0) cfg.server.port = port;
  if (!static_dir.empty()) cfg.server.static_dir = static_dir;
  if (!stats_log.empty()) cfg.server.stats_log = stats_log;
  std::shared_ptr<const agents::Policy<float>> policy;
  if (!run.empty()) policy = load_run(run).policy;
  harness::PlayServer server(cfg.server, policy, flags.preset.empty() ? "default" : flags.preset);
  server.start();
  std::printf("serving http://%s:%d/ (websocket /ws)\n", cfg.server.host.c_str(), server.port());
  std::fflush(stdout);
  server.wait();
  return kOk;
}

int cmd_sweep(const ConfigFlags& flags, const std::vector<std::string>& axes_text, int episodes,
              const std::string& out) {
  const harness::Config cfg = flags.build();
  std::vector<harness::SweepAxis> axes;
  for (const auto& a : axes_text) axes.push_back(harness::parse_sweep_axis(a));
  std::ofstream f;
  if (!out.empty()) f.open(out);
  harness::run_sweep(cfg, axes, episodes, [&](const harness::SweepPoint& p) {
    const std::string line = json{{"ppo", ppo::to_json(p.ppo)}, {"score", p.score}}.dump();
    std::cout << line << "\n" << std::flush;
    if (f) f << line << "\n" << std::flush;
  });
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crafter environments, agents and training"};
  app.require_subcommand(1);

  std::string preset = "default";
  std::uint64_t seed = 0;
  std::string png, out, run, log, eval_preset, stats_log, static_dir;
  bool as_json = false;
  int episodes = 0, steps = 8, record_steps = 500, scale = 2, port = -1;
  std::int64_t eval_seed = -1;
  std::vector<std::string> axes;
  ConfigFlags flags;

  auto* gen = app.add_subcommand("gen", "Generate a world and print its census");
  gen->add_option("-p,--preset", preset, "Environment preset");
  gen->add_option("--seed", seed, "World seed");
  gen->add_option("--png", png, "Write the full map as PNG");
  gen->add_flag("--json", as_json, "Print JSON");

  auto* train = app.add_subcommand("train", "Train an agent with PPO");
  flags.add_to(train, true);
  train->add_option("-o,--out", out, "Run directory")->required();
  train->add_option("--eval-preset", eval_preset, "Environment for periodic evaluation");

  auto* eval = app.add_subcommand("eval", "Evaluate a trained run");
  eval->add_option("run", run, "Run directory")->required();
  eval->add_option("-p,--preset", preset, "Evaluation preset (default: training env)");
  eval->add_option("-n,--episodes", episodes, "Episodes");
  eval->add_option("--seed", eval_seed, "Evaluation seed");
  eval->add_option("--stats-log", stats_log, "Write a stats log");

  auto* score = app.add_subcommand("score", "Crafter score of a stats log");
  score->add_option("log", log, "Line-delimited stats log")->required();
  score->add_flag("--json", as_json, "Print JSON with per-achievement rates");

  auto* record = app.add_subcommand("record", "Record an episode");
  record->add_option("-p,--preset", preset, "Environment preset");
  record->add_option("--seed", seed, "Episode seed");
  record->add_option("--steps", record_steps, "Maximum actions");
  record->add_option("--run", run, "Act with a trained run instead of random actions");
  record->add_option("-o,--out", out, "Record path")->required();

  auto* rep = app.add_subcommand("replay", "Verify an episode record");
  rep->add_option("record", log, "Record path")->required();

  auto* viz = app.add_subcommand("viz-attn", "Export an attention montage");
  viz->add_option("run", run, "Run directory of an object-centric agent")->required();
  viz->add_option("-p,--preset", preset, "Environment preset (default: training env)");
  viz->add_option("--seed", seed, "Episode seed");
  viz->add_option("--steps", steps, "Columns");
  viz->add_option("--scale", scale, "Pixel upscale");
  viz->add_option("-o,--out", out, "Output PNG")->required();

  ConfigFlags play_flags;
  auto* play = app.add_subcommand("play", "Serve the human-play client");
  play_flags.add_to(play, false);
  play->add_option("--port", port, "Port (0 picks one)");
  play->add_option("--static", static_dir, "Static asset directory");
  play->add_option("--stats-log", stats_log, "Append finished episodes here");
  play->add_option("--run", run, "Trained run for spectate mode");

  ConfigFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "Grid over PPO settings");
  sweep_flags.add_to(sweep, true);
  sweep->add_option("--axis", axes, "key=v1,v2 (repeatable)")->required();
  sweep->add_option("-n,--episodes", episodes, "Evaluation episodes per point (default 100)");
  sweep->add_option("-o,--out", out, "JSONL results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return cmd_gen(preset, seed, png, as_json);
    if (*train) return cmd_train(flags, out, eval_preset);
    if (*eval) return cmd_eval(run, eval->count("--preset") ? preset : "", episodes, eval_seed, stats_log);
    if (*score) return cmd_score(log, as_json);
    if (*record) return cmd_record(record->count("--preset") ? preset : "", seed, record_steps, run, out);
    if (*rep) return cmd_replay(log);
    if (*viz) return cmd_viz(run, viz->count("--preset") ? preset : "", seed, steps, scale, out);
    if (*play) return cmd_play(play_flags, run, port, static_dir, stats_log);
    if (*sweep) return cmd_sweep(sweep_flags, axes, episodes > 0 ? episodes : 100, out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const agents::UnsupportedError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const nn::CheckpointError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kUsage;
}
