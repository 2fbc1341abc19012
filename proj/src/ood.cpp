#include "crafter/ood.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace crafter {

using nlohmann::json;

AppearanceDist AppearanceDist::all(const VariantProbs& p) {
  AppearanceDist d;
  d.probs.fill(p);
  return d;
}

AppearanceDist AppearanceDist::skewed(double o1) {
  const double rest = (1.0 - o1) / 3.0;
  return all({o1, rest, rest, rest});
}

void AppearanceDist::validate() const {
  for (std::size_t c = 0; c < kNumVariantClasses; ++c) {
    double sum = 0.0;
    for (double p : probs[c]) {
      if (!(p >= 0.0)) {
        throw ConfigError("appearance: negative probability for " +
                          std::string(kVariantClassNames[c]));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("appearance: probabilities for " + std::string(kVariantClassNames[c]) +
                        " sum to " + std::to_string(sum));
    }
  }
}

std::optional<NumPreset> parse_num_preset(std::string_view s) {
  for (std::size_t i = 0; i < kNumPresetNames.size(); ++i) {
    if (kNumPresetNames[i] == s) return static_cast<NumPreset>(i);
  }
  return std::nullopt;
}

CountTargets count_targets(NumPreset p) {
  //                tree   coal  cow   zombie skeleton
  switch (p) {
    case NumPreset::easy_x4: return {764, 206, 100, 3, 2.5};
    case NumPreset::easy_x2: return {380, 102, 46, 6, 4.5};
    case NumPreset::default_: return {189, 50, 26, 15, 9.5};
    case NumPreset::hard_x2: return {95, 27, 13, 33, 19};
    case NumPreset::hard_x4: return {52, 12.5, 6, 60, 38};
    case NumPreset::mix_x4: return {764, 206, 100, 60, 38};
  }
  return {};
}

void EnvSpec::validate() const {
  appearance.validate();
  for (double c : counts()) {
    if (!(c >= 0.0)) throw ConfigError("env: count targets must be non-negative");
  }
  if (world_size < 9) throw ConfigError("env: world_size must be at least 9");
  if (world == WorldKind::standard && world_size != 64) {
    throw ConfigError("env: the standard world is 64x64");
  }
  if (episode_cap && *episode_cap < 1) throw ConfigError("env: episode_cap must be positive");
}

json to_json(const EnvSpec& spec) {
  json j;
  json app = json::object();
  for (std::size_t c = 0; c < kNumVariantClasses; ++c) {
    app[std::string(kVariantClassNames[c])] = spec.appearance.probs[c];
  }
  j["appearance"] = app;
  j["numbers"] = std::string(name(spec.numbers));
  if (spec.custom_counts) {
    json counts = json::object();
    for (std::size_t c = 0; c < kNumCountClasses; ++c) {
      counts[std::string(kCountClassNames[c])] = (*spec.custom_counts)[c];
    }
    j["counts"] = counts;
  }
  j["show_inventory"] = spec.show_inventory;
  j["seed_policy"] = {
      {"mode", spec.seed_policy.mode == SeedPolicy::Mode::fixed ? "fixed" : "per_episode"},
      {"base_seed", spec.seed_policy.base_seed}};
  j["world"] = {{"kind", spec.world == WorldKind::mini ? "mini" : "standard"},
                {"size", spec.world_size}};
  if (spec.episode_cap) j["episode_cap"] = *spec.episode_cap;
  return j;
}

EnvSpec env_spec_from_json(const json& j) {
  EnvSpec s;
  try {
    if (j.contains("preset")) s = env_preset(j.at("preset").get<std::string>());
    if (j.contains("appearance")) {
      const auto& app = j.at("appearance");
      if (app.is_string()) {
        s.appearance = env_preset(app.get<std::string>()).appearance;
      } else {
        for (const auto& [k, v] : app.items()) {
          auto cls = parse_variant_class(k);
          if (!cls) throw ConfigError("env: unknown appearance class '" + k + "'");
          s.appearance.probs[static_cast<std::size_t>(*cls)] = v.get<VariantProbs>();
        }
      }
    }
    if (j.contains("numbers")) {
      const auto n = j.at("numbers").get<std::string>();
      auto p = parse_num_preset(n);
      if (!p) throw ConfigError("env: unknown numbers preset '" + n + "'");
      s.numbers = *p;
    }
    if (j.contains("counts")) {
      CountTargets t = count_targets(s.numbers);
      for (const auto& [k, v] : j.at("counts").items()) {
        auto cls = parse_count_class(k);
        if (!cls) throw ConfigError("env: unknown count class '" + k + "'");
        t[static_cast<std::size_t>(*cls)] = v.get<double>();
      }
      s.custom_counts = t;
    }
    if (j.contains("show_inventory")) s.show_inventory = j.at("show_inventory").get<bool>();
    if (j.contains("seed_policy")) {
      const auto& sp = j.at("seed_policy");
      const auto mode = sp.value("mode", std::string("per_episode"));
      if (mode == "fixed") {
        s.seed_policy.mode = SeedPolicy::Mode::fixed;
      } else if (mode == "per_episode") {
        s.seed_policy.mode = SeedPolicy::Mode::per_episode;
      } else {
        throw ConfigError("env: unknown seed policy '" + mode + "'");
      }
      s.seed_policy.base_seed = sp.value("base_seed", std::uint64_t{0});
    }
    if (j.contains("world")) {
      const auto& w = j.at("world");
      const auto kind = w.value("kind", std::string("standard"));
      if (kind == "mini") {
        s.world = WorldKind::mini;
      } else if (kind == "standard") {
        s.world = WorldKind::standard;
      } else {
        throw ConfigError("env: unknown world kind '" + kind + "'");
      }
      s.world_size = w.value("size", s.world == WorldKind::mini ? 16 : 64);
    }
    if (j.contains("episode_cap")) s.episode_cap = j.at("episode_cap").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("env: ") + e.what());
  }
  s.validate();
  return s;
}

std::string print_env_spec(const EnvSpec& spec) { return to_json(spec).dump(); }

EnvSpec parse_env_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("env: malformed JSON: ") + e.what());
  }
  return env_spec_from_json(j);
}

std::uint64_t EnvSpec::digest() const { return fnv1a(print_env_spec(*this)); }

namespace {

EnvSpec with_appearance(AppearanceDist d) {
  EnvSpec s;
  s.appearance = d;
  return s;
}

EnvSpec with_numbers(NumPreset p) {
  EnvSpec s;
  s.numbers = p;
  return s;
}

AppearanceDist eval_ood() { return AppearanceDist::all({0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}); }

std::vector<ScenarioPair> make_presets() {
  std::vector<ScenarioPair> out;
  out.push_back({"in_distribution", ScenarioKind::in_distribution, 1,
                 with_appearance(AppearanceDist::base()),
                 with_appearance(AppearanceDist::base())});
  const std::array<std::pair<const char*, VariantProbs>, 7> train = {{
      {"app_o1_25", {0.25, 0.25, 0.25, 0.25}},
      {"app_o1_52", {0.52, 0.16, 0.16, 0.16}},
      {"app_o1_76", {0.76, 0.08, 0.08, 0.08}},
      {"app_o1_88", {0.88, 0.04, 0.04, 0.04}},
      {"app_o1_94", {0.94, 0.02, 0.02, 0.02}},
      {"app_o1_97", {0.97, 0.01, 0.01, 0.01}},
      {"app_o1_100", {1.0, 0.0, 0.0, 0.0}},
  }};
  int index = 2;
  for (const auto& [n, p] : train) {
    out.push_back({n, ScenarioKind::appearance, index++, with_appearance(AppearanceDist::all(p)),
                   with_appearance(eval_ood())});
  }
  const std::array<std::tuple<const char*, NumPreset, NumPreset>, 8> nums = {{
      {"num_easy_x2_to_default", NumPreset::easy_x2, NumPreset::default_},
      {"num_easy_x4_to_default", NumPreset::easy_x4, NumPreset::default_},
      {"num_mix_x4_to_default", NumPreset::mix_x4, NumPreset::default_},
      {"num_default_to_mix_x4", NumPreset::default_, NumPreset::mix_x4},
      {"num_default_to_easy_x2", NumPreset::default_, NumPreset::easy_x2},
      {"num_default_to_easy_x4", NumPreset::default_, NumPreset::easy_x4},
      {"num_easy_x2_to_hard_x2", NumPreset::easy_x2, NumPreset::hard_x2},
      {"num_easy_x4_to_hard_x4", NumPreset::easy_x4, NumPreset::hard_x4},
  }};
  index = 1;
  for (const auto& [n, tr, ev] : nums) {
    out.push_back({n, ScenarioKind::numbers, index++, with_numbers(tr), with_numbers(ev)});
  }
  return out;
}

}  // namespace

std::vector<ScenarioPair> builtin_presets() {
  static const std::vector<ScenarioPair> presets = make_presets();
  return presets;
}

const ScenarioPair& find_scenario(std::string_view name) {
  static const std::vector<ScenarioPair> presets = make_presets();
  for (const auto& p : presets) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

EnvSpec env_preset(std::string_view name) {
  EnvSpec spec;
  std::size_t start = 0;
  while (start <= name.size()) {
    const std::size_t plus = name.find('+', start);
    const std::string_view part =
        name.substr(start, plus == std::string_view::npos ? std::string_view::npos : plus - start);
    if (auto p = parse_num_preset(part)) {
      spec.numbers = *p;
    } else if (part == "base" || part == "o1_100") {
      spec.appearance = AppearanceDist::base();
    } else if (part == "uniform" || part == "o1_25") {
      spec.appearance = AppearanceDist::all({0.25, 0.25, 0.25, 0.25});
    } else if (part == "eval_ood") {
      spec.appearance = eval_ood();
    } else if (part.starts_with("o1_")) {
      const std::string pct(part.substr(3));
      const std::array<std::pair<const char*, VariantProbs>, 5> table = {{
          {"52", {0.52, 0.16, 0.16, 0.16}},
          {"76", {0.76, 0.08, 0.08, 0.08}},
          {"88", {0.88, 0.04, 0.04, 0.04}},
          {"94", {0.94, 0.02, 0.02, 0.02}},
          {"97", {0.97, 0.01, 0.01, 0.01}},
      }};
      bool found = false;
      for (const auto& [k, p] : table) {
        if (pct == k) {
          spec.appearance = AppearanceDist::all(p);
          found = true;
        }
      }
      if (!found) throw ConfigError("unknown appearance preset '" + std::string(part) + "'");
    } else if (part == "no_inventory") {
      spec.show_inventory = false;
    } else if (part == "mini") {
      spec.world = WorldKind::mini;
      spec.world_size = 16;
      spec.custom_counts = CountTargets{20, 0, 0, 0, 0};
      spec.episode_cap = 200;
    } else {
      throw ConfigError("unknown preset '" + std::string(part) + "'");
    }
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  spec.validate();
  return spec;
}

int sample_variant(VariantClass cls, const AppearanceDist& dist, Rng& rng) {
  const auto& p = dist.of(cls);
  const double u = rng.uniform();
  double acc = 0.0;
  int last_nonzero = 1;
  for (int i = 0; i < kNumVariants; ++i) {
    if (p[i] > 0.0) last_nonzero = i + 1;
    acc += p[i];
    if (u < acc) return i + 1;
  }
  // Rounding left u above the cumulative sum; fall back to the last variant
  // with positive mass.
  return last_nonzero;
}

}  // namespace crafter
