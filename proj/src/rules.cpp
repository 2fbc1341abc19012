#include "crafter/rules.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace crafter {
namespace {

using nlohmann::json;

const char* const kDefaultRules = R"json({
  "version": 1,
  "inventory_max": 9,
  "nearby_radius": 1,
  "episode_cap": 10000,
  "day_length": 300,
  "player_walkable": ["grass", "sand", "path", "lava"],
  "creature_walkable": ["grass", "sand", "path"],
  "arrow_free": ["grass", "sand", "path", "water", "lava"],
  "deadly": ["lava"],
  "collect": {
    "tree":    {"require": {}, "receive": {"wood": 1}, "leaves": "tree", "achievement": "collect_wood"},
    "stone":   {"require": {"wood_pickaxe": 1}, "receive": {"stone": 1}, "leaves": "path", "achievement": "collect_stone"},
    "coal":    {"require": {"wood_pickaxe": 1}, "receive": {"coal": 1}, "leaves": "path", "achievement": "collect_coal"},
    "iron":    {"require": {"stone_pickaxe": 1}, "receive": {"iron": 1}, "leaves": "path", "achievement": "collect_iron"},
    "diamond": {"require": {"iron_pickaxe": 1}, "receive": {"diamond": 1}, "leaves": "path", "achievement": "collect_diamond"},
    "water":   {"require": {}, "receive": {"drink": 1}, "leaves": "water", "achievement": "collect_drink"},
    "grass":   {"require": {}, "receive": {"sapling": 1}, "leaves": "grass", "probability": 0.1, "achievement": "collect_sapling"}
  },
  "place": {
    "place_stone":   {"uses": {"stone": 1}, "where": ["grass", "sand", "path", "water", "lava"], "result": "stone"},
    "place_table":   {"uses": {"wood": 2}, "where": ["grass", "sand", "path"], "result": "table"},
    "place_furnace": {"uses": {"stone": 1}, "where": ["grass", "sand", "path"], "nearby": ["table"], "result": "furnace"},
    "place_plant":   {"uses": {"sapling": 1}, "where": ["grass"], "result": "plant"}
  },
  "make": {
    "make_wood_pickaxe":  {"uses": {"wood": 1}, "nearby": ["table"], "gives": "wood_pickaxe"},
    "make_stone_pickaxe": {"uses": {"wood": 1, "stone": 1}, "nearby": ["table"], "gives": "stone_pickaxe"},
    "make_iron_pickaxe":  {"uses": {"wood": 1, "coal": 1, "iron": 1}, "nearby": ["table", "furnace"], "gives": "iron_pickaxe"},
    "make_wood_sword":    {"uses": {"wood": 1}, "nearby": ["table"], "gives": "wood_sword"},
    "make_stone_sword":   {"uses": {"wood": 1, "stone": 1}, "nearby": ["table"], "gives": "stone_sword"},
    "make_iron_sword":    {"uses": {"wood": 1, "coal": 1, "iron": 1}, "nearby": ["table", "furnace"], "gives": "iron_sword"}
  },
  "vitals": {
    "hunger_threshold": 25,
    "thirst_threshold": 20,
    "fatigue_threshold": 30,
    "rest_threshold": -10,
    "recover_threshold": 25,
    "degen_threshold": -15
  },
  "combat": {
    "player_damage": [1, 2, 3, 5],
    "zombie_damage": 2,
    "zombie_sleep_damage": 7,
    "zombie_cooldown": 5,
    "arrow_damage": 2,
    "cow_health": 3,
    "zombie_health": 5,
    "skeleton_health": 3,
    "eat_cow_food": 6,
    "eat_plant_food": 4
  },
  "creatures": {
    "cow_move_prob": 0.5,
    "zombie_chase_radius_day": 4,
    "zombie_chase_radius_night": 8,
    "zombie_chase_prob": 0.8,
    "zombie_move_prob": 0.5,
    "skeleton_range": 4,
    "skeleton_shoot_prob": 0.25,
    "skeleton_reload": 4,
    "skeleton_move_prob": 0.3,
    "plant_ripe_steps": 300,
    "despawn_rate": 0.01,
    "zombie_night_weight": 0.5,
    "cap_factor": 3.0,
    "cap_slack": 10,
    "spawn_attempts": 16
  }
}
)json";

Material material_or_throw(const std::string& s) {
  auto m = parse_material(s);
  if (!m) throw ConfigError("rules: unknown material '" + s + "'");
  return *m;
}

MaterialSet material_set(const json& j, const char* key) {
  MaterialSet set;
  if (!j.contains(key)) return set;
  for (const auto& v : j.at(key)) set.set(static_cast<std::size_t>(material_or_throw(v)));
  return set;
}

ResourceCounts resource_counts(const json& j, const char* key) {
  ResourceCounts out{};
  if (!j.contains(key)) return out;
  for (const auto& [k, v] : j.at(key).items()) {
    auto r = parse_resource(k);
    if (!r) throw ConfigError("rules: unknown resource '" + k + "'");
    const int n = v.get<int>();
    if (n < 0) throw ConfigError("rules: negative count for '" + k + "'");
    out[static_cast<std::size_t>(*r)] = n;
  }
  return out;
}

Achievement achievement_or_throw(const std::string& s) {
  auto a = parse_achievement(s);
  if (!a) throw ConfigError("rules: unknown achievement '" + s + "'");
  return *a;
}

Action action_or_throw(const std::string& s) {
  auto a = parse_action(s);
  if (!a) throw ConfigError("rules: unknown action '" + s + "'");
  return *a;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

const std::string& default_rules_json() {
  static const std::string text = kDefaultRules;
  return text;
}

Rules parse_rules(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("rules: malformed JSON: ") + e.what());
  }
  Rules r;
  try {
    r.version = j.value("version", 0);
    if (r.version != kRulesVersion) {
      throw ConfigError("rules: unsupported version " + std::to_string(r.version));
    }
    read_opt(j, "inventory_max", r.inventory_max);
    read_opt(j, "nearby_radius", r.nearby_radius);
    read_opt(j, "episode_cap", r.episode_cap);
    read_opt(j, "day_length", r.day_length);
    r.player_walkable = material_set(j, "player_walkable");
    r.creature_walkable = material_set(j, "creature_walkable");
    r.arrow_free = material_set(j, "arrow_free");
    r.deadly = material_set(j, "deadly");

    if (j.contains("collect")) {
      for (const auto& [mat, rule] : j.at("collect").items()) {
        CollectRule c;
        c.enabled = true;
        c.require = resource_counts(rule, "require");
        c.receive = resource_counts(rule, "receive");
        c.leaves = material_or_throw(rule.at("leaves").get<std::string>());
        c.probability = rule.value("probability", 1.0);
        if (rule.contains("achievement")) {
          c.achievement = achievement_or_throw(rule.at("achievement").get<std::string>());
        }
        r.collect[static_cast<std::size_t>(material_or_throw(mat))] = c;
      }
    }
    if (j.contains("place")) {
      for (const auto& [act, rule] : j.at("place").items()) {
        const Action a = action_or_throw(act);
        PlaceRule p;
        p.uses = resource_counts(rule, "uses");
        p.where = material_set(rule, "where");
        p.nearby = material_set(rule, "nearby");
        const auto result = rule.at("result").get<std::string>();
        if (result == "plant") {
          p.result = PlaceResult::plant;
        } else {
          p.result = PlaceResult::material;
          p.material = material_or_throw(result);
        }
        p.achievement = achievement_or_throw(rule.value("achievement", act));
        r.place[static_cast<std::size_t>(a)] = p;
      }
    }
    if (j.contains("make")) {
      for (const auto& [act, rule] : j.at("make").items()) {
        const Action a = action_or_throw(act);
        MakeRule m;
        m.uses = resource_counts(rule, "uses");
        m.nearby = material_set(rule, "nearby");
        const auto gives = rule.at("gives").get<std::string>();
        auto res = parse_resource(gives);
        if (!res) throw ConfigError("rules: unknown resource '" + gives + "'");
        m.gives = *res;
        m.amount = rule.value("amount", 1);
        m.achievement = achievement_or_throw(rule.value("achievement", act));
        r.make[static_cast<std::size_t>(a)] = m;
      }
    }
    if (j.contains("vitals")) {
      const auto& v = j.at("vitals");
      read_opt(v, "hunger_threshold", r.vitals.hunger_threshold);
      read_opt(v, "thirst_threshold", r.vitals.thirst_threshold);
      read_opt(v, "fatigue_threshold", r.vitals.fatigue_threshold);
      read_opt(v, "rest_threshold", r.vitals.rest_threshold);
      read_opt(v, "recover_threshold", r.vitals.recover_threshold);
      read_opt(v, "degen_threshold", r.vitals.degen_threshold);
    }
    if (j.contains("combat")) {
      const auto& c = j.at("combat");
      read_opt(c, "player_damage", r.combat.player_damage);
      read_opt(c, "zombie_damage", r.combat.zombie_damage);
      read_opt(c, "zombie_sleep_damage", r.combat.zombie_sleep_damage);
      read_opt(c, "zombie_cooldown", r.combat.zombie_cooldown);
      read_opt(c, "arrow_damage", r.combat.arrow_damage);
      read_opt(c, "cow_health", r.combat.cow_health);
      read_opt(c, "zombie_health", r.combat.zombie_health);
      read_opt(c, "skeleton_health", r.combat.skeleton_health);
      read_opt(c, "eat_cow_food", r.combat.eat_cow_food);
      read_opt(c, "eat_plant_food", r.combat.eat_plant_food);
    }
    if (j.contains("creatures")) {
      const auto& c = j.at("creatures");
      auto& cr = r.creatures;
      read_opt(c, "cow_move_prob", cr.cow_move_prob);
      read_opt(c, "zombie_chase_radius_day", cr.zombie_chase_radius_day);
      read_opt(c, "zombie_chase_radius_night", cr.zombie_chase_radius_night);
      read_opt(c, "zombie_chase_prob", cr.zombie_chase_prob);
      read_opt(c, "zombie_move_prob", cr.zombie_move_prob);
      read_opt(c, "skeleton_range", cr.skeleton_range);
      read_opt(c, "skeleton_shoot_prob", cr.skeleton_shoot_prob);
      read_opt(c, "skeleton_reload", cr.skeleton_reload);
      read_opt(c, "skeleton_move_prob", cr.skeleton_move_prob);
      read_opt(c, "plant_ripe_steps", cr.plant_ripe_steps);
      read_opt(c, "despawn_rate", cr.despawn_rate);
      read_opt(c, "zombie_night_weight", cr.zombie_night_weight);
      read_opt(c, "cap_factor", cr.cap_factor);
      read_opt(c, "cap_slack", cr.cap_slack);
      read_opt(c, "spawn_attempts", cr.spawn_attempts);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("rules: ") + e.what());
  }
  if (r.inventory_max < 1 || r.episode_cap < 1 || r.day_length < 1 || r.nearby_radius < 0) {
    throw ConfigError("rules: inventory_max, episode_cap and day_length must be positive");
  }
  if (r.creatures.despawn_rate <= 0.0 || r.creatures.despawn_rate > 1.0) {
    throw ConfigError("rules: despawn_rate must lie in (0, 1]");
  }
  return r;
}

Rules load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("rules: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_rules(ss.str());
}

std::shared_ptr<const Rules> default_rules() {
  static const auto rules = std::make_shared<const Rules>(parse_rules(default_rules_json()));
  return rules;
}

}  // namespace crafter
