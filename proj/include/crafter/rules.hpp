#pragma once

// Declarative game rules: interaction, placement and crafting requirements,
// survival constants and creature behaviour parameters. Loaded from a
// versioned JSON document; the built-in defaults are shipped as
// data/rules.json.

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "crafter/types.hpp"

namespace crafter {

inline constexpr int kRulesVersion = 1;

using ResourceCounts = std::array<int, kNumResources>;
using MaterialSet = std::bitset<kNumMaterials>;

inline bool contains(const MaterialSet& set, Material m) {
  return set.test(static_cast<std::size_t>(m));
}

// "do" facing a material.
struct CollectRule {
  bool enabled = false;
  ResourceCounts require{};
  ResourceCounts receive{};
  Material leaves = Material::path;
  double probability = 1.0;
  std::optional<Achievement> achievement;
};

// What a placement action puts into the target cell.
enum class PlaceResult : std::uint8_t { material, plant };

struct PlaceRule {
  ResourceCounts uses{};
  MaterialSet where;
  MaterialSet nearby;
  PlaceResult result = PlaceResult::material;
  Material material = Material::stone;
  Achievement achievement = Achievement::place_stone;
};

struct MakeRule {
  ResourceCounts uses{};
  MaterialSet nearby;
  Resource gives = Resource::wood_pickaxe;
  int amount = 1;
  Achievement achievement = Achievement::make_wood_pickaxe;
};

// Counters are kept in half-step units so that sleeping (half rate) stays in
// integer arithmetic.
struct VitalsRules {
  int hunger_threshold = 25;
  int thirst_threshold = 20;
  int fatigue_threshold = 30;
  int rest_threshold = -10;
  int recover_threshold = 25;
  int degen_threshold = -15;
};

struct CombatRules {
  // Damage dealt by the player with no sword, wood, stone and iron sword.
  std::array<int, 4> player_damage{1, 2, 3, 5};
  int zombie_damage = 2;
  int zombie_sleep_damage = 7;
  int zombie_cooldown = 5;
  int arrow_damage = 2;
  int cow_health = 3;
  int zombie_health = 5;
  int skeleton_health = 3;
  int eat_cow_food = 6;
  int eat_plant_food = 4;
};

struct CreatureRules {
  double cow_move_prob = 0.5;
  int zombie_chase_radius_day = 4;
  int zombie_chase_radius_night = 8;
  double zombie_chase_prob = 0.8;
  double zombie_move_prob = 0.5;
  int skeleton_range = 4;
  double skeleton_shoot_prob = 0.25;
  int skeleton_reload = 4;
  double skeleton_move_prob = 0.3;
  int plant_ripe_steps = 300;
  // Per-creature, per-step despawn probability of the population balancer.
  double despawn_rate = 0.01;
  // Share of the zombie spawn rate modulated by darkness (0 = constant).
  double zombie_night_weight = 0.5;
  // Population cap = ceil(cap_factor * target) + cap_slack.
  double cap_factor = 3.0;
  int cap_slack = 10;
  int spawn_attempts = 16;
};

struct Rules {
  int version = kRulesVersion;
  int inventory_max = 9;
  int nearby_radius = 1;
  int episode_cap = 10000;
  int day_length = 300;
  MaterialSet player_walkable;
  MaterialSet creature_walkable;
  MaterialSet arrow_free;
  MaterialSet deadly;
  std::array<CollectRule, kNumMaterials> collect{};
  std::array<std::optional<PlaceRule>, kNumActions> place{};
  std::array<std::optional<MakeRule>, kNumActions> make{};
  VitalsRules vitals;
  CombatRules combat;
  CreatureRules creatures;

  const CollectRule& collect_rule(Material m) const {
    return collect[static_cast<std::size_t>(m)];
  }
  const std::optional<PlaceRule>& place_rule(Action a) const {
    return place[static_cast<std::size_t>(a)];
  }
  const std::optional<MakeRule>& make_rule(Action a) const {
    return make[static_cast<std::size_t>(a)];
  }
};

// The shipped rules document as JSON text.
const std::string& default_rules_json();

Rules parse_rules(const std::string& json_text);
Rules load_rules(const std::filesystem::path& path);
std::shared_ptr<const Rules> default_rules();

}  // namespace crafter
