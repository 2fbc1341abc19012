#pragma once

// Core enumerations shared by every layer of the simulator: cell materials,
// inventory items, the 17 actions and the 22 achievements, plus name tables.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crafter {

enum class Material : std::uint8_t {
  water,
  sand,
  grass,
  tree,
  path,
  stone,
  coal,
  iron,
  diamond,
  lava,
  table,
  furnace,
};
inline constexpr std::size_t kNumMaterials = 12;

// Vitals and inventory items share one index space, matching the layout of
// the inventory strip: four vitals first, then twelve items.
enum class Resource : std::uint8_t {
  health,
  food,
  drink,
  energy,
  wood,
  stone,
  coal,
  iron,
  diamond,
  sapling,
  wood_pickaxe,
  stone_pickaxe,
  iron_pickaxe,
  wood_sword,
  stone_sword,
  iron_sword,
};
inline constexpr std::size_t kNumResources = 16;
inline constexpr std::size_t kNumVitals = 4;

constexpr bool is_vital(Resource r) { return static_cast<std::size_t>(r) < kNumVitals; }

enum class Action : std::uint8_t {
  noop,
  move_up,
  move_down,
  move_left,
  move_right,
  do_,
  sleep,
  place_stone,
  place_table,
  place_furnace,
  place_plant,
  make_wood_pickaxe,
  make_stone_pickaxe,
  make_iron_pickaxe,
  make_wood_sword,
  make_stone_sword,
  make_iron_sword,
};
inline constexpr std::size_t kNumActions = 17;

enum class Achievement : std::uint8_t {
  collect_coal,
  collect_diamond,
  collect_drink,
  collect_iron,
  collect_sapling,
  collect_stone,
  collect_wood,
  defeat_skeleton,
  defeat_zombie,
  eat_cow,
  eat_plant,
  make_iron_pickaxe,
  make_iron_sword,
  make_stone_pickaxe,
  make_stone_sword,
  make_wood_pickaxe,
  make_wood_sword,
  place_furnace,
  place_plant,
  place_stone,
  place_table,
  wake_up,
};
inline constexpr std::size_t kNumAchievements = 22;

enum class CreatureKind : std::uint8_t { cow, zombie, skeleton, arrow, plant };
inline constexpr std::size_t kNumCreatureKinds = 5;

// Object classes whose appearance can vary between four variants.
enum class VariantClass : std::uint8_t { tree, cow, zombie, stone, coal, skeleton };
inline constexpr std::size_t kNumVariantClasses = 6;

// Classes with a population / count target.
enum class CountClass : std::uint8_t { tree, coal, cow, zombie, skeleton };
inline constexpr std::size_t kNumCountClasses = 5;

struct Pos {
  int x = 0;
  int y = 0;
  friend constexpr bool operator==(Pos, Pos) = default;
  friend constexpr Pos operator+(Pos a, Pos b) { return {a.x + b.x, a.y + b.y}; }
};

enum class Facing : std::uint8_t { left, right, up, down };

constexpr Pos facing_offset(Facing f) {
  switch (f) {
    case Facing::left: return {-1, 0};
    case Facing::right: return {1, 0};
    case Facing::up: return {0, -1};
    case Facing::down: return {0, 1};
  }
  return {0, 0};
}

inline constexpr std::array<std::string_view, kNumMaterials> kMaterialNames = {
    "water", "sand", "grass", "tree",    "path",  "stone",
    "coal",  "iron", "diamond", "lava", "table", "furnace"};

inline constexpr std::array<std::string_view, kNumResources> kResourceNames = {
    "health",       "food",          "drink",        "energy",
    "wood",         "stone",         "coal",         "iron",
    "diamond",      "sapling",       "wood_pickaxe", "stone_pickaxe",
    "iron_pickaxe", "wood_sword",    "stone_sword",  "iron_sword"};

inline constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "noop",
    "move_up",
    "move_down",
    "move_left",
    "move_right",
    "do",
    "sleep",
    "place_stone",
    "place_table",
    "place_furnace",
    "place_plant",
    "make_wood_pickaxe",
    "make_stone_pickaxe",
    "make_iron_pickaxe",
    "make_wood_sword",
    "make_stone_sword",
    "make_iron_sword"};

inline constexpr std::array<std::string_view, kNumAchievements> kAchievementNames = {
    "collect_coal",      "collect_diamond",  "collect_drink",     "collect_iron",
    "collect_sapling",   "collect_stone",    "collect_wood",      "defeat_skeleton",
    "defeat_zombie",     "eat_cow",          "eat_plant",         "make_iron_pickaxe",
    "make_iron_sword",   "make_stone_pickaxe", "make_stone_sword", "make_wood_pickaxe",
    "make_wood_sword",   "place_furnace",    "place_plant",       "place_stone",
    "place_table",       "wake_up"};

inline constexpr std::array<std::string_view, kNumCreatureKinds> kCreatureNames = {
    "cow", "zombie", "skeleton", "arrow", "plant"};

inline constexpr std::array<std::string_view, kNumVariantClasses> kVariantClassNames = {
    "tree", "cow", "zombie", "stone", "coal", "skeleton"};

inline constexpr std::array<std::string_view, kNumCountClasses> kCountClassNames = {
    "tree", "coal", "cow", "zombie", "skeleton"};

template <typename E, std::size_t N>
constexpr std::string_view enum_name(E e, const std::array<std::string_view, N>& names) {
  return names[static_cast<std::size_t>(e)];
}

template <typename E, std::size_t N>
constexpr std::optional<E> enum_parse(std::string_view s,
                                      const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

inline std::string_view name(Material m) { return enum_name(m, kMaterialNames); }
inline std::string_view name(Resource r) { return enum_name(r, kResourceNames); }
inline std::string_view name(Action a) { return enum_name(a, kActionNames); }
inline std::string_view name(Achievement a) { return enum_name(a, kAchievementNames); }
inline std::string_view name(CreatureKind k) { return enum_name(k, kCreatureNames); }
inline std::string_view name(VariantClass c) { return enum_name(c, kVariantClassNames); }
inline std::string_view name(CountClass c) { return enum_name(c, kCountClassNames); }

inline std::optional<Material> parse_material(std::string_view s) {
  return enum_parse<Material>(s, kMaterialNames);
}
inline std::optional<Resource> parse_resource(std::string_view s) {
  return enum_parse<Resource>(s, kResourceNames);
}
inline std::optional<Action> parse_action(std::string_view s) {
  return enum_parse<Action>(s, kActionNames);
}
inline std::optional<Achievement> parse_achievement(std::string_view s) {
  return enum_parse<Achievement>(s, kAchievementNames);
}
inline std::optional<VariantClass> parse_variant_class(std::string_view s) {
  return enum_parse<VariantClass>(s, kVariantClassNames);
}
inline std::optional<CountClass> parse_count_class(std::string_view s) {
  return enum_parse<CountClass>(s, kCountClassNames);
}

// Thrown when a caller breaks an operation's precondition (e.g. stepping a
// finished episode).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Thrown for invalid declarative configuration (rules, env specs, presets).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown for inputs outside an operation's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace crafter
