#pragma once

// Game state machine: player, creatures, day/night and the population
// balancer that keeps creature counts near their targets.

#include <bitset>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crafter/ood.hpp"
#include "crafter/rng.hpp"
#include "crafter/rules.hpp"
#include "crafter/world.hpp"

namespace crafter {

struct SimOptions {
  // Food, drink and energy decay and health regeneration.
  bool survival = true;
  // Creature AI and population balancing.
  bool creatures = true;
  // Diagnostic: the player never dies (health floored at 1, lava harmless).
  bool immortal = false;

  friend bool operator==(const SimOptions&, const SimOptions&) = default;
};

// Immutable per-episode configuration shared by copies of a WorldState.
struct SimContext {
  std::shared_ptr<const Rules> rules = default_rules();
  CountTargets targets = count_targets(NumPreset::default_);
  AppearanceDist appearance = AppearanceDist::base();
  SimOptions options;
  int episode_cap = 10000;
  WorldKind world = WorldKind::standard;
  int world_size = 64;

  static std::shared_ptr<const SimContext> from_spec(const EnvSpec& spec,
                                                     std::shared_ptr<const Rules> rules = default_rules(),
                                                     SimOptions options = {});
};

using AchievementSet = std::bitset<kNumAchievements>;

struct PlayerState {
  Pos pos;
  Facing facing = Facing::down;
  // Vitals (health, food, drink, energy) followed by items.
  ResourceCounts inventory{};
  bool sleeping = false;
  // Internal counters in half-step units.
  int hunger = 0;
  int thirst = 0;
  int fatigue = 0;
  int recover = 0;

  int health() const { return inventory[static_cast<std::size_t>(Resource::health)]; }
  int count(Resource r) const { return inventory[static_cast<std::size_t>(r)]; }

  friend bool operator==(const PlayerState&, const PlayerState&) = default;
};

struct StepEvents {
  // Achievement-triggering events this step (repeat triggers included).
  AchievementSet achieved;
  int health_delta = 0;
  bool died = false;

  bool has(Achievement a) const { return achieved.test(static_cast<std::size_t>(a)); }
};

struct WorldState {
  std::shared_ptr<const SimContext> ctx;
  WorldMap map;
  PlayerState player;
  std::vector<Creature> creatures;
  std::int64_t step_count = 0;
  double light = 1.0;
  bool dead = false;
  Rng rng_player;
  Rng rng_creatures;
  Rng rng_balance;

  // Index into `creatures` of the creature on a cell, if any.
  std::optional<std::size_t> creature_at(Pos p) const;
  int population(CreatureKind kind) const;
  const Rules& rules() const { return *ctx->rules; }

  // Rebuilds the cell occupancy index after external edits to `creatures`.
  void reindex();

  friend bool operator==(const WorldState& a, const WorldState& b);

 private:
  friend struct SimAccess;
  std::vector<std::int16_t> occupancy_;
};

// Fresh episode state from a generated world.
WorldState new_world(std::shared_ptr<const SimContext> ctx, std::uint64_t seed);
// State over a hand-built map (tests, micro-worlds).
WorldState world_from_map(std::shared_ptr<const SimContext> ctx, WorldMap map,
                          std::vector<Creature> creatures, std::uint64_t seed);

StepEvents step(WorldState& state, Action action);

struct Applicability {
  bool ok = false;
  std::string reason;
  explicit operator bool() const { return ok; }
};

Applicability can_apply(const WorldState& state, Action action);
bool is_terminal(const WorldState& state);

// Upper bound on concurrent creatures of a balanced class.
int population_cap(double target, const CreatureRules& rules);

// Digest of the complete state, used by replay checks.
std::uint64_t state_digest(const WorldState& state);

}  // namespace crafter
