#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "crafter/types.hpp"

namespace crafter {

// Static grid of materials plus per-cell appearance variants and the
// candidate cells in which each creature class may (re)spawn.
struct WorldMap {
  int width = 0;
  int height = 0;
  std::vector<Material> cells;
  // Appearance variant 1..4 for cells whose material has variants.
  std::vector<std::uint8_t> variants;
  // Cell indices per spawning class: cow, zombie, skeleton.
  std::array<std::vector<std::int32_t>, 3> spawn_zones;
  Pos start;

  WorldMap() = default;
  WorldMap(int w, int h, Material fill)
      : width(w), height(h), cells(static_cast<std::size_t>(w * h), fill),
        variants(static_cast<std::size_t>(w * h), 1) {}

  bool in_bounds(Pos p) const { return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height; }
  int index(Pos p) const { return p.y * width + p.x; }
  Pos pos_of(int idx) const { return {idx % width, idx / width}; }
  Material at(Pos p) const { return cells[static_cast<std::size_t>(index(p))]; }
  std::uint8_t variant_at(Pos p) const { return variants[static_cast<std::size_t>(index(p))]; }
  void set(Pos p, Material m, std::uint8_t variant = 1) {
    cells[static_cast<std::size_t>(index(p))] = m;
    variants[static_cast<std::size_t>(index(p))] = variant;
  }

  friend bool operator==(const WorldMap&, const WorldMap&) = default;
};

inline constexpr std::size_t spawn_zone_index(CreatureKind k) {
  return k == CreatureKind::cow ? 0 : (k == CreatureKind::zombie ? 1 : 2);
}

struct Creature {
  CreatureKind kind = CreatureKind::cow;
  Pos pos;
  int health = 0;
  std::uint8_t variant = 1;
  Facing facing = Facing::down;
  int cooldown = 0;
  // Growth counter for plants.
  int grown = 0;

  friend bool operator==(const Creature&, const Creature&) = default;
};

// Daylight level in [0, 1] at a given step; 1 is full day. A rational sine
// approximation keeps the value bit-identical across math libraries.
double daylight(std::int64_t step, int day_length);

// Multiplier on the zombie spawn rate at a given step. Its mean over one full
// day is exactly 1, so the long-run zombie population matches its target.
double zombie_rate_factor(std::int64_t step, int day_length, double night_weight);

}  // namespace crafter
