#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "crafter/ood.hpp"
#include "crafter/rules.hpp"
#include "crafter/world.hpp"

namespace crafter {

// Frequencies (cells per noise period) of the terrain layers.
struct NoiseScales {
  double terrain = 15.0;
  double terrain_detail = 5.0;
  double forest = 7.0;
  double caves = 7.0;
  double tunnels = 3.0;
  double ore = 6.0;
  double sand = 9.0;
  double lava = 5.0;
  friend bool operator==(const NoiseScales&, const NoiseScales&) = default;
};

struct GenParams {
  std::uint64_t seed = 0;
  CountTargets count_targets = crafter::count_targets(NumPreset::default_);
  NoiseScales noise_scales;
  AppearanceDist appearance = AppearanceDist::base();
  WorldKind kind = WorldKind::standard;
  int size = 64;

  static GenParams from_spec(const EnvSpec& spec, std::uint64_t seed);
};

struct GeneratedWorld {
  WorldMap map;
  std::vector<Creature> creatures;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

GeneratedWorld generate(const GenParams& params, const Rules& rules);
GeneratedWorld generate(const GenParams& params);

std::map<Material, int> count_materials(const WorldMap& map);

// Round-half-up to the nearest integer count.
int rounded_count(double target);

// Number of creatures a class starts with at step 0.
int initial_population(CreatureKind kind, const CountTargets& targets, const Rules& rules);

}  // namespace crafter
