#pragma once

// Out-of-distribution environment families: per-class appearance variant
// distributions and object-count scalings, bundled into an EnvSpec.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crafter/rng.hpp"
#include "crafter/types.hpp"

namespace crafter {

inline constexpr int kNumVariants = 4;
using VariantProbs = std::array<double, kNumVariants>;

struct AppearanceDist {
  std::array<VariantProbs, kNumVariantClasses> probs{};

  // Every class uses the given vector.
  static AppearanceDist all(const VariantProbs& p);
  // Default game look: only variant 1.
  static AppearanceDist base() { return all({1.0, 0.0, 0.0, 0.0}); }
  // O1 with probability `o1`, remaining mass split evenly over O2..O4.
  static AppearanceDist skewed(double o1);

  const VariantProbs& of(VariantClass c) const { return probs[static_cast<std::size_t>(c)]; }
  // Throws ConfigError unless every vector is non-negative and sums to 1.
  void validate() const;
  friend bool operator==(const AppearanceDist&, const AppearanceDist&) = default;
};

enum class NumPreset : std::uint8_t { default_, easy_x2, easy_x4, hard_x2, hard_x4, mix_x4 };
inline constexpr std::array<std::string_view, 6> kNumPresetNames = {
    "default", "easy_x2", "easy_x4", "hard_x2", "hard_x4", "mix_x4"};

inline std::string_view name(NumPreset p) { return kNumPresetNames[static_cast<std::size_t>(p)]; }
std::optional<NumPreset> parse_num_preset(std::string_view s);

// Per-class object counts indexed by CountClass (tree, coal, cow, zombie,
// skeleton). Tree and coal are exact placement counts after rounding; the
// creature entries are expected concurrent populations.
using CountTargets = std::array<double, kNumCountClasses>;

CountTargets count_targets(NumPreset p);

enum class WorldKind : std::uint8_t { standard, mini };

struct SeedPolicy {
  enum class Mode : std::uint8_t { per_episode, fixed } mode = Mode::per_episode;
  std::uint64_t base_seed = 0;
  friend bool operator==(const SeedPolicy&, const SeedPolicy&) = default;
};

struct EnvSpec {
  AppearanceDist appearance = AppearanceDist::base();
  NumPreset numbers = NumPreset::default_;
  // Overrides the preset's targets when set.
  std::optional<CountTargets> custom_counts;
  bool show_inventory = true;
  SeedPolicy seed_policy;
  WorldKind world = WorldKind::standard;
  int world_size = 64;
  // Overrides the rules' episode cap when set.
  std::optional<int> episode_cap;

  CountTargets counts() const { return custom_counts ? *custom_counts : count_targets(numbers); }
  void validate() const;
  // Stable 64-bit digest of the canonical JSON form.
  std::uint64_t digest() const;
  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

nlohmann::json to_json(const EnvSpec& spec);
EnvSpec env_spec_from_json(const nlohmann::json& j);
std::string print_env_spec(const EnvSpec& spec);
EnvSpec parse_env_spec(const std::string& text);

enum class ScenarioKind : std::uint8_t { in_distribution, appearance, numbers };

struct ScenarioPair {
  std::string name;
  ScenarioKind kind = ScenarioKind::in_distribution;
  // 1-based position within its table (the in-distribution pair is
  // appearance pair 1).
  int index = 0;
  EnvSpec train;
  EnvSpec eval;
};

// The in-distribution pair, 7 appearance pairs and 8 count pairs.
std::vector<ScenarioPair> builtin_presets();
const ScenarioPair& find_scenario(std::string_view name);

// Single-environment shorthand: a count preset name ("default", "easy_x4"),
// an appearance name ("o1_97", "uniform", "eval_ood"), "mini", or several
// joined with '+', e.g. "hard_x2+o1_52".
EnvSpec env_preset(std::string_view name);

// Categorical draw over variants 1..4; consumes exactly one draw from rng.
int sample_variant(VariantClass cls, const AppearanceDist& dist, Rng& rng);

}  // namespace crafter
