#include "crafter/worldgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <queue>

#include "crafter/rng.hpp"

namespace crafter {

double daylight(std::int64_t step, int day_length) {
  // progress in [0, 1) is shifted so that an episode starts in the morning.
  const std::int64_t period = day_length;
  const std::int64_t shifted = (step + (3 * period) / 10) % period;
  const double u = static_cast<double>(shifted) / static_cast<double>(period);
  // |cos(pi u)| == sin(pi v) with v = frac(u + 0.5); Bhaskara's approximation.
  double v = u + 0.5;
  if (v >= 1.0) v -= 1.0;
  const double q = v * (1.0 - v);
  const double s = 16.0 * q / (5.0 - 4.0 * q);
  return 1.0 - s * s * s;
}

double zombie_rate_factor(std::int64_t step, int day_length, double night_weight) {
  double mean_dark = 0.0;
  for (int t = 0; t < day_length; ++t) mean_dark += 1.0 - daylight(t, day_length);
  mean_dark /= day_length;
  const double dark = 1.0 - daylight(step, day_length);
  return (1.0 - night_weight) + night_weight * dark / mean_dark;
}

GenParams GenParams::from_spec(const EnvSpec& spec, std::uint64_t seed) {
  GenParams p;
  p.seed = seed;
  p.count_targets = spec.counts();
  p.appearance = spec.appearance;
  p.kind = spec.world;
  p.size = spec.world_size;
  return p;
}

int rounded_count(double target) { return static_cast<int>(std::floor(target + 0.5)); }

int initial_population(CreatureKind kind, const CountTargets& targets, const Rules& rules) {
  switch (kind) {
    case CreatureKind::cow:
      return rounded_count(targets[static_cast<std::size_t>(CountClass::cow)]);
    case CreatureKind::zombie:
      return rounded_count(targets[static_cast<std::size_t>(CountClass::zombie)] *
                           zombie_rate_factor(0, rules.day_length,
                                              rules.creatures.zombie_night_weight));
    case CreatureKind::skeleton:
      return rounded_count(targets[static_cast<std::size_t>(CountClass::skeleton)]);
    default:
      return 0;
  }
}

std::map<Material, int> count_materials(const WorldMap& map) {
  std::map<Material, int> out;
  for (Material m : map.cells) ++out[m];
  return out;
}

namespace {

// Value noise on an integer lattice with smoothstep interpolation.
class Noise {
 public:
  explicit Noise(std::uint64_t seed) : seed_(seed) {}

  double lattice(int layer, std::int64_t ix, std::int64_t iy) const {
    const std::uint64_t h =
        hash_combine(hash_combine(hash_combine(seed_, static_cast<std::uint64_t>(layer)),
                                  static_cast<std::uint64_t>(ix)),
                     static_cast<std::uint64_t>(iy));
    return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
  }

  double value(int layer, double x, double y, double scale) const {
    const double fx = x / scale;
    const double fy = y / scale;
    const double x0 = std::floor(fx);
    const double y0 = std::floor(fy);
    const auto ix = static_cast<std::int64_t>(x0);
    const auto iy = static_cast<std::int64_t>(y0);
    const double tx = smooth(fx - x0);
    const double ty = smooth(fy - y0);
    const double a = lattice(layer, ix, iy);
    const double b = lattice(layer, ix + 1, iy);
    const double c = lattice(layer, ix, iy + 1);
    const double d = lattice(layer, ix + 1, iy + 1);
    const double top = a + (b - a) * tx;
    const double bottom = c + (d - c) * tx;
    return top + (bottom - top) * ty;
  }

  // Uniform [0, 1) per cell and layer, independent of evaluation order.
  double uniform(int layer, int x, int y) const {
    return static_cast<double>(
               hash_combine(hash_combine(hash_combine(seed_ ^ 0x5bd1e995ULL,
                                                      static_cast<std::uint64_t>(layer)),
                                         static_cast<std::uint64_t>(x)),
                            static_cast<std::uint64_t>(y)) >>
               11) *
           0x1.0p-53;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  std::uint64_t seed_;
};

double soft_step(double z) { return 0.5 + 0.5 * z / (1.0 + std::abs(z)); }

std::size_t count_class(CountClass c) { return static_cast<std::size_t>(c); }

bool is_open(Material m) { return m == Material::grass || m == Material::sand || m == Material::path; }

// Cells reachable on foot from the start, avoiding deadly cells.
std::vector<std::uint8_t> reachable_from_start(const WorldMap& map) {
  std::vector<std::uint8_t> seen(map.cells.size(), 0);
  std::queue<Pos> q;
  q.push(map.start);
  seen[static_cast<std::size_t>(map.index(map.start))] = 1;
  constexpr std::array<Pos, 4> dirs = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  while (!q.empty()) {
    const Pos p = q.front();
    q.pop();
    for (Pos d : dirs) {
      const Pos n = p + d;
      if (!map.in_bounds(n)) continue;
      const auto i = static_cast<std::size_t>(map.index(n));
      if (seen[i] || !is_open(map.cells[i])) continue;
      seen[i] = 1;
      q.push(n);
    }
  }
  return seen;
}

bool reaches_tree_and_water(const WorldMap& map) {
  const auto seen = reachable_from_start(map);
  bool tree = false;
  bool water = false;
  constexpr std::array<Pos, 4> dirs = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  for (int i = 0; i < static_cast<int>(map.cells.size()); ++i) {
    if (!seen[static_cast<std::size_t>(i)]) continue;
    const Pos p = map.pos_of(i);
    for (Pos d : dirs) {
      const Pos n = p + d;
      if (!map.in_bounds(n)) continue;
      tree = tree || map.at(n) == Material::tree;
      water = water || map.at(n) == Material::water;
    }
  }
  return tree && water;
}

// Picks exactly `n` cells among the candidates with the highest score.
std::vector<int> top_cells(std::vector<std::pair<double, int>> scored, int n,
                           std::string_view what) {
  if (n > static_cast<int>(scored.size())) {
    throw GenerationError("generation: target of " + std::to_string(n) + " " + std::string(what) +
                          " cells exceeds the " + std::to_string(scored.size()) +
                          " available candidate cells");
  }
  std::partial_sort(scored.begin(), scored.begin() + n, scored.end(),
                    [](const auto& a, const auto& b) {
                      return a.first > b.first || (a.first == b.first && a.second < b.second);
                    });
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(scored[static_cast<std::size_t>(i)].second);
  std::sort(out.begin(), out.end());
  return out;
}

std::uint8_t draw_variant(Material m, const AppearanceDist& dist, Rng& rng) {
  switch (m) {
    case Material::tree: return static_cast<std::uint8_t>(sample_variant(VariantClass::tree, dist, rng));
    case Material::stone: return static_cast<std::uint8_t>(sample_variant(VariantClass::stone, dist, rng));
    case Material::coal: return static_cast<std::uint8_t>(sample_variant(VariantClass::coal, dist, rng));
    default: return 1;
  }
}

VariantClass variant_class_of(CreatureKind k) {
  switch (k) {
    case CreatureKind::zombie: return VariantClass::zombie;
    case CreatureKind::skeleton: return VariantClass::skeleton;
    default: return VariantClass::cow;
  }
}

int creature_health(CreatureKind k, const Rules& rules) {
  switch (k) {
    case CreatureKind::cow: return rules.combat.cow_health;
    case CreatureKind::zombie: return rules.combat.zombie_health;
    case CreatureKind::skeleton: return rules.combat.skeleton_health;
    default: return 1;
  }
}

void finalize_variants(WorldMap& map, const AppearanceDist& dist, std::uint64_t seed) {
  Rng rng(stream_seed(seed, "variants"));
  for (std::size_t i = 0; i < map.cells.size(); ++i) {
    map.variants[i] = draw_variant(map.cells[i], dist, rng);
  }
}

void build_spawn_zones(WorldMap& map, const std::vector<std::uint8_t>& tunnel) {
  for (auto& z : map.spawn_zones) z.clear();
  for (int i = 0; i < static_cast<int>(map.cells.size()); ++i) {
    const Material m = map.cells[static_cast<std::size_t>(i)];
    if (m == Material::grass) {
      map.spawn_zones[0].push_back(i);
      map.spawn_zones[1].push_back(i);
    }
    if (tunnel[static_cast<std::size_t>(i)] && m == Material::path) map.spawn_zones[2].push_back(i);
  }
}

bool in_view_of(Pos a, Pos b) { return std::abs(a.x - b.x) <= 4 && std::abs(a.y - b.y) <= 3; }

std::vector<Creature> place_creatures(const WorldMap& map, const GenParams& params,
                                      const Rules& rules) {
  std::vector<Creature> out;
  std::vector<std::uint8_t> taken(map.cells.size(), 0);
  taken[static_cast<std::size_t>(map.index(map.start))] = 1;
  Rng rng(stream_seed(params.seed, "initial_creatures"));
  Rng variant_rng(stream_seed(params.seed, "creature_variants"));
  for (CreatureKind kind : {CreatureKind::cow, CreatureKind::zombie, CreatureKind::skeleton}) {
    const auto& zone = map.spawn_zones[spawn_zone_index(kind)];
    std::vector<std::int32_t> free;
    for (std::int32_t idx : zone) {
      if (!taken[static_cast<std::size_t>(idx)] && !in_view_of(map.pos_of(idx), map.start)) {
        free.push_back(idx);
      }
    }
    const int n = initial_population(kind, params.count_targets, rules);
    if (n > static_cast<int>(free.size())) {
      throw GenerationError("generation: target of " + std::to_string(n) + " " +
                            std::string(name(kind)) + " exceeds the " + std::to_string(free.size()) +
                            " available spawn cells");
    }
    // Partial Fisher-Yates draw of n distinct cells.
    for (int i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(i) +
                     static_cast<std::size_t>(rng.below(free.size() - static_cast<std::size_t>(i)));
      std::swap(free[static_cast<std::size_t>(i)], free[j]);
      const std::int32_t idx = free[static_cast<std::size_t>(i)];
      taken[static_cast<std::size_t>(idx)] = 1;
      Creature c;
      c.kind = kind;
      c.pos = map.pos_of(idx);
      c.health = creature_health(kind, rules);
      c.variant = static_cast<std::uint8_t>(
          sample_variant(variant_class_of(kind), params.appearance, variant_rng));
      out.push_back(c);
    }
  }
  return out;
}

WorldMap standard_terrain(const GenParams& params, std::uint64_t seed,
                          std::vector<std::uint8_t>& tunnel) {
  const int size = params.size;
  const auto& ns = params.noise_scales;
  const Noise noise(seed);
  WorldMap map(size, size, Material::grass);
  map.start = {size / 2, size / 2};
  tunnel.assign(map.cells.size(), 0);
  std::vector<double> mountain_field(map.cells.size(), 0.0);

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Pos p{x, y};
      const auto i = static_cast<std::size_t>(map.index(p));
      const double dx = x - map.start.x;
      const double dy = y - map.start.y;
      double start = 4.0 - std::sqrt(dx * dx + dy * dy) + 2.0 * noise.value(8, x, y, 3.0);
      start = soft_step(start);
      double water = noise.value(3, x, y, ns.terrain) +
                     0.15 * noise.value(4, x, y, ns.terrain_detail) + 0.1;
      water -= 2.0 * start;
      double mountain = noise.value(0, x, y, ns.terrain) +
                        0.3 * noise.value(1, x, y, ns.terrain_detail);
      mountain -= 4.0 * start + 0.3 * std::max(water, 0.0);
      mountain_field[i] = mountain;

      Material m = Material::grass;
      if (start > 0.5) {
        m = Material::grass;
      } else if (mountain > 0.15) {
        if (noise.value(6, x, y, ns.caves) > 0.35 && mountain > 0.3) {
          m = Material::path;
        } else if (noise.value(7, 2.0 * x, y / 5.0, ns.tunnels) > 0.45) {
          m = Material::path;
        } else if (noise.value(7, x / 5.0, 2.0 * y, ns.tunnels) > 0.45) {
          m = Material::path;
        } else if (noise.value(2, x, y, ns.ore) > 0.3 && noise.uniform(2, x, y) > 0.8) {
          m = Material::iron;
        } else if (mountain > 0.35 && noise.value(9, x, y, ns.lava) > 0.45) {
          m = Material::lava;
        } else {
          m = Material::stone;
        }
        if (m == Material::path) tunnel[i] = 1;
      } else if (water > 0.25 && water <= 0.35 && noise.value(5, x, y, ns.sand) > -0.2) {
        m = Material::sand;
      } else if (water > 0.3) {
        m = Material::water;
      }
      map.cells[i] = m;
    }
  }

  // Exactly one diamond vein in the deepest stone.
  {
    int best = -1;
    double best_v = -1e300;
    for (int i = 0; i < static_cast<int>(map.cells.size()); ++i) {
      if (map.cells[static_cast<std::size_t>(i)] != Material::stone) continue;
      const Pos p = map.pos_of(i);
      const double v = mountain_field[static_cast<std::size_t>(i)] + 0.05 * noise.uniform(10, p.x, p.y);
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    if (best < 0) throw GenerationError("generation: no stone cell available for diamond");
    map.cells[static_cast<std::size_t>(best)] = Material::diamond;
    const Pos c = map.pos_of(best);
    const int extra = static_cast<int>(mix64(seed ^ 0xd1a3ULL) % 3);
    int placed = 0;
    for (Pos d : {Pos{1, 0}, Pos{0, 1}, Pos{-1, 0}, Pos{0, -1}}) {
      if (placed >= extra) break;
      const Pos n = c + d;
      if (map.in_bounds(n) && map.at(n) == Material::stone) {
        map.set(n, Material::diamond);
        ++placed;
      }
    }
  }
  return map;
}

void ensure_tunnels(WorldMap& map, std::vector<std::uint8_t>& tunnel, double skeleton_target,
                    const Noise& noise) {
  const int needed = static_cast<int>(std::ceil(4.0 * skeleton_target)) + 16;
  int have = 0;
  for (std::size_t i = 0; i < tunnel.size(); ++i) have += tunnel[i] && map.cells[i] == Material::path;
  if (have >= needed) return;
  std::vector<std::pair<double, int>> scored;
  for (int i = 0; i < static_cast<int>(map.cells.size()); ++i) {
    if (map.cells[static_cast<std::size_t>(i)] != Material::stone) continue;
    const Pos p = map.pos_of(i);
    scored.emplace_back(noise.value(11, p.x, p.y, 4.0), i);
  }
  const int extra = std::min<int>(needed - have, static_cast<int>(scored.size()));
  for (int idx : top_cells(std::move(scored), extra, "tunnel")) {
    map.cells[static_cast<std::size_t>(idx)] = Material::path;
    tunnel[static_cast<std::size_t>(idx)] = 1;
  }
}

GeneratedWorld generate_standard(const GenParams& params, const Rules& rules) {
  constexpr int kMaxAttempts = 32;
  const int trees = rounded_count(params.count_targets[count_class(CountClass::tree)]);
  const int coal = rounded_count(params.count_targets[count_class(CountClass::coal)]);
  std::string failure = "no connected world";
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t seed = attempt == 0 ? params.seed : split_seed(params.seed, attempt);
    try {
      std::vector<std::uint8_t> tunnel;
      WorldMap map = standard_terrain(params, seed, tunnel);
      const Noise noise(seed);
      ensure_tunnels(map, tunnel, params.count_targets[count_class(CountClass::skeleton)], noise);

      std::vector<std::pair<double, int>> coal_cells;
      std::vector<std::pair<double, int>> tree_cells;
      for (int i = 0; i < static_cast<int>(map.cells.size()); ++i) {
        const Pos p = map.pos_of(i);
        const Material m = map.cells[static_cast<std::size_t>(i)];
        if (m == Material::stone) {
          coal_cells.emplace_back(noise.value(12, p.x, p.y, 8.0) + 0.6 * noise.uniform(12, p.x, p.y), i);
        } else if (m == Material::grass && !in_view_of(p, map.start)) {
          tree_cells.emplace_back(noise.value(13, p.x, p.y, params.noise_scales.forest) +
                                      0.3 * noise.uniform(13, p.x, p.y),
                                  i);
        }
      }
      for (int idx : top_cells(std::move(coal_cells), coal, "coal")) {
        map.cells[static_cast<std::size_t>(idx)] = Material::coal;
      }
      for (int idx : top_cells(std::move(tree_cells), trees, "tree")) {
        map.cells[static_cast<std::size_t>(idx)] = Material::tree;
      }
      if (!reaches_tree_and_water(map)) continue;

      finalize_variants(map, params.appearance, seed);
      build_spawn_zones(map, tunnel);
      GenParams p = params;
      p.seed = seed;
      GeneratedWorld out;
      out.creatures = place_creatures(map, p, rules);
      out.map = std::move(map);
      return out;
    } catch (const GenerationError& e) {
      // Terrain too small for the targets; a different layout may fit.
      failure = e.what();
    }
  }
  throw GenerationError(failure + " (after " + std::to_string(kMaxAttempts) + " layouts)");
}

// Small flat grassland with a pond and scattered trees, used for smoke
// training runs.
GeneratedWorld generate_mini(const GenParams& params, const Rules& rules) {
  const int size = params.size;
  WorldMap map(size, size, Material::grass);
  map.start = {size / 2, size / 2};
  Rng rng(stream_seed(params.seed, "mini"));
  // Pond in one of the four corners.
  const int corner = static_cast<int>(rng.below(4));
  const int px = (corner & 1) ? size - 3 : 0;
  const int py = (corner & 2) ? size - 3 : 0;
  for (int y = py; y < py + 3; ++y) {
    for (int x = px; x < px + 3; ++x) map.set({x, y}, Material::water);
  }
  const int trees = rounded_count(params.count_targets[count_class(CountClass::tree)]);
  const int coal = rounded_count(params.count_targets[count_class(CountClass::coal)]);
  if (coal > 0) {
    throw GenerationError("generation: target of " + std::to_string(coal) +
                          " coal cells exceeds the 0 available candidate cells");
  }
  std::vector<std::pair<double, int>> cells;
  for (int i = 0; i < static_cast<int>(map.cells.size()); ++i) {
    const Pos p = map.pos_of(i);
    if (map.at(p) != Material::grass) continue;
    if (std::max(std::abs(p.x - map.start.x), std::abs(p.y - map.start.y)) < 2) continue;
    cells.emplace_back(rng.uniform(), i);
  }
  for (int idx : top_cells(std::move(cells), trees, "tree")) {
    map.cells[static_cast<std::size_t>(idx)] = Material::tree;
  }
  finalize_variants(map, params.appearance, params.seed);
  std::vector<std::uint8_t> no_tunnels(map.cells.size(), 0);
  build_spawn_zones(map, no_tunnels);
  GeneratedWorld out;
  out.creatures = place_creatures(map, params, rules);
  out.map = std::move(map);
  return out;
}

}  // namespace

GeneratedWorld generate(const GenParams& params, const Rules& rules) {
  for (double c : params.count_targets) {
    if (!(c >= 0.0)) throw GenerationError("generation: count targets must be non-negative");
  }
  if (params.kind == WorldKind::mini) return generate_mini(params, rules);
  if (params.size != 64) throw GenerationError("generation: the standard world is 64x64");
  return generate_standard(params, rules);
}

GeneratedWorld generate(const GenParams& params) { return generate(params, *default_rules()); }

}  // namespace crafter
