#include "crafter/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "crafter/worldgen.hpp"

namespace crafter {

namespace {

constexpr std::array<Pos, 4> kDirs = {{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

// Half width and half height of the player's view window in cells.
constexpr int kViewHalfW = 4;
constexpr int kViewHalfH = 3;

std::size_t idx(Resource r) { return static_cast<std::size_t>(r); }
std::size_t idx(Material m) { return static_cast<std::size_t>(m); }

int sign(int v) { return (v > 0) - (v < 0); }

bool in_view(Pos a, Pos b) {
  return std::abs(a.x - b.x) <= kViewHalfW && std::abs(a.y - b.y) <= kViewHalfH;
}

bool is_night(double light) { return light < 0.5; }

}  // namespace

struct SimAccess {
  static std::vector<std::int16_t>& occ(WorldState& s) { return s.occupancy_; }
  static const std::vector<std::int16_t>& occ(const WorldState& s) { return s.occupancy_; }
};

namespace {

// Mutation helpers over one state. All rule lookups go through the shared
// context; randomness is drawn from the state's named streams.
class Sim {
 public:
  explicit Sim(WorldState& s)
      : s_(s), rules_(*s.ctx->rules), opts_(s.ctx->options), occ_(SimAccess::occ(s)) {}

  StepEvents run(Action action) {
    StepEvents ev;
    const int health_before = s_.player.health();
    if (s_.player.sleeping) action = Action::noop;
    player_action(action, ev);
    if (opts_.creatures) {
      update_creatures();
      balance();
    }
    if (opts_.survival) vitals();
    wake_up(ev);
    finish_player(ev, health_before);
    compact();
    ++s_.step_count;
    s_.light = daylight(s_.step_count, rules_.day_length);
    return ev;
  }

 private:
  WorldState& s_;
  const Rules& rules_;
  const SimOptions& opts_;
  std::vector<std::int16_t>& occ_;

  int& inv(Resource r) { return s_.player.inventory[idx(r)]; }

  void clamp_inventory() {
    for (auto& v : s_.player.inventory) v = std::clamp(v, 0, rules_.inventory_max);
  }

  std::int16_t occupant(Pos p) const { return occ_[static_cast<std::size_t>(s_.map.index(p))]; }

  bool free_for(Pos p, const MaterialSet& walkable) const {
    return s_.map.in_bounds(p) && contains(walkable, s_.map.at(p)) && occupant(p) < 0 &&
           !(p == s_.player.pos);
  }

  void kill(std::size_t i) {
    Creature& c = s_.creatures[i];
    if (c.health > 0) c.health = 0;
    auto& cell = occ_[static_cast<std::size_t>(s_.map.index(c.pos))];
    if (cell == static_cast<std::int16_t>(i)) cell = -1;
  }

  void move_creature(std::size_t i, Pos to) {
    Creature& c = s_.creatures[i];
    occ_[static_cast<std::size_t>(s_.map.index(c.pos))] = -1;
    c.pos = to;
    occ_[static_cast<std::size_t>(s_.map.index(to))] = static_cast<std::int16_t>(i);
  }

  std::size_t add_creature(Creature c) {
    const std::size_t i = s_.creatures.size();
    occ_[static_cast<std::size_t>(s_.map.index(c.pos))] = static_cast<std::int16_t>(i);
    s_.creatures.push_back(c);
    return i;
  }

  bool nearby_has(const MaterialSet& required) const {
    MaterialSet found;
    const int r = rules_.nearby_radius;
    const Pos p = s_.player.pos;
    for (int y = p.y - r; y <= p.y + r; ++y) {
      for (int x = p.x - r; x <= p.x + r; ++x) {
        if (s_.map.in_bounds({x, y})) found.set(idx(s_.map.at({x, y})));
      }
    }
    return (required & ~found).none();
  }

  bool has_all(const ResourceCounts& need) {
    for (std::size_t r = 0; r < kNumResources; ++r) {
      if (s_.player.inventory[r] < need[r]) return false;
    }
    return true;
  }

  void damage_player(int amount) {
    inv(Resource::health) -= amount;
  }

  int player_damage() const {
    const auto& d = rules_.combat.player_damage;
    if (s_.player.count(Resource::iron_sword) > 0) return d[3];
    if (s_.player.count(Resource::stone_sword) > 0) return d[2];
    if (s_.player.count(Resource::wood_sword) > 0) return d[1];
    return d[0];
  }

  // ---- player ----------------------------------------------------------

  void player_action(Action a, StepEvents& ev) {
    switch (a) {
      case Action::noop: return;
      case Action::move_up: return move_player(Facing::up);
      case Action::move_down: return move_player(Facing::down);
      case Action::move_left: return move_player(Facing::left);
      case Action::move_right: return move_player(Facing::right);
      case Action::do_: return interact(ev);
      case Action::sleep:
        if (s_.player.count(Resource::energy) < rules_.inventory_max) s_.player.sleeping = true;
        return;
      default: break;
    }
    if (const auto& rule = rules_.place_rule(a)) return place(*rule, ev);
    if (const auto& rule = rules_.make_rule(a)) return make(*rule, ev);
  }

  void move_player(Facing f) {
    s_.player.facing = f;
    const Pos target = s_.player.pos + facing_offset(f);
    if (!s_.map.in_bounds(target) || occupant(target) >= 0) return;
    if (!contains(rules_.player_walkable, s_.map.at(target))) return;
    s_.player.pos = target;
    if (contains(rules_.deadly, s_.map.at(target)) && !opts_.immortal) {
      inv(Resource::health) = 0;
    }
  }

  void interact(StepEvents& ev) {
    const Pos target = s_.player.pos + facing_offset(s_.player.facing);
    if (!s_.map.in_bounds(target)) return;
    if (const auto o = occupant(target); o >= 0) return hit(static_cast<std::size_t>(o), ev);
    const Material m = s_.map.at(target);
    const CollectRule& rule = rules_.collect_rule(m);
    if (!rule.enabled || !has_all(rule.require)) return;
    if (rule.probability < 1.0 && !s_.rng_player.chance(rule.probability)) return;
    for (std::size_t r = 0; r < kNumResources; ++r) s_.player.inventory[r] += rule.receive[r];
    if (rule.receive[idx(Resource::drink)] > 0) s_.player.thirst = 0;
    if (rule.leaves != m) s_.map.set(target, rule.leaves);
    clamp_inventory();
    if (rule.achievement) ev.achieved.set(static_cast<std::size_t>(*rule.achievement));
  }

  void hit(std::size_t i, StepEvents& ev) {
    Creature& c = s_.creatures[i];
    const auto& cb = rules_.combat;
    switch (c.kind) {
      case CreatureKind::plant:
        if (c.grown > rules_.creatures.plant_ripe_steps) {
          c.grown = 0;
          inv(Resource::food) += cb.eat_plant_food;
          s_.player.hunger = 0;
          clamp_inventory();
          ev.achieved.set(static_cast<std::size_t>(Achievement::eat_plant));
        }
        return;
      case CreatureKind::arrow:
        return;
      case CreatureKind::cow:
      case CreatureKind::zombie:
      case CreatureKind::skeleton:
        break;
    }
    c.health -= player_damage();
    if (c.health > 0) return;
    if (c.kind == CreatureKind::cow) {
      inv(Resource::food) += cb.eat_cow_food;
      s_.player.hunger = 0;
      clamp_inventory();
      ev.achieved.set(static_cast<std::size_t>(Achievement::eat_cow));
    } else if (c.kind == CreatureKind::zombie) {
      ev.achieved.set(static_cast<std::size_t>(Achievement::defeat_zombie));
    } else {
      ev.achieved.set(static_cast<std::size_t>(Achievement::defeat_skeleton));
    }
    kill(i);
  }

  void place(const PlaceRule& rule, StepEvents& ev) {
    const Pos target = s_.player.pos + facing_offset(s_.player.facing);
    if (!s_.map.in_bounds(target) || occupant(target) >= 0) return;
    if (!contains(rule.where, s_.map.at(target))) return;
    if (!has_all(rule.uses) || !nearby_has(rule.nearby)) return;
    for (std::size_t r = 0; r < kNumResources; ++r) s_.player.inventory[r] -= rule.uses[r];
    if (rule.result == PlaceResult::plant) {
      Creature plant;
      plant.kind = CreatureKind::plant;
      plant.pos = target;
      plant.health = 1;
      add_creature(plant);
    } else {
      std::uint8_t variant = 1;
      if (rule.material == Material::stone) {
        variant = static_cast<std::uint8_t>(
            sample_variant(VariantClass::stone, s_.ctx->appearance, s_.rng_player));
      }
      s_.map.set(target, rule.material, variant);
    }
    ev.achieved.set(static_cast<std::size_t>(rule.achievement));
  }

  void make(const MakeRule& rule, StepEvents& ev) {
    if (!has_all(rule.uses) || !nearby_has(rule.nearby)) return;
    for (std::size_t r = 0; r < kNumResources; ++r) s_.player.inventory[r] -= rule.uses[r];
    inv(rule.gives) += rule.amount;
    clamp_inventory();
    ev.achieved.set(static_cast<std::size_t>(rule.achievement));
  }

  // ---- creatures -------------------------------------------------------

  Pos toward(Pos from, Pos to, Rng& rng) {
    const int dx = to.x - from.x;
    const int dy = to.y - from.y;
    const bool horizontal =
        std::abs(dx) > std::abs(dy) || (std::abs(dx) == std::abs(dy) && rng.chance(0.5));
    return horizontal ? Pos{sign(dx), 0} : Pos{0, sign(dy)};
  }

  static Facing facing_of(Pos d) {
    if (d.x < 0) return Facing::left;
    if (d.x > 0) return Facing::right;
    if (d.y < 0) return Facing::up;
    return Facing::down;
  }

  void try_move(std::size_t i, Pos d, const MaterialSet& walkable) {
    if (d.x == 0 && d.y == 0) return;
    Creature& c = s_.creatures[i];
    c.facing = facing_of(d);
    const Pos to = c.pos + d;
    if (free_for(to, walkable)) move_creature(i, to);
  }

  Pos random_dir(Rng& rng) { return kDirs[rng.below(4)]; }

  void update_creatures() {
    const std::size_t n = s_.creatures.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (s_.creatures[i].health <= 0) continue;
      switch (s_.creatures[i].kind) {
        case CreatureKind::cow: update_cow(i); break;
        case CreatureKind::zombie: update_zombie(i); break;
        case CreatureKind::skeleton: update_skeleton(i); break;
        case CreatureKind::arrow: update_arrow(i); break;
        case CreatureKind::plant: update_plant(i); break;
      }
    }
  }

  void update_cow(std::size_t i) {
    Rng& rng = s_.rng_creatures;
    if (rng.chance(rules_.creatures.cow_move_prob)) {
      try_move(i, random_dir(rng), rules_.creature_walkable);
    }
  }

  void update_zombie(std::size_t i) {
    Rng& rng = s_.rng_creatures;
    const auto& cr = rules_.creatures;
    const Pos p = s_.player.pos;
    {
      const Creature& c = s_.creatures[i];
      const int dist = std::max(std::abs(p.x - c.pos.x), std::abs(p.y - c.pos.y));
      const int radius = is_night(s_.light) ? cr.zombie_chase_radius_night : cr.zombie_chase_radius_day;
      if (dist <= radius && rng.chance(cr.zombie_chase_prob)) {
        try_move(i, toward(c.pos, p, rng), rules_.creature_walkable);
      } else if (rng.chance(cr.zombie_move_prob)) {
        try_move(i, random_dir(rng), rules_.creature_walkable);
      }
    }
    Creature& c = s_.creatures[i];
    const int manhattan = std::abs(p.x - c.pos.x) + std::abs(p.y - c.pos.y);
    if (manhattan > 1) return;
    if (c.cooldown > 0) {
      --c.cooldown;
      return;
    }
    const auto& cb = rules_.combat;
    damage_player(s_.player.sleeping ? cb.zombie_sleep_damage : cb.zombie_damage);
    c.cooldown = cb.zombie_cooldown;
  }

  void update_skeleton(std::size_t i) {
    Rng& rng = s_.rng_creatures;
    const auto& cr = rules_.creatures;
    const Pos p = s_.player.pos;
    Creature& c = s_.creatures[i];
    if (c.cooldown > 0) --c.cooldown;
    const int dist = std::max(std::abs(p.x - c.pos.x), std::abs(p.y - c.pos.y));
    const bool near = dist <= cr.skeleton_range;
    if (near && c.cooldown == 0 && rng.chance(cr.skeleton_shoot_prob)) {
      const Pos d = toward(c.pos, p, rng);
      c.facing = facing_of(d);
      const Pos target = c.pos + d;
      if (target == p) {
        damage_player(rules_.combat.arrow_damage);
        c.cooldown = cr.skeleton_reload;
      } else if (free_for(target, rules_.arrow_free)) {
        Creature arrow;
        arrow.kind = CreatureKind::arrow;
        arrow.pos = target;
        arrow.health = 1;
        arrow.facing = c.facing;
        c.cooldown = cr.skeleton_reload;
        add_creature(arrow);
      }
      return;
    }
    if (rng.chance(cr.skeleton_move_prob)) {
      MaterialSet tunnels;
      tunnels.set(idx(Material::path));
      const Pos d = near ? toward(c.pos, p, rng) : random_dir(rng);
      try_move(i, d, tunnels);
    }
  }

  void update_arrow(std::size_t i) {
    Creature& a = s_.creatures[i];
    const Pos target = a.pos + facing_offset(a.facing);
    if (target == s_.player.pos) {
      damage_player(rules_.combat.arrow_damage);
      return kill(i);
    }
    if (!s_.map.in_bounds(target)) return kill(i);
    if (const auto o = occupant(target); o >= 0) {
      Creature& victim = s_.creatures[static_cast<std::size_t>(o)];
      if (victim.kind != CreatureKind::arrow) {
        victim.health -= rules_.combat.arrow_damage;
        if (victim.health <= 0) kill(static_cast<std::size_t>(o));
      }
      return kill(i);
    }
    if (!contains(rules_.arrow_free, s_.map.at(target))) {
      const Material m = s_.map.at(target);
      if (m == Material::table || m == Material::furnace) s_.map.set(target, Material::path);
      return kill(i);
    }
    move_creature(i, target);
  }

  void update_plant(std::size_t i) {
    Creature& plant = s_.creatures[i];
    ++plant.grown;
    for (Pos d : kDirs) {
      const Pos n = plant.pos + d;
      if (!s_.map.in_bounds(n)) continue;
      const auto o = occupant(n);
      if (o < 0) continue;
      const CreatureKind k = s_.creatures[static_cast<std::size_t>(o)].kind;
      if (k == CreatureKind::zombie || k == CreatureKind::skeleton) {
        return kill(i);
      }
    }
  }

  // ---- population balance ---------------------------------------------

  void balance() {
    const auto& cr = rules_.creatures;
    Rng& rng = s_.rng_balance;
    for (CreatureKind kind : {CreatureKind::cow, CreatureKind::zombie, CreatureKind::skeleton}) {
      const CountClass cls = kind == CreatureKind::cow      ? CountClass::cow
                             : kind == CreatureKind::zombie ? CountClass::zombie
                                                            : CountClass::skeleton;
      const double target = s_.ctx->targets[static_cast<std::size_t>(cls)];
      int alive = 0;
      for (std::size_t i = 0; i < s_.creatures.size(); ++i) {
        Creature& c = s_.creatures[i];
        if (c.kind != kind || c.health <= 0) continue;
        if (rng.chance(cr.despawn_rate)) {
          kill(i);
        } else {
          ++alive;
        }
      }
      double rate = cr.despawn_rate * target;
      if (kind == CreatureKind::zombie) {
        rate *= zombie_rate_factor(s_.step_count, rules_.day_length, cr.zombie_night_weight);
      }
      int births = static_cast<int>(std::floor(rate));
      if (rng.chance(rate - births)) ++births;
      const int cap = population_cap(target, cr);
      for (int b = 0; b < births && alive < cap; ++b) {
        if (spawn(kind, rng)) ++alive;
      }
    }
  }

  bool spawn(CreatureKind kind, Rng& rng) {
    const auto& zone = s_.map.spawn_zones[spawn_zone_index(kind)];
    if (zone.empty()) return false;
    const Material needed = kind == CreatureKind::skeleton ? Material::path : Material::grass;
    for (int attempt = 0; attempt < rules_.creatures.spawn_attempts; ++attempt) {
      const Pos p = s_.map.pos_of(zone[rng.below(zone.size())]);
      if (s_.map.at(p) != needed || occupant(p) >= 0 || in_view(p, s_.player.pos)) continue;
      Creature c;
      c.kind = kind;
      c.pos = p;
      const auto& cb = rules_.combat;
      c.health = kind == CreatureKind::cow      ? cb.cow_health
                 : kind == CreatureKind::zombie ? cb.zombie_health
                                                : cb.skeleton_health;
      const VariantClass vc = kind == CreatureKind::cow      ? VariantClass::cow
                              : kind == CreatureKind::zombie ? VariantClass::zombie
                                                             : VariantClass::skeleton;
      c.variant = static_cast<std::uint8_t>(sample_variant(vc, s_.ctx->appearance, rng));
      add_creature(c);
      return true;
    }
    return false;
  }

  // ---- vitals ----------------------------------------------------------

  void vitals() {
    PlayerState& pl = s_.player;
    const auto& v = rules_.vitals;
    const bool sleeping = pl.sleeping;
    const int tick = sleeping ? 1 : 2;
    pl.hunger += tick;
    if (pl.hunger > 2 * v.hunger_threshold) {
      pl.hunger = 0;
      inv(Resource::food) -= 1;
    }
    pl.thirst += tick;
    if (pl.thirst > 2 * v.thirst_threshold) {
      pl.thirst = 0;
      inv(Resource::drink) -= 1;
    }
    if (sleeping) {
      pl.fatigue = std::min(pl.fatigue - 2, 0);
    } else {
      pl.fatigue += 2;
    }
    if (pl.fatigue < 2 * v.rest_threshold) {
      pl.fatigue = 0;
      inv(Resource::energy) += 1;
    }
    if (pl.fatigue > 2 * v.fatigue_threshold) {
      pl.fatigue = 0;
      inv(Resource::energy) -= 1;
    }
    const bool ok = pl.count(Resource::food) > 0 && pl.count(Resource::drink) > 0 &&
                    (pl.count(Resource::energy) > 0 || sleeping);
    if (ok) {
      pl.recover += sleeping ? 4 : 2;
    } else {
      pl.recover -= sleeping ? 1 : 2;
    }
    if (pl.recover > 2 * v.recover_threshold) {
      pl.recover = 0;
      inv(Resource::health) += 1;
    }
    if (pl.recover < 2 * v.degen_threshold) {
      pl.recover = 0;
      inv(Resource::health) -= 1;
    }
  }

  void wake_up(StepEvents& ev) {
    PlayerState& pl = s_.player;
    if (!pl.sleeping) return;
    if (pl.count(Resource::energy) >= rules_.inventory_max && !is_night(s_.light)) {
      pl.sleeping = false;
      ev.achieved.set(static_cast<std::size_t>(Achievement::wake_up));
    }
  }

  void finish_player(StepEvents& ev, int health_before) {
    clamp_inventory();
    if (opts_.immortal) inv(Resource::health) = std::max(inv(Resource::health), 1);
    ev.health_delta = s_.player.health() - health_before;
    if (s_.player.health() <= 0) {
      s_.dead = true;
      ev.died = true;
    }
  }

  void compact() {
    auto& cs = s_.creatures;
    const bool any_dead = std::any_of(cs.begin(), cs.end(), [](const Creature& c) { return c.health <= 0; });
    if (!any_dead) return;
    cs.erase(std::remove_if(cs.begin(), cs.end(), [](const Creature& c) { return c.health <= 0; }),
             cs.end());
    s_.reindex();
  }
};

}  // namespace

std::shared_ptr<const SimContext> SimContext::from_spec(const EnvSpec& spec,
                                                        std::shared_ptr<const Rules> rules,
                                                        SimOptions options) {
  auto ctx = std::make_shared<SimContext>();
  ctx->rules = std::move(rules);
  ctx->targets = spec.counts();
  ctx->appearance = spec.appearance;
  ctx->options = options;
  ctx->episode_cap = spec.episode_cap.value_or(ctx->rules->episode_cap);
  ctx->world = spec.world;
  ctx->world_size = spec.world_size;
  return ctx;
}

std::optional<std::size_t> WorldState::creature_at(Pos p) const {
  if (!map.in_bounds(p)) return std::nullopt;
  const auto o = occupancy_[static_cast<std::size_t>(map.index(p))];
  if (o < 0) return std::nullopt;
  return static_cast<std::size_t>(o);
}

int WorldState::population(CreatureKind kind) const {
  return static_cast<int>(std::count_if(creatures.begin(), creatures.end(), [kind](const Creature& c) {
    return c.kind == kind && c.health > 0;
  }));
}

void WorldState::reindex() {
  occupancy_.assign(map.cells.size(), -1);
  if (creatures.size() > 32767) throw ContractViolation("too many creatures");
  for (std::size_t i = 0; i < creatures.size(); ++i) {
    const auto cell = static_cast<std::size_t>(map.index(creatures[i].pos));
    if (occupancy_[cell] >= 0) throw ContractViolation("two creatures share a cell");
    occupancy_[cell] = static_cast<std::int16_t>(i);
  }
}

bool operator==(const WorldState& a, const WorldState& b) {
  return a.map == b.map && a.player == b.player && a.creatures == b.creatures &&
         a.step_count == b.step_count && a.light == b.light && a.dead == b.dead &&
         a.rng_player == b.rng_player && a.rng_creatures == b.rng_creatures &&
         a.rng_balance == b.rng_balance;
}

WorldState world_from_map(std::shared_ptr<const SimContext> ctx, WorldMap map,
                          std::vector<Creature> creatures, std::uint64_t seed) {
  WorldState s;
  s.ctx = std::move(ctx);
  s.map = std::move(map);
  s.creatures = std::move(creatures);
  s.player.pos = s.map.start;
  for (std::size_t v = 0; v < kNumVitals; ++v) s.player.inventory[v] = s.ctx->rules->inventory_max;
  s.rng_player = Rng(stream_seed(seed, "player"));
  s.rng_creatures = Rng(stream_seed(seed, "creatures"));
  s.rng_balance = Rng(stream_seed(seed, "balance"));
  s.light = daylight(0, s.ctx->rules->day_length);
  s.reindex();
  return s;
}

WorldState new_world(std::shared_ptr<const SimContext> ctx, std::uint64_t seed) {
  GenParams params;
  params.seed = seed;
  params.count_targets = ctx->targets;
  params.appearance = ctx->appearance;
  params.kind = ctx->world;
  params.size = ctx->world_size;
  GeneratedWorld g = generate(params, *ctx->rules);
  if (!ctx->options.creatures) g.creatures.clear();
  return world_from_map(std::move(ctx), std::move(g.map), std::move(g.creatures), seed);
}

StepEvents step(WorldState& state, Action action) {
  if (is_terminal(state)) throw ContractViolation("step: episode is over; reset first");
  return Sim(state).run(action);
}

namespace {

Applicability yes(std::string reason = {}) { return {true, std::move(reason)}; }
Applicability no(std::string reason) { return {false, std::move(reason)}; }

std::string missing(const ResourceCounts& need, const PlayerState& pl) {
  for (std::size_t r = 0; r < kNumResources; ++r) {
    if (pl.inventory[r] < need[r]) {
      return "insufficient " + std::string(name(static_cast<Resource>(r)));
    }
  }
  return {};
}

std::string missing_nearby(const MaterialSet& need, const WorldState& s) {
  MaterialSet found;
  const int r = s.rules().nearby_radius;
  const Pos p = s.player.pos;
  for (int y = p.y - r; y <= p.y + r; ++y) {
    for (int x = p.x - r; x <= p.x + r; ++x) {
      if (s.map.in_bounds({x, y})) found.set(static_cast<std::size_t>(s.map.at({x, y})));
    }
  }
  for (std::size_t m = 0; m < kNumMaterials; ++m) {
    if (need.test(m) && !found.test(m)) {
      return "needs nearby " + std::string(name(static_cast<Material>(m)));
    }
  }
  return {};
}

Applicability can_move(const WorldState& s, Facing f) {
  const Pos target = s.player.pos + facing_offset(f);
  const bool turns = s.player.facing != f;
  std::string blocked;
  if (!s.map.in_bounds(target)) {
    blocked = "blocked by the world edge";
  } else if (auto o = s.creature_at(target)) {
    blocked = "blocked by " + std::string(name(s.creatures[*o].kind));
  } else if (!contains(s.rules().player_walkable, s.map.at(target))) {
    blocked = "blocked by " + std::string(name(s.map.at(target)));
  }
  if (blocked.empty()) return yes();
  if (turns) return yes("turns only; " + blocked);
  return no(blocked);
}

Applicability can_do(const WorldState& s) {
  const Rules& rules = s.rules();
  const Pos target = s.player.pos + facing_offset(s.player.facing);
  if (!s.map.in_bounds(target)) return no("facing the world edge");
  if (auto o = s.creature_at(target)) {
    const Creature& c = s.creatures[*o];
    if (c.kind == CreatureKind::arrow) return no("nothing to interact with");
    if (c.kind == CreatureKind::plant) {
      return c.grown > rules.creatures.plant_ripe_steps ? yes() : no("plant is not ripe");
    }
    return yes();
  }
  const Material m = s.map.at(target);
  const CollectRule& rule = rules.collect_rule(m);
  if (!rule.enabled) return no("nothing to collect from " + std::string(name(m)));
  for (std::size_t r = 0; r < kNumResources; ++r) {
    if (s.player.inventory[r] < rule.require[r]) {
      return no("needs " + std::string(name(static_cast<Resource>(r))));
    }
  }
  if (rule.probability < 1.0) return yes("succeeds with probability " + std::to_string(rule.probability));
  return yes();
}

}  // namespace

Applicability can_apply(const WorldState& s, Action a) {
  if (is_terminal(s)) return no("episode is over");
  if (s.player.sleeping) return no("player is asleep");
  const Rules& rules = s.rules();
  switch (a) {
    case Action::noop: return no("noop only advances the clock");
    case Action::move_up: return can_move(s, Facing::up);
    case Action::move_down: return can_move(s, Facing::down);
    case Action::move_left: return can_move(s, Facing::left);
    case Action::move_right: return can_move(s, Facing::right);
    case Action::do_: return can_do(s);
    case Action::sleep:
      return s.player.count(Resource::energy) < rules.inventory_max ? yes() : no("energy is full");
    default: break;
  }
  if (const auto& rule = rules.place_rule(a)) {
    const Pos target = s.player.pos + facing_offset(s.player.facing);
    if (auto m = missing(rule->uses, s.player); !m.empty()) return no(m);
    if (!s.map.in_bounds(target)) return no("facing the world edge");
    if (!contains(rule->where, s.map.at(target))) {
      return no("cannot place on " + std::string(name(s.map.at(target))));
    }
    if (s.creature_at(target)) return no("target cell is occupied");
    if (auto m = missing_nearby(rule->nearby, s); !m.empty()) return no(m);
    return yes();
  }
  if (const auto& rule = rules.make_rule(a)) {
    if (auto m = missing(rule->uses, s.player); !m.empty()) return no(m);
    if (auto m = missing_nearby(rule->nearby, s); !m.empty()) return no(m);
    return yes();
  }
  return no("action has no rule");
}

bool is_terminal(const WorldState& state) {
  return state.dead || state.step_count >= state.ctx->episode_cap;
}

int population_cap(double target, const CreatureRules& rules) {
  return static_cast<int>(std::ceil(rules.cap_factor * target)) + rules.cap_slack;
}

std::uint64_t state_digest(const WorldState& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) { h = hash_combine(h, v); };
  for (std::size_t i = 0; i < s.map.cells.size(); ++i) {
    mix(static_cast<std::uint64_t>(s.map.cells[i]) | (static_cast<std::uint64_t>(s.map.variants[i]) << 8));
  }
  mix(static_cast<std::uint64_t>(s.player.pos.x));
  mix(static_cast<std::uint64_t>(s.player.pos.y));
  mix(static_cast<std::uint64_t>(s.player.facing));
  for (int v : s.player.inventory) mix(static_cast<std::uint64_t>(v));
  mix(static_cast<std::uint64_t>(s.player.sleeping));
  mix(static_cast<std::uint64_t>(s.player.hunger));
  mix(static_cast<std::uint64_t>(s.player.thirst));
  mix(static_cast<std::uint64_t>(s.player.fatigue));
  mix(static_cast<std::uint64_t>(s.player.recover));
  for (const Creature& c : s.creatures) {
    mix(static_cast<std::uint64_t>(c.kind));
    mix(static_cast<std::uint64_t>(c.pos.x));
    mix(static_cast<std::uint64_t>(c.pos.y));
    mix(static_cast<std::uint64_t>(c.health));
    mix(c.variant);
    mix(static_cast<std::uint64_t>(c.facing));
    mix(static_cast<std::uint64_t>(c.cooldown));
    mix(static_cast<std::uint64_t>(c.grown));
  }
  mix(static_cast<std::uint64_t>(s.step_count));
  mix(static_cast<std::uint64_t>(s.dead));
  mix(s.rng_player.state());
  mix(s.rng_creatures.state());
  mix(s.rng_balance.state());
  return h;
}

}  // namespace crafter
