#include "crafter/observe.hpp"

#include <png.h>

#include <cmath>
#include <initializer_list>
#include <utility>

namespace crafter {

namespace {

using Mask = std::array<const char*, kTile>;
using Palette = std::initializer_list<std::pair<char, Rgb>>;

// '.' is transparent; every other character must appear in the palette.
Tile make_tile(const Mask& rows, Palette palette) {
  Tile t;
  for (int y = 0; y < kTile; ++y) {
    for (int x = 0; x < kTile; ++x) {
      const char ch = rows[static_cast<std::size_t>(y)][x];
      const auto i = static_cast<std::size_t>(y * kTile + x);
      if (ch == '.') continue;
      bool found = false;
      for (const auto& [k, c] : palette) {
        if (k == ch) {
          t.px[i] = c;
          found = true;
        }
      }
      if (!found) throw ContractViolation(std::string("atlas: unmapped mask character ") + ch);
      t.opaque[i] = true;
    }
  }
  return t;
}

constexpr Mask kWater = {"aaaaaaa", "abbaaaa", "aaaaaaa", "aaaabba", "aaaaaaa", "abbaaaa", "aaaaaaa"};
constexpr Mask kSand = {"aaaaaaa", "aabaaaa", "aaaaaba", "aaaaaaa", "abaaaaa", "aaaabaa", "aaaaaaa"};
constexpr Mask kGrass = {"aaaaaaa", "aabaaba", "aaaaaaa", "abaaaaa", "aaaabaa", "aaaaaaa", "abaabaa"};
constexpr Mask kPath = {"aaaaaaa", "abaaaaa", "aaaaaba", "aaaaaaa", "aabaaaa", "aaaaaab", "aaaaaaa"};
constexpr Mask kStone = {"aaaaaaa", "aabaaaa", "abbaaba", "aaaaabb", "aaaaaaa", "abaabaa", "aaaaaaa"};
constexpr Mask kCoal = {"aaaaaaa", "acaaaca", "accaaaa", "aaaacca", "aaaaaca", "acaaaaa", "aaaaaaa"};
constexpr Mask kIron = {"aaaaaaa", "aacdaaa", "aaddaca", "aaaaaaa", "acaadca", "aaaacaa", "aaaaaaa"};
constexpr Mask kDiamond = {"aaaaaaa", "aacaaaa", "acdcaaa", "aacaaca", "aaaacdc", "aaaaaca", "aaaaaaa"};
constexpr Mask kLava = {"aaabaaa", "abbaaab", "aaaaaba", "baaaaaa", "aabbaaa", "aaaaabb", "abaaaaa"};
constexpr Mask kTable = {"aaaaaaa", "wwwwwww", "wdddddw", "wwwwwww", "awaaawa", "awaaawa", "aaaaaaa"};
constexpr Mask kFurnace = {"bbbbbbb", "baaaaab", "babbbab", "bafyfab", "bafffab", "baaaaab", "bbbbbbb"};
constexpr Mask kTree = {"gglllgg", "gllmllg", "lmlllml", "lllllll", "gllllmg", "gggtggg", "gggtggg"};

constexpr Mask kCow = {".......", "hh.....", "heabbaa", ".aaaaba", ".aaaaaa", ".a.a.a.", "......."};
constexpr Mask kZombie = {"..aaa..", "..eae..", "..aaa..", ".bbbbb.", "a.bbb.a", "..b.b..", "..b.b.."};
constexpr Mask kSkeleton = {"..aaa..", "..eae..", "..aaa..", "...a...", ".aaaaa.", "...a...", "..a.a.."};
constexpr Mask kArrowRight = {".......", ".......", ".......", "aaaaah.", ".......", ".......", "......."};
constexpr Mask kArrowLeft = {".......", ".......", ".......", ".haaaaa", ".......", ".......", "......."};
constexpr Mask kArrowUp = {"...h...", "...a...", "...a...", "...a...", "...a...", "...a...", "......."};
constexpr Mask kArrowDown = {".......", "...a...", "...a...", "...a...", "...a...", "...a...", "...h..."};
constexpr Mask kSapling = {".......", ".......", "...g...", "..ggg..", "...g...", "...g...", "......."};
constexpr Mask kRipe = {".......", "..r.r..", "..ggg..", ".rgggr.", "..ggg..", "...g...", "......."};
constexpr Mask kPlayerDown = {"..hhh..", "..ses..", "..sss..", ".bbbbb.", "s.bbb.s", "..p.p..", "..p.p.."};
constexpr Mask kPlayerUp = {"..hhh..", "..hhh..", "..sss..", ".bbbbb.", "s.bbb.s", "..p.p..", "..p.p.."};
constexpr Mask kPlayerLeft = {"..hhh..", "..ess..", "..sss..", "..bbb..", "..sbb..", "..p.p..", "..p.p.."};
constexpr Mask kPlayerRight = {"..hhh..", "..sse..", "..sss..", "..bbb..", "..bbs..", "..p.p..", "..p.p.."};
constexpr Mask kPlayerSleep = {".......", ".......", ".......", "hsbbbpp", "hsbbbpp", ".......", "......."};

constexpr Rgb kGrassA{90, 170, 70};
constexpr Rgb kGrassB{120, 200, 90};
constexpr Rgb kPathA{140, 120, 95};
constexpr Rgb kPathB{120, 100, 80};
constexpr Rgb kStoneA{130, 130, 130};
constexpr Rgb kStoneB{95, 95, 95};

}  // namespace

TextureAtlas::TextureAtlas() {
  auto& m = materials_;
  auto set_all = [&](Material mat, const Tile& t) { m[static_cast<std::size_t>(mat)].fill(t); };
  const Tile grass = make_tile(kGrass, {{'a', kGrassA}, {'b', kGrassB}});
  set_all(Material::water, make_tile(kWater, {{'a', {55, 110, 210}}, {'b', {90, 150, 235}}}));
  set_all(Material::sand, make_tile(kSand, {{'a', {225, 205, 135}}, {'b', {200, 180, 110}}}));
  set_all(Material::grass, grass);
  set_all(Material::path, make_tile(kPath, {{'a', kPathA}, {'b', kPathB}}));
  set_all(Material::iron, make_tile(kIron, {{'a', kStoneA}, {'c', {215, 160, 110}}, {'d', {180, 120, 80}}}));
  set_all(Material::diamond,
          make_tile(kDiamond, {{'a', kStoneA}, {'c', {230, 250, 255}}, {'d', {120, 220, 230}}}));
  set_all(Material::lava, make_tile(kLava, {{'a', {230, 90, 20}}, {'b', {250, 170, 40}}}));
  set_all(Material::table,
          make_tile(kTable, {{'a', kPathA}, {'w', {165, 115, 60}}, {'d', {110, 75, 40}}}));
  set_all(Material::furnace, make_tile(kFurnace, {{'a', {100, 100, 100}},
                                                  {'b', {70, 70, 70}},
                                                  {'f', {250, 140, 30}},
                                                  {'y', {255, 220, 80}}}));

  const std::array<std::pair<Rgb, Rgb>, 4> stone = {{{kStoneA, kStoneB},
                                                     {{190, 150, 100}, {150, 110, 70}},
                                                     {{90, 110, 150}, {60, 75, 110}},
                                                     {{160, 90, 85}, {120, 60, 55}}}};
  const std::array<Rgb, 4> coal = {{{25, 25, 25}, {110, 40, 140}, {30, 90, 40}, {150, 30, 30}}};
  const std::array<std::pair<Rgb, Rgb>, 4> leaves = {{{{40, 110, 40}, {70, 140, 60}},
                                                      {{200, 110, 30}, {230, 160, 60}},
                                                      {{220, 120, 170}, {245, 180, 210}},
                                                      {{50, 110, 170}, {90, 160, 210}}}};
  const std::array<std::tuple<Rgb, Rgb, Rgb>, 4> cow = {{{{240, 240, 235}, {120, 80, 50}, {90, 60, 40}},
                                                         {{40, 40, 40}, {230, 230, 230}, {130, 130, 130}},
                                                         {{215, 170, 60}, {160, 110, 30}, {110, 70, 20}},
                                                         {{150, 160, 180}, {90, 100, 130}, {60, 65, 90}}}};
  const std::array<std::pair<Rgb, Rgb>, 4> zombie = {{{{90, 180, 80}, {50, 80, 140}},
                                                      {{160, 100, 190}, {70, 50, 90}},
                                                      {{80, 160, 200}, {40, 60, 60}},
                                                      {{200, 100, 90}, {90, 60, 40}}}};
  const std::array<Rgb, 4> bone = {{{235, 235, 225}, {230, 200, 90}, {120, 220, 230}, {240, 150, 190}}};

  for (std::size_t v = 0; v < kNumVariants; ++v) {
    m[static_cast<std::size_t>(Material::stone)][v] =
        make_tile(kStone, {{'a', stone[v].first}, {'b', stone[v].second}});
    m[static_cast<std::size_t>(Material::coal)][v] = make_tile(kCoal, {{'a', kStoneA}, {'c', coal[v]}});
    m[static_cast<std::size_t>(Material::tree)][v] = make_tile(
        kTree, {{'g', kGrassA}, {'l', leaves[v].first}, {'m', leaves[v].second}, {'t', {110, 75, 40}}});
    const auto& [ca, cb, ch] = cow[v];
    cows_[v] = make_tile(kCow, {{'a', ca}, {'b', cb}, {'h', ch}, {'e', {15, 15, 15}}});
    zombies_[v] = make_tile(kZombie, {{'a', zombie[v].first}, {'b', zombie[v].second}, {'e', {255, 255, 80}}});
    skeletons_[v] = make_tile(kSkeleton, {{'a', bone[v]}, {'e', {30, 30, 30}}});
  }

  const Palette arrow = {{'a', {160, 120, 70}}, {'h', {200, 200, 210}}};
  arrows_[static_cast<std::size_t>(Facing::left)] = make_tile(kArrowLeft, arrow);
  arrows_[static_cast<std::size_t>(Facing::right)] = make_tile(kArrowRight, arrow);
  arrows_[static_cast<std::size_t>(Facing::up)] = make_tile(kArrowUp, arrow);
  arrows_[static_cast<std::size_t>(Facing::down)] = make_tile(kArrowDown, arrow);
  plants_[0] = make_tile(kSapling, {{'g', {60, 150, 50}}});
  plants_[1] = make_tile(kRipe, {{'g', {60, 150, 50}}, {'r', {220, 40, 60}}});

  const Palette person = {{'h', {90, 50, 20}},
                          {'s', {240, 200, 160}},
                          {'e', {20, 20, 20}},
                          {'b', {60, 90, 200}},
                          {'p', {60, 60, 70}}};
  players_[static_cast<std::size_t>(Facing::left)] = make_tile(kPlayerLeft, person);
  players_[static_cast<std::size_t>(Facing::right)] = make_tile(kPlayerRight, person);
  players_[static_cast<std::size_t>(Facing::up)] = make_tile(kPlayerUp, person);
  players_[static_cast<std::size_t>(Facing::down)] = make_tile(kPlayerDown, person);
  player_sleeping_ = make_tile(kPlayerSleep, person);
}

const TextureAtlas& TextureAtlas::instance() {
  static const TextureAtlas atlas;
  return atlas;
}

const Tile& TextureAtlas::material(Material m, int variant) const {
  return materials_[static_cast<std::size_t>(m)][static_cast<std::size_t>(std::clamp(variant, 1, 4) - 1)];
}

const Tile& TextureAtlas::creature(const Creature& c, int ripe_steps) const {
  const auto v = static_cast<std::size_t>(std::clamp<int>(c.variant, 1, 4) - 1);
  switch (c.kind) {
    case CreatureKind::cow: return cows_[v];
    case CreatureKind::zombie: return zombies_[v];
    case CreatureKind::skeleton: return skeletons_[v];
    case CreatureKind::arrow: return arrows_[static_cast<std::size_t>(c.facing)];
    case CreatureKind::plant: return plants_[c.grown > ripe_steps ? 1 : 0];
  }
  return cows_[0];
}

const Tile& TextureAtlas::player(Facing f, bool sleeping) const {
  return sleeping ? player_sleeping_ : players_[static_cast<std::size_t>(f)];
}

Rgb TextureAtlas::slot_colour(Resource r) {
  static constexpr std::array<Rgb, kNumResources> colours = {{
      {220, 40, 40},    // health
      {230, 140, 40},   // food
      {50, 120, 230},   // drink
      {240, 220, 60},   // energy
      {150, 100, 50},   // wood
      {140, 140, 140},  // stone
      {60, 60, 60},     // coal
      {215, 160, 110},  // iron
      {150, 240, 250},  // diamond
      {60, 170, 60},    // sapling
      {190, 140, 90},   // wood_pickaxe
      {180, 180, 200},  // stone_pickaxe
      {230, 190, 150},  // iron_pickaxe
      {120, 70, 30},    // wood_sword
      {100, 100, 130},  // stone_sword
      {250, 210, 170},  // iron_sword
  }};
  return colours[static_cast<std::size_t>(r)];
}

const std::array<std::uint16_t, 10>& TextureAtlas::digits() {
  static constexpr std::array<std::uint16_t, 10> font = {
      0b111'101'101'101'111,  // 0
      0b010'110'010'010'111,  // 1
      0b111'001'111'100'111,  // 2
      0b111'001'111'001'111,  // 3
      0b101'101'111'001'001,  // 4
      0b111'100'111'001'111,  // 5
      0b111'100'111'101'111,  // 6
      0b111'001'001'001'001,  // 7
      0b111'101'111'101'111,  // 8
      0b111'101'111'001'111,  // 9
  };
  return font;
}

Image Observation::image() const {
  Image img(kObsSize, kObsSize);
  std::copy(pixels.begin(), pixels.end(), img.rgb.begin());
  return img;
}

int night_shade(double light, bool sleeping) {
  const double darkness = std::clamp(1.0 - light, 0.0, 1.0);
  int shade = 256 - static_cast<int>(std::floor(153.6 * darkness + 0.5));
  if (sleeping) shade /= 2;
  return shade;
}

namespace {

void blit(Observation& obs, const Tile& t, int x0, int y0) {
  for (int y = 0; y < kTile; ++y) {
    for (int x = 0; x < kTile; ++x) {
      const auto i = static_cast<std::size_t>(y * kTile + x);
      if (!t.opaque[i]) continue;
      const auto o = static_cast<std::size_t>(((y0 + y) * kObsSize + (x0 + x)) * kObsChannels);
      obs.pixels[o] = t.px[i].r;
      obs.pixels[o + 1] = t.px[i].g;
      obs.pixels[o + 2] = t.px[i].b;
    }
  }
}

void fill_rect(Observation& obs, int x0, int y0, int w, int h, Rgb c) {
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      const auto o = static_cast<std::size_t>((y * kObsSize + x) * kObsChannels);
      obs.pixels[o] = c.r;
      obs.pixels[o + 1] = c.g;
      obs.pixels[o + 2] = c.b;
    }
  }
}

void draw_strip(Observation& obs, const PlayerState& player) {
  const auto& font = TextureAtlas::digits();
  for (std::size_t r = 0; r < kNumResources; ++r) {
    const int count = player.inventory[r];
    if (count <= 0) continue;
    const int x0 = static_cast<int>(r) * kSlotW;
    fill_rect(obs, x0, kStripY0, 3, 3, TextureAtlas::slot_colour(static_cast<Resource>(r)));
    const std::uint16_t bits = font[static_cast<std::size_t>(std::min(count, 9))];
    for (int y = 0; y < kGlyphH; ++y) {
      for (int x = 0; x < kGlyphW; ++x) {
        const int bit = 14 - (y * kGlyphW + x);
        if ((bits >> bit) & 1) fill_rect(obs, x0 + x, kGlyphY0 + y, 1, 1, TextureAtlas::glyph_colour());
      }
    }
  }
}

}  // namespace

Observation render(const WorldState& state, bool show_inventory) {
  const TextureAtlas& atlas = TextureAtlas::instance();
  const int ripe = state.rules().creatures.plant_ripe_steps;
  Observation obs;
  const Pos centre = state.player.pos;
  for (int r = 0; r < kViewH; ++r) {
    for (int c = 0; c < kViewW; ++c) {
      const Pos cell{centre.x - kViewW / 2 + c, centre.y - kViewH / 2 + r};
      if (!state.map.in_bounds(cell)) continue;
      const int x0 = kMapX0 + c * kTile;
      const int y0 = kMapY0 + r * kTile;
      blit(obs, atlas.material(state.map.at(cell), state.map.variant_at(cell)), x0, y0);
      if (cell == centre) {
        blit(obs, atlas.player(state.player.facing, state.player.sleeping), x0, y0);
      } else if (auto o = state.creature_at(cell)) {
        blit(obs, atlas.creature(state.creatures[*o], ripe), x0, y0);
      }
    }
  }
  const int shade = night_shade(state.light, state.player.sleeping);
  if (shade < 256) {
    const auto begin = static_cast<std::size_t>(kMapY0 * kObsSize * kObsChannels);
    const auto end = static_cast<std::size_t>((kMapY0 + kViewH * kTile) * kObsSize * kObsChannels);
    for (std::size_t i = begin; i < end; ++i) {
      obs.pixels[i] = static_cast<std::uint8_t>((obs.pixels[i] * shade) >> 8);
    }
  }
  if (show_inventory) draw_strip(obs, state.player);
  return obs;
}

Observation render(const WorldState& state, const EnvSpec& spec) { return render(state, spec.show_inventory); }

Image render_full_map(const WorldState& state, int tile) {
  if (tile < 1) throw ContractViolation("render_full_map: tile size must be positive");
  const TextureAtlas& atlas = TextureAtlas::instance();
  const int ripe = state.rules().creatures.plant_ripe_steps;
  Image img(state.map.width * tile, state.map.height * tile);
  auto draw = [&](const Tile& t, Pos cell) {
    for (int y = 0; y < tile; ++y) {
      for (int x = 0; x < tile; ++x) {
        const auto i = static_cast<std::size_t>((y * kTile / tile) * kTile + (x * kTile / tile));
        if (t.opaque[i]) img.put(cell.x * tile + x, cell.y * tile + y, t.px[i]);
      }
    }
  };
  for (int y = 0; y < state.map.height; ++y) {
    for (int x = 0; x < state.map.width; ++x) {
      draw(atlas.material(state.map.at({x, y}), state.map.variant_at({x, y})), {x, y});
    }
  }
  for (const Creature& c : state.creatures) draw(atlas.creature(c, ripe), c.pos);
  draw(atlas.player(state.player.facing, state.player.sleeping), state.player.pos);
  return img;
}

int decode_slot(const Observation& obs, int slot) {
  if (slot < 0 || slot >= static_cast<int>(kNumResources)) return -1;
  const int x0 = slot * kSlotW;
  std::uint16_t bits = 0;
  for (int y = 0; y < kGlyphH; ++y) {
    for (int x = 0; x < kGlyphW; ++x) {
      bits = static_cast<std::uint16_t>(bits << 1);
      if (obs.at(x0 + x, kGlyphY0 + y) == TextureAtlas::glyph_colour()) bits |= 1;
    }
  }
  if (bits == 0) return 0;
  const auto& font = TextureAtlas::digits();
  for (int d = 1; d < 10; ++d) {
    if (font[static_cast<std::size_t>(d)] == bits) return d;
  }
  return -1;
}

Image upscale(const Image& img, int factor) {
  if (factor < 1) throw ContractViolation("upscale: factor must be positive");
  Image out(img.width * factor, img.height * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.put(x, y, img.at(x / factor, y / factor));
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.rgb.data(), 0, nullptr)) {
    throw std::runtime_error("write_png: " + path.string() + ": " + image.message);
  }
}

Image read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("read_png: " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Image img(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, img.rgb.data(), 0, nullptr)) {
    throw std::runtime_error("read_png: " + path.string() + ": " + image.message);
  }
  return img;
}

}  // namespace crafter
