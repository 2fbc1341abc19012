#pragma once

// Agent observation: a 9x7-cell view centred on the player drawn with 7x7
// pixel tiles, plus a vitals and inventory strip, in a fixed 64x64x3 image.
//
// Layout (x right, y down):
//   rows  0..2   background
//   rows  3..51  map, 9 columns x 7 rows of tiles (x 0..62; column 63 is
//                background)
//   rows 52..54  background
//   rows 55..63  strip of 16 slots, 4 px wide: health, food, drink, energy,
//                then the 12 items in Resource order. In each slot a 3x3
//                colour swatch sits on rows 55..57 and a 3x5 digit glyph on
//                rows 59..63 (x offsets 0..2). Empty slots stay background.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "crafter/ood.hpp"
#include "crafter/sim.hpp"

namespace crafter {

inline constexpr int kObsSize = 64;
inline constexpr int kObsChannels = 3;
inline constexpr int kTile = 7;
inline constexpr int kViewW = 9;
inline constexpr int kViewH = 7;
inline constexpr int kMapX0 = 0;
inline constexpr int kMapY0 = 3;
inline constexpr int kStripY0 = 55;
inline constexpr int kSlotW = 4;
inline constexpr int kGlyphY0 = 59;
inline constexpr int kGlyphW = 3;
inline constexpr int kGlyphH = 5;
inline constexpr std::size_t kObsBytes = kObsSize * kObsSize * kObsChannels;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Row-major interleaved RGB bitmap.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w * h * 3), 0) {}

  Rgb at(int x, int y) const {
    const auto i = static_cast<std::size_t>((y * width + x) * 3);
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
  void put(int x, int y, Rgb c) {
    const auto i = static_cast<std::size_t>((y * width + x) * 3);
    rgb[i] = c.r;
    rgb[i + 1] = c.g;
    rgb[i + 2] = c.b;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

struct Observation {
  std::array<std::uint8_t, kObsBytes> pixels{};

  Rgb at(int x, int y) const {
    const auto i = static_cast<std::size_t>((y * kObsSize + x) * kObsChannels);
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
  Image image() const;
  friend bool operator==(const Observation&, const Observation&) = default;
};

// 7x7 tile; transparent pixels show the cell underneath.
struct Tile {
  std::array<Rgb, kTile * kTile> px{};
  std::array<bool, kTile * kTile> opaque{};
};

enum class PlantStage : std::uint8_t { sapling, ripe };

class TextureAtlas {
 public:
  // Shared immutable atlas.
  static const TextureAtlas& instance();

  const Tile& material(Material m, int variant) const;
  const Tile& creature(const Creature& c, int ripe_steps) const;
  const Tile& player(Facing f, bool sleeping) const;

  const Tile& cow(int variant) const { return cows_[static_cast<std::size_t>(variant - 1)]; }
  const Tile& zombie(int variant) const { return zombies_[static_cast<std::size_t>(variant - 1)]; }
  const Tile& skeleton(int variant) const { return skeletons_[static_cast<std::size_t>(variant - 1)]; }

  // Swatch colour of an inventory slot.
  static Rgb slot_colour(Resource r);
  static Rgb glyph_colour() { return {255, 255, 255}; }
  // 3x5 digit bitmap, row-major, for 0..9.
  static const std::array<std::uint16_t, 10>& digits();

 private:
  TextureAtlas();
  std::array<std::array<Tile, kNumVariants>, kNumMaterials> materials_{};
  std::array<Tile, kNumVariants> cows_{};
  std::array<Tile, kNumVariants> zombies_{};
  std::array<Tile, kNumVariants> skeletons_{};
  std::array<Tile, 4> arrows_{};
  std::array<Tile, 2> plants_{};
  std::array<Tile, 4> players_{};
  Tile player_sleeping_{};
};

// Per-pixel multiplier in 1/256 units applied to the map region.
int night_shade(double light, bool sleeping);

Observation render(const WorldState& state, bool show_inventory);
Observation render(const WorldState& state, const EnvSpec& spec);

// Whole world at `tile` pixels per cell (nearest-neighbour scaled tiles),
// without shading.
Image render_full_map(const WorldState& state, int tile = kTile);

// Inventory count shown in a strip slot, or -1 if the glyph is unreadable.
int decode_slot(const Observation& obs, int slot);

// Nearest-neighbour upscale.
Image upscale(const Image& img, int factor);

void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

}  // namespace crafter
