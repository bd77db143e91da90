#include <utility>

#include "capsgram/error.hpp"
#include "capsgram/grammar/grammar.hpp"

namespace capsgram {

namespace {

// '#' full intensity, '+' half, '.' empty.
Bitmap art(const std::array<const char*, kGlyphExtent>& rows) {
  Bitmap b{};
  for (std::size_t y = 0; y < kGlyphExtent; ++y) {
    for (std::size_t x = 0; x < kGlyphExtent; ++x) {
      const char c = rows[y][x];
      b[y * kGlyphExtent + x] = c == '#' ? 1.0 : c == '+' ? 0.5 : 0.0;
    }
  }
  return b;
}

Bitmap mirror(const Bitmap& b) {
  Bitmap m{};
  for (std::size_t y = 0; y < kGlyphExtent; ++y) {
    for (std::size_t x = 0; x < kGlyphExtent; ++x) {
      m[y * kGlyphExtent + x] = b[y * kGlyphExtent + (kGlyphExtent - 1 - x)];
    }
  }
  return m;
}

// Face part glyphs: eyes 5x7, nose 6x5, mouth 3x7 tight boxes.
const Bitmap kEyeA = art({".......",
                          "##.....",
                          "..####.",
                          ".#..#.#",
                          ".#.##.#",
                          "..####.",
                          "......."});
const Bitmap kEyeB = art({".......",
                          "###....",
                          "..###..",
                          ".#++##.",
                          "#.+#+.#",
                          ".#####.",
                          "......."});
const Bitmap kNoseA = art({"..#....",
                           "..#....",
                           "..#....",
                           "..##...",
                           ".####..",
                           ".#####.",
                           "......."});
const Bitmap kNoseB = art({"...#...",
                           "...#...",
                           "..#+#..",
                           "..#+#..",
                           ".#+++#.",
                           ".##.##.",
                           "......."});
const Bitmap kMouthA = art({".......",
                            ".......",
                            "#.....#",
                            ".#...#.",
                            "..###..",
                            ".......",
                            "......."});
const Bitmap kMouthB = art({".......",
                            ".......",
                            ".#####.",
                            "#+++++#",
                            ".#####.",
                            ".......",
                            "......."});

const std::array<Bitmap, 8> kDistractorGlyphs = {
    art({"...#...", "...#...", "...#...", "#######", "...#...", "...#...", "...#..."}),
    art({"#.....#", ".#...#.", "..#.#..", "...#...", "..#.#..", ".#...#.", "#.....#"}),
    art({"#######", "#.....#", "#.....#", "#.....#", "#.....#", "#.....#", "#######"}),
    art({"...#...", "..###..", "..###..", ".#####.", ".#####.", "#######", "......."}),
    art({"#......", ".#.....", "..#....", "...#...", "....#..", ".....#.", "......#"}),
    art({"#######", "#######", "...#...", "...#...", "...#...", "...#...", "......."}),
    art({"#......", "#......", "#......", "#......", "#......", "#######", "#######"}),
    art({"#.#.#.#", ".#.#.#.", "#.#.#.#", ".#.#.#.", "#.#.#.#", ".#.#.#.", "#.#.#.#"}),
};

constexpr int kFirstDistractorGlyph = 8;
constexpr int kDistractorFamilies = 6;
constexpr int kFamilySpacing = 9;
constexpr std::uint64_t kLayoutSeed = 0x6c61796f7574;

}  // namespace

SceneGrammar builtin_face_grammar() {
  SceneGrammar g;
  g.name = "face";
  g.start = "Face";
  g.root_jitter = 2;
  const std::array<Bitmap, 8> glyphs = {kEyeA, kEyeB, mirror(kEyeA), mirror(kEyeB), kNoseA, kNoseB, kMouthA, kMouthB};
  const std::array<const char*, 4> parts = {"LeftEye", "RightEye", "Nose", "Mouth"};
  for (int id = 0; id < 8; ++id) {
    g.glyphs[id] = glyphs[static_cast<std::size_t>(id)];
    const std::string part = parts[static_cast<std::size_t>(id / 2)];
    const std::string terminal = part + (id % 2 == 0 ? ".A" : ".B");
    g.terminals[terminal] = id;
    g.or_rules[part].push_back({terminal, 0.5});
  }
  g.and_rules["Face"] = {{"LeftEye", {-6, -5}, 1}, {"RightEye", {-6, 5}, 1}, {"Nose", {0, 0}, 1}, {"Mouth", {6, 0}, 1}};
  g.validate();
  return g;
}

SceneGrammar builtin_distractor_grammar() {
  SceneGrammar g;
  g.name = "distractor";
  g.start = "Distractor";
  g.root_jitter = 2;
  for (std::size_t k = 0; k < kDistractorGlyphs.size(); ++k) {
    const int id = kFirstDistractorGlyph + static_cast<int>(k);
    g.glyphs[id] = kDistractorGlyphs[k];
    g.terminals["Glyph" + std::to_string(id)] = id;
  }
  Rng rng(kLayoutSeed);
  for (int f = 0; f < kDistractorFamilies; ++f) {
    const std::string family = "Family" + std::to_string(f);
    const int n_parts = 3 + f % 3;
    // distinct cells of a 3x3 lattice, so part centres stay kFamilySpacing apart
    std::array<int, 9> cells{0, 1, 2, 3, 4, 5, 6, 7, 8};
    for (std::size_t k = cells.size(); k > 1; --k) std::swap(cells[k - 1], cells[rng.below(k)]);
    std::vector<AndChild> children;
    for (int k = 0; k < n_parts; ++k) {
      const Offset o{(cells[static_cast<std::size_t>(k)] / 3 - 1) * kFamilySpacing,
                     (cells[static_cast<std::size_t>(k)] % 3 - 1) * kFamilySpacing};
      const std::string part = family + ".Part" + std::to_string(k);
      children.push_back({part, o, 1});
      // two distinct glyphs per part
      const std::size_t a = rng.below(kDistractorGlyphs.size());
      const std::size_t b = (a + 1 + rng.below(kDistractorGlyphs.size() - 1)) % kDistractorGlyphs.size();
      for (std::size_t c : {a, b}) {
        g.or_rules[part].push_back({"Glyph" + std::to_string(kFirstDistractorGlyph + static_cast<int>(c)), 0.5});
      }
    }
    g.and_rules[family] = children;
    g.or_rules["Distractor"].push_back({family, 1.0 / kDistractorFamilies});
  }
  g.validate();
  return g;
}

}  // namespace capsgram
