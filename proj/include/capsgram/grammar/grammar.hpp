#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "capsgram/tensor/random.hpp"
#include "capsgram/tensor/tensor.hpp"

namespace capsgram {

constexpr std::size_t kGlyphExtent = 7;

/// A terminal's picture, row-major kGlyphExtent x kGlyphExtent, values in [0,1].
using Bitmap = std::array<Real, kGlyphExtent * kGlyphExtent>;

struct Offset {
  int dy = 0;
  int dx = 0;

  bool operator==(const Offset&) const = default;
};

struct OrAlternative {
  std::string symbol;
  Real likelihood = 0.0;
};

struct AndChild {
  std::string symbol;
  Offset offset;   // relative to the parent's centre
  int jitter = 0;  // each axis uniform in [-jitter, jitter]
};

/// AND-OR grammar over 2-D placements. Terminal symbols map to glyph ids and
/// glyph ids to bitmaps. The start symbol is centred on the canvas, moved by
/// up to `root_jitter` on each axis.
struct SceneGrammar {
  std::string name;
  std::string start;
  int root_jitter = 0;
  std::map<int, Bitmap> glyphs;
  std::map<std::string, int> terminals;
  std::map<std::string, std::vector<OrAlternative>> or_rules;
  std::map<std::string, std::vector<AndChild>> and_rules;

  /// Throws DomainError on bad likelihoods, unknown symbols, symbols with
  /// more than one definition, cycles, or glyph values outside [0,1].
  void validate() const;
  /// Glyph ids reachable from the start symbol.
  std::vector<int> glyph_ids() const;
};

/// Half-open pixel rectangle [y0,y1) x [x0,x1).
struct Box {
  int y0 = 0;
  int x0 = 0;
  int y1 = 0;
  int x1 = 0;

  int area() const { return (y1 - y0) * (x1 - x0); }
  int height() const { return y1 - y0; }
  int width() const { return x1 - x0; }
  bool operator==(const Box&) const = default;
};

int intersection_area(const Box& a, const Box& b);

/// Tight box of the non-zero pixels, relative to the glyph's top-left corner.
Box glyph_bounds(const Bitmap& glyph);

struct ScenePart {
  std::string name;  // the AND child symbol that placed it
  int glyph = 0;
  Box box;  // tight box of the stamped glyph
};

/// Rule choices of one derivation, in pre-order: the alternative picked at
/// every OR node, and the jitter drawn for the root and every AND child.
struct Derivation {
  std::vector<std::size_t> or_choices;
  std::vector<Offset> jitters;

  bool operator==(const Derivation&) const = default;
};

struct SceneManifest {
  std::size_t index = 0;
  int label = 0;
  std::vector<ScenePart> parts;
  Derivation derivation;
  std::array<int, 2> swap{-1, -1};  // probe scenes only

  bool has_swap() const { return swap[0] >= 0; }
};

struct Scene {
  Tensor image;  // [1, canvas, canvas]
  SceneManifest manifest;
};

/// Largest overlap allowed between two parts, as a fraction of the smaller box.
constexpr Real kMaxPartOverlap = 0.2;
/// Jitter draws per scene before sample_scene gives up.
constexpr int kPlacementAttempts = 10;

/// Expands the start symbol: OR alternatives drawn by likelihood, AND
/// children placed at offset plus jitter, glyphs stamped additively and
/// clamped to [0,1]. Jitter is redrawn while a part leaves the canvas or two
/// parts overlap too much; DomainError after kPlacementAttempts draws.
Scene sample_scene(const SceneGrammar& grammar, Rng& rng, std::size_t canvas, int label = 0);

/// Re-renders a recorded derivation. Throws DomainError if the choices do not
/// fit the grammar or a part leaves the canvas.
Scene replay(const SceneGrammar& grammar, const Derivation& derivation, std::size_t canvas, int label = 0);

/// Adds `glyph` with its top-left corner at (y0,x0), clamping to [0,1].
void stamp(Tensor& image, const Bitmap& glyph, int y0, int x0);

/// Face: LeftEye, RightEye, Nose and Mouth, each an OR over two glyphs.
SceneGrammar builtin_face_grammar();
/// Families of 3 to 5 parts with fixed pseudo-random layouts, drawn from a
/// glyph set disjoint from the face grammar's.
SceneGrammar builtin_distractor_grammar();

}  // namespace capsgram
