#include <algorithm>

#include "capsgram/error.hpp"
#include "capsgram/grammar/grammar.hpp"

namespace capsgram {

void stamp(Tensor& image, const Bitmap& glyph, int y0, int x0) {
  if (image.rank() != 3 || image.dim(0) != 1) {
    throw ShapeError("stamp: expected image [1,H,W], got " + shape_to_string(image.shape()));
  }
  const int H = static_cast<int>(image.dim(1));
  const int W = static_cast<int>(image.dim(2));
  const int e = static_cast<int>(kGlyphExtent);
  auto px = image.mutable_data();
  for (int u = 0; u < e; ++u) {
    const int y = y0 + u;
    if (y < 0 || y >= H) continue;
    for (int v = 0; v < e; ++v) {
      const int x = x0 + v;
      if (x < 0 || x >= W) continue;
      Real& dst = px[static_cast<std::size_t>(y * W + x)];
      dst = std::min(1.0, dst + glyph[static_cast<std::size_t>(u * e + v)]);
    }
  }
}

}  // namespace capsgram
