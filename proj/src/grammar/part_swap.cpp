#include "capsgram/grammar/part_swap.hpp"

#include <utility>
#include <vector>

#include "capsgram/error.hpp"

namespace capsgram {

namespace {

// Nearest-neighbour copy of `from` in `src` onto `to` in `dst`.
void resample(std::span<const Real> src, const Box& from, std::span<Real> dst, const Box& to, std::size_t width) {
  for (int y = 0; y < to.height(); ++y) {
    const int sy = from.y0 + y * from.height() / to.height();
    for (int x = 0; x < to.width(); ++x) {
      const int sx = from.x0 + x * from.width() / to.width();
      dst[static_cast<std::size_t>(to.y0 + y) * width + static_cast<std::size_t>(to.x0 + x)] =
          src[static_cast<std::size_t>(sy) * width + static_cast<std::size_t>(sx)];
    }
  }
}

}  // namespace

SwapResult swap_parts(const Tensor& image, const SceneManifest& manifest, std::size_t i, std::size_t j) {
  const auto& parts = manifest.parts;
  if (i >= parts.size() || j >= parts.size() || i == j) {
    throw DomainError("swap_parts: need two distinct part indices below " + std::to_string(parts.size()));
  }
  if (image.rank() != 3 || image.dim(0) != 1) {
    throw ShapeError("swap_parts: expected image [1,H,W], got " + shape_to_string(image.shape()));
  }
  const Box& a = parts[i].box;
  const Box& b = parts[j].box;
  if (intersection_area(a, b) > 0) {
    throw DomainError("swap_parts: boxes of '" + parts[i].name + "' and '" + parts[j].name + "' intersect");
  }
  const int H = static_cast<int>(image.dim(1));
  const int W = static_cast<int>(image.dim(2));
  for (const Box* box : {&a, &b}) {
    if (box->area() <= 0 || box->y0 < 0 || box->x0 < 0 || box->y1 > H || box->x1 > W) {
      throw DomainError("swap_parts: part box outside the image");
    }
  }
  SwapResult out;
  out.image = Tensor(image.shape(), std::vector<Real>(image.data().begin(), image.data().end()));
  auto dst = out.image.mutable_data();
  resample(image.data(), a, dst, b, image.dim(2));
  resample(image.data(), b, dst, a, image.dim(2));
  out.manifest = manifest;
  std::swap(out.manifest.parts[i].glyph, out.manifest.parts[j].glyph);
  out.manifest.swap = {static_cast<int>(std::min(i, j)), static_cast<int>(std::max(i, j))};
  out.pair = {std::min(i, j), std::max(i, j)};
  return out;
}

SwapResult part_swap(const Tensor& image, const SceneManifest& manifest, Rng& rng) {
  const auto& parts = manifest.parts;
  if (parts.size() < 2) throw DomainError("part_swap: scene has fewer than two parts");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t j = i + 1; j < parts.size(); ++j) pairs.emplace_back(i, j);
  }
  // Fisher-Yates with our own draws so the order is platform independent
  for (std::size_t k = pairs.size(); k > 1; --k) std::swap(pairs[k - 1], pairs[rng.below(k)]);
  for (const auto& [i, j] : pairs) {
    if (intersection_area(parts[i].box, parts[j].box) == 0) return swap_parts(image, manifest, i, j);
  }
  throw DomainError("part_swap: every pair of parts overlaps");
}

}  // namespace capsgram
