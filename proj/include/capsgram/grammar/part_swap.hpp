#pragma once

#include <array>
#include <cstddef>

#include "capsgram/grammar/grammar.hpp"

namespace capsgram {

struct SwapResult {
  Tensor image;
  SceneManifest manifest;  // glyph ids of the pair exchanged, swap recorded
  std::array<std::size_t, 2> pair{};
};

/// Exchanges the contents of parts i and j of a rendered scene. Each patch is
/// resized to the other's box by nearest neighbour; pixels outside the two
/// boxes are untouched. Throws DomainError if the boxes intersect.
SwapResult swap_parts(const Tensor& image, const SceneManifest& manifest, std::size_t i, std::size_t j);

/// swap_parts on a pair drawn uniformly from the pairs whose boxes do not
/// intersect. Throws DomainError with fewer than two parts or no such pair.
SwapResult part_swap(const Tensor& image, const SceneManifest& manifest, Rng& rng);

}  // namespace capsgram
