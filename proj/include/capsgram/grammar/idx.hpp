#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "capsgram/grammar/grammar.hpp"

namespace capsgram {

/// 8-bit grayscale images, row-major, image after image.
struct ImageSet {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  /// Image i as [1,H,W] with values pixel / 255.
  Tensor image(std::size_t i) const;
  void append(const Tensor& image);
};

/// round(p * 255) after clamping p to [0,1].
std::uint8_t quantize(Real p);

/// IDX images: 00 00 08 03, big-endian u32 count, height, width, then pixels.
void write_idx_images(const std::filesystem::path& path, const ImageSet& images);
ImageSet read_idx_images(const std::filesystem::path& path);

/// IDX labels: 00 00 08 01, big-endian u32 count, then one byte per label.
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

/// One JSON object per line: index, label, parts (name, glyph, box), swap
/// (swapped scenes only) and the derivation.
void write_manifest(const std::filesystem::path& path, const std::vector<SceneManifest>& manifests);
std::vector<SceneManifest> read_manifest(const std::filesystem::path& path);

}  // namespace capsgram
