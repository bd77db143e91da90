#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capsgram/grammar/idx.hpp"

namespace capsgram {

constexpr int kDistractorLabel = 0;
constexpr int kFaceLabel = 1;

struct DatasetConfig {
  std::size_t n_train = 2000;
  std::size_t n_val = 400;
  std::size_t n_probe = 400;
  std::size_t canvas = 32;
  std::uint64_t seed = 42;

  /// Throws DomainError for odd split sizes or a probe set without faces.
  void validate() const;
};

struct DatasetSplit {
  std::string name;
  ImageSet images;
  std::vector<std::uint8_t> labels;
  std::vector<SceneManifest> manifests;

  std::size_t size() const { return labels.size(); }
};

/// train and val alternate distractor (even index) and face (odd index);
/// probe holds part-swapped copies of the val faces, face label kept.
struct DatasetBundle {
  DatasetConfig config;
  DatasetSplit train;
  DatasetSplit val;
  DatasetSplit probe;

  const DatasetSplit& split(const std::string& name) const;
  /// Indices of `split` whose label is `label`.
  std::vector<std::size_t> indices_with_label(const std::string& split, int label) const;
};

/// Scene `index` of a train/val split: its own rng stream, label index % 2.
Scene dataset_scene(const DatasetConfig& config, const std::string& split, std::size_t index);

DatasetBundle build_dataset(const DatasetConfig& config);

/// Writes <split>-images.idx, <split>-labels.idx, <split>-manifest.jsonl for
/// each split plus dataset.cfg. Creates the directory if needed.
void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle generate_dataset(const DatasetConfig& config, const std::filesystem::path& dir);

/// Reads a bundle written by save_dataset. FormatError when the files
/// disagree with each other or with dataset.cfg.
DatasetBundle load_dataset(const std::filesystem::path& dir);

}  // namespace capsgram
