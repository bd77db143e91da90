#pragma once

#include <filesystem>
#include <vector>

#include "capsgram/models/model.hpp"

namespace capsgram {

/// Binary layout: "CGL1", then for each parameter: name length, name bytes,
/// rank, extents (little-endian u64) and the values as little-endian IEEE
/// doubles.
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Raw contents of a checkpoint. Throws FormatError on a bad magic, a
/// truncated record or trailing garbage.
std::vector<Parameter> read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `model`. The names and shapes must match the
/// model's parameters one for one, otherwise FormatError.
void load_checkpoint(Model& model, const std::filesystem::path& path);

}  // namespace capsgram
