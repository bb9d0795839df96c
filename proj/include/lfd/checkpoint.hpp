#pragma once

#include <filesystem>

#include "lfd/model.hpp"

namespace lfd {

inline constexpr int kCheckpointVersion = 1;

// Writes `dir/manifest.json` (format version, architecture, tensor index with
// name/shape/byte offset) and `dir/weights.bin` (little-endian float32 in index
// order). Batch-norm running statistics are stored as ordinary tensors.
void save_checkpoint(const Model<float>& model, const std::filesystem::path& dir);

// Throws IoError when files are missing and FormatError on version/magic or
// shape mismatches against the embedded architecture.
Model<float> load_checkpoint(const std::filesystem::path& dir);

}  // namespace lfd
