#pragma once

// Checkpoint directory layout:
//   manifest.json  format_version, architecture, normalization and a tensor directory
//                  (name, shape, byte offset) in payload order
//   params.bin     little-endian float32 values of every tensor, concatenated
// Batch-norm running statistics are stored as tensors alongside the parameters.

#include <filesystem>

#include "lcnet/dataset.hpp"
#include "lcnet/network.hpp"

namespace lcnet {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  NetworkSpec<float> net;
  Normalization normalization;
};

void save_checkpoint(const NetworkSpec<float>& net, const Normalization& normalization,
                     const std::filesystem::path& dir);

// Throws CheckpointError on a missing file, version mismatch, unknown or missing tensor, shape
// mismatch (naming the tensor) or a payload of the wrong length.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace lcnet
