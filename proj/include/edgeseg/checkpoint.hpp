/// @file checkpoint.hpp
/// @brief Binary checkpoint container: named tensors plus topology metadata.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgeseg/network.hpp"

namespace edgeseg {

struct CheckpointEntry {
  std::string name;
  Tensor<float> data;
};

struct Checkpoint {
  std::uint64_t topology_hash = 0;
  std::uint64_t encoder_hash = 0;
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
  std::int64_t optimizer_steps = 0;
  std::vector<CheckpointEntry> tensors;

  const Tensor<float>* find(const std::string& name) const;
};

// Single-file little-endian container. Overwrites the destination.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

// Throws IoError when unreadable, FormatError/TruncationError when malformed.
Checkpoint load_checkpoint(const std::string& path);

struct EncoderLoadReport {
  std::int64_t loaded = 0;
  std::int64_t skipped = 0;
};

// Copies every checkpoint tensor named "encoder.*" into the matching model
// parameter (same name, same shape); everything else in the model is left
// untouched. strict additionally requires the encoder hashes to agree and
// every encoder tensor to land, and names the offenders otherwise.
EncoderLoadReport load_encoder_checkpoint(ModelGraph<float>& model, const std::string& path, bool strict);

// Full restore for resume: every model parameter must be present with the
// exact shape, and the topology hash must match.
void restore_model(ModelGraph<float>& model, const Checkpoint& checkpoint);

}  // namespace edgeseg
