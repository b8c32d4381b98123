#pragma once

#include <array>

#include "edgeseg/volume.hpp"

namespace edgeseg {

enum class EdgeExtractor { surface, haar };

// Per-scale boundary supervision targets. Level 1 is the coarsest decoder
// scale; the downsample factors relative to the patch are fixed by the
// decoder topology.
struct EdgeMapSet {
  std::array<Volume, 3> levels;  // level 1 (coarse) .. level 3 (full resolution)
};

inline constexpr std::array<std::array<std::int64_t, 3>, 3> kEdgeLevelFactors{{{4, 4, 2}, {2, 2, 1}, {1, 1, 1}}};

// Inner surface under 6-connectivity: output(p) = 1 iff mask(p) = 1 and at
// least one 6-neighbor is 0 (the volume border counts as background).
Volume extract_edge_map(const Volume& mask);

// Block max with window = stride = factor; a coarse voxel is set iff any
// fine voxel in its block is. Factors must divide the shape.
Volume downsample_edge_map(const Volume& edge, const std::array<std::int64_t, 3>& factor);

// Single-level 3D Haar transform of the mask; returns the normalized
// magnitude of the 7 high-frequency subbands replicated back to input shape.
// Values are in [0, 1]; zero exactly where every 2x2x2 dyadic block is
// constant. Requires even dimensions.
Volume haar_edge_map(const Volume& mask);

// Builds the three supervision targets for one label patch.
EdgeMapSet make_edge_targets(const Volume& label_patch, EdgeExtractor extractor = EdgeExtractor::surface);

}  // namespace edgeseg
