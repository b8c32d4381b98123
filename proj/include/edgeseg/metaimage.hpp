#pragma once

#include <filesystem>

#include "edgeseg/volume.hpp"

namespace edgeseg {

// Stored scalar types we accept. Compressed data files are rejected.
enum class MetaElementType { int8, uint8, int16, uint16, float32 };

// Reads a 3-D MetaImage (.mhd with sibling .raw, or single-file LOCAL data).
// When the caller requests a label, values are checked to be in {0, 1}.
Volume read_metaimage(const std::filesystem::path& header_path, VolumeKind kind = VolumeKind::image);

// Writes header + raw data so that read_metaimage inverts it bit-exactly for
// the stored element type. Labels default to uint8 storage, images to float32.
void write_metaimage(const Volume& volume, const std::filesystem::path& header_path);
void write_metaimage(const Volume& volume, const std::filesystem::path& header_path, MetaElementType element_type,
                     bool msb_byte_order = false);

}  // namespace edgeseg
