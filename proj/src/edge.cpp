#include "edgeseg/edge.hpp"

#include <algorithm>
#include <cmath>

namespace edgeseg {
namespace {

void require_binary(const Volume& v, const char* op) {
  for (float x : v.data) {
    if (!is_binary_value(x)) throw ContractViolation(std::string(op) + ": input must be binary");
  }
}

}  // namespace

Volume extract_edge_map(const Volume& mask) {
  require_binary(mask, "extract_edge_map");
  Volume edge(mask.size[0], mask.size[1], mask.size[2], VolumeKind::label);
  edge.spacing = mask.spacing;
  edge.origin = mask.origin;

  constexpr std::int64_t kNeighbors[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  for (std::int64_t z = 0; z < mask.size[2]; ++z) {
    for (std::int64_t y = 0; y < mask.size[1]; ++y) {
      for (std::int64_t x = 0; x < mask.size[0]; ++x) {
        if (mask.at(x, y, z) != 1.0f) continue;
        bool boundary = false;
        for (const auto& d : kNeighbors) {
          const std::int64_t nx = x + d[0], ny = y + d[1], nz = z + d[2];
          if (!mask.in_bounds(nx, ny, nz) || mask.at(nx, ny, nz) == 0.0f) {
            boundary = true;
            break;
          }
        }
        if (boundary) edge.at(x, y, z) = 1.0f;
      }
    }
  }
  return edge;
}

Volume downsample_edge_map(const Volume& edge, const std::array<std::int64_t, 3>& factor) {
  for (int a = 0; a < 3; ++a) {
    if (factor[a] < 1 || edge.size[a] % factor[a] != 0) {
      throw ContractViolation("downsample_edge_map: factor must divide the shape on axis " + std::to_string(a));
    }
  }
  Volume out(edge.size[0] / factor[0], edge.size[1] / factor[1], edge.size[2] / factor[2], edge.kind);
  out.spacing = {edge.spacing[0] * static_cast<double>(factor[0]), edge.spacing[1] * static_cast<double>(factor[1]),
                 edge.spacing[2] * static_cast<double>(factor[2])};
  out.origin = edge.origin;

  for (std::int64_t z = 0; z < out.size[2]; ++z) {
    for (std::int64_t y = 0; y < out.size[1]; ++y) {
      for (std::int64_t x = 0; x < out.size[0]; ++x) {
        float m = 0.0f;
        for (std::int64_t dz = 0; dz < factor[2]; ++dz) {
          for (std::int64_t dy = 0; dy < factor[1]; ++dy) {
            for (std::int64_t dx = 0; dx < factor[0]; ++dx) {
              m = std::max(m, edge.at(x * factor[0] + dx, y * factor[1] + dy, z * factor[2] + dz));
            }
          }
        }
        out.at(x, y, z) = m;
      }
    }
  }
  return out;
}

Volume haar_edge_map(const Volume& mask) {
  for (int a = 0; a < 3; ++a) {
    if (mask.size[a] % 2 != 0) {
      throw ContractViolation("haar_edge_map: dimensions must be even, axis " + std::to_string(a) + " is " +
                              std::to_string(mask.size[a]));
    }
  }

  Volume out(mask.size[0], mask.size[1], mask.size[2], VolumeKind::image);
  out.spacing = mask.spacing;
  out.origin = mask.origin;

  // Orthonormal taps are +-1/sqrt(8); for binary blocks the high-frequency
  // energy is at most 2 (Parseval), so sqrt(2) normalizes into [0, 1].
  const double inv_sqrt8 = 1.0 / std::sqrt(8.0);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

  for (std::int64_t bz = 0; bz < mask.size[2] / 2; ++bz) {
    for (std::int64_t by = 0; by < mask.size[1] / 2; ++by) {
      for (std::int64_t bx = 0; bx < mask.size[0] / 2; ++bx) {
        double v[2][2][2];
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              v[dx][dy][dz] = static_cast<double>(mask.at(bx * 2 + dx, by * 2 + dy, bz * 2 + dz));

        double hf_energy = 0.0;
        for (int sub = 1; sub < 8; ++sub) {  // skip the LLL subband
          const bool hx = sub & 1, hy = sub & 2, hz = sub & 4;
          double coeff = 0.0;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const int sign = ((hx && dx) ? -1 : 1) * ((hy && dy) ? -1 : 1) * ((hz && dz) ? -1 : 1);
                coeff += sign * v[dx][dy][dz];
              }
          coeff *= inv_sqrt8;
          hf_energy += coeff * coeff;
        }
        const float value = static_cast<float>(std::min(1.0, std::sqrt(hf_energy) * inv_sqrt2));
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) out.at(bx * 2 + dx, by * 2 + dy, bz * 2 + dz) = value;
      }
    }
  }
  return out;
}

EdgeMapSet make_edge_targets(const Volume& label_patch, EdgeExtractor extractor) {
  const Volume full =
      extractor == EdgeExtractor::surface ? extract_edge_map(label_patch) : haar_edge_map(label_patch);
  EdgeMapSet set;
  for (int level = 0; level < 3; ++level) {
    set.levels[static_cast<std::size_t>(level)] = downsample_edge_map(full, kEdgeLevelFactors[static_cast<std::size_t>(level)]);
  }
  return set;
}

}  // namespace edgeseg
