#pragma once

/// @file metrics.hpp
/// @brief Case-level evaluation: overlap and boundary-distance metrics in
///        the PROMISE12 style.

#include <array>
#include <string>

#include "edgeseg/volume.hpp"

namespace edgeseg {

// 2|A n B| / (|A| + |B|); both masks empty counts as perfect agreement.
double dice_score(const Volume& a, const Volume& b);

struct SurfaceDistances {
  double hd95 = 0.0;  // mm
  double msd = 0.0;   // mm
  bool applicable = false;  // false when either mask is empty
};

// Distances between the 6-connected inner surfaces of the two masks,
// scaled by the voxel spacing. The directed nearest-surface distances of
// both directions are pooled; hd95 is the 95th percentile of the pooled
// sorted distances under linear interpolation, msd their mean. Symmetric
// by construction.
SurfaceDistances surface_distances(const Volume& a, const Volume& b,
                                   const std::array<double, 3>& spacing);

struct MetricsReport {
  std::string case_id;
  double dice = 0.0;
  double hd95 = 0.0;
  double mean_surface_distance = 0.0;
  double relative_volume_difference = 0.0;  // signed percent
  bool distances_applicable = false;         // false when either mask is empty
  bool volume_difference_applicable = false; // false when the ground truth is empty
};

// Requires matching shape and spacing; distances use the shared spacing.
MetricsReport evaluate_case(const Volume& pred, const Volume& gt, const std::string& case_id = "");

}  // namespace edgeseg
