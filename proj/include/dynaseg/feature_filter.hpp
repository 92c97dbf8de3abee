#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "dynaseg/types.hpp"

namespace dynaseg {

struct KeypointSet {
  int frame = 0;
  std::vector<Eigen::Vector2d> points;
};

struct FilterResult {
  KeypointSet kept;
  /// No mask for this frame: keypoints passed through untouched.
  bool mask_missing = false;
};

/// true for keypoints whose pixel (floor(x), floor(y)) is background.
std::vector<bool> keep_flags(const KeypointSet& keypoints, const Raster& mask);

KeypointSet filter_keypoints(const KeypointSet& keypoints, const Raster& mask);
FilterResult filter_keypoints(const KeypointSet& keypoints, const MaskSequence& masks);

struct FilterStats {
  std::int64_t input = 0;
  std::int64_t kept = 0;
  std::int64_t frames_without_mask = 0;
};

/// Record-level filter, order preserved. Frames without a mask pass through.
std::vector<FeatureRecord> filter_records(const std::vector<FeatureRecord>& records, const MaskSequence& masks,
                                          FilterStats* stats = nullptr);

}  // namespace dynaseg
