#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dynaseg/geometry.hpp"
#include "dynaseg/run_merge.hpp"
#include "dynaseg/types.hpp"

namespace dynaseg {

struct DetectorConfig {
  std::vector<int> window_sizes{100, 200, 300, 400};
  int stride = 50;
  int frame_gap = 3;
  double s_max = 0.15;
  double epsilon = 0.5;
  /// Both windows need this many features per run on average.
  double min_features = 10.0;
  /// The clipped warped window must keep this fraction of its area.
  double min_retained_fraction = 0.5;

  void validate() const;
};

struct WindowScore {
  int frame = 0;
  BBox box;     // w, at `frame`
  BBox warped;  // w', at `frame + frame_gap`
  double score = 1.0;
  WindowCounts current;
  WindowCounts future;

  bool flagged(double s_max) const noexcept { return score < s_max; }
};

enum class SkipReason { None, TrajectoryGap, OffImage, TooFewFeatures };

struct WindowOutcome {
  SkipReason skip = SkipReason::None;
  WindowScore score;

  bool scored() const noexcept { return skip == SkipReason::None; }
};

/// ((out_w + eps) / (in_w + eps)) / ((out_w' + eps) / (in_w' + eps)).
double outlier_score(const WindowCounts& current, const WindowCounts& future, double epsilon) noexcept;

/// Read-only inputs shared by every window of a scan.
struct DetectionInputs {
  const MergedFeatureMap& map;
  const Trajectory& trajectory;
  FrameClock clock;
  CameraIntrinsics intrinsics;
};

/// Scores `box` at `frame` against its rotation-compensated counterpart at
/// `frame + frame_gap`. The min-feature guard is not applied here.
WindowOutcome score_window(const DetectionInputs& in, int frame, const BBox& box, const DetectorConfig& config);

struct ScanStats {
  std::int64_t scored = 0;
  std::int64_t flagged = 0;
  std::int64_t skipped_gap = 0;
  std::int64_t skipped_off_image = 0;
  std::int64_t skipped_sparse = 0;
};

struct ScanResult {
  std::vector<WindowScore> flagged;  // ordered by (frame, size, y, x)
  ScanStats stats;
};

/// Stride-aligned windows fully inside the image, ordered by (size, y, x).
std::vector<BBox> enumerate_windows(int width, int height, const DetectorConfig& config, int frame = 0);

ScanResult scan_sequence(const DetectionInputs& in, const DetectorConfig& config, int jobs = 1);

// JSON-lines {"frame":t,"box":[x0,y0,x1,y1],"S":float}.
void write_flagged_windows(const std::vector<WindowScore>& windows, const std::filesystem::path& path);
std::vector<WindowScore> read_flagged_windows(const std::filesystem::path& path);

}  // namespace dynaseg
