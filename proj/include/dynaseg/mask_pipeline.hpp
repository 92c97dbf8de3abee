#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dynaseg/geometry.hpp"
#include "dynaseg/run_merge.hpp"
#include "dynaseg/types.hpp"
#include "dynaseg/window_detector.hpp"

namespace dynaseg {

struct MaskGenConfig {
  int k = 15;
  double refine_density_threshold = 0.25;
  double dilation_radius = 10.0;
  double search_margin = 30.0;
  /// Propagation stops in a direction after this many consecutive empty frames.
  int max_empty_frames = 5;

  void validate() const;
};

/// What refiners and trackers may look at. `trajectory` may be null, in which
/// case no motion compensation is applied across frames.
struct MaskContext {
  const MergedFeatureMap& map;
  const Trajectory* trajectory = nullptr;
  FrameClock clock;
  CameraIntrinsics intrinsics;
  std::string sequence_id;

  int width() const noexcept { return map.width(); }
  int height() const noexcept { return map.height(); }
  int frame_count() const noexcept { return map.frame_count(); }
};

/// Turns a box into a single object mask at the box's frame.
class SegmenterPlugin {
 public:
  virtual ~SegmenterPlugin() = default;
  /// nullopt: nothing to segment, the box is dropped.
  virtual std::optional<Raster> refine(const MaskContext& ctx, const BBox& box, const MaskGenConfig& config) = 0;
};

/// Follows a mask from one frame to an adjacent one.
class TrackerPlugin {
 public:
  virtual ~TrackerPlugin() = default;
  /// nullopt: object not found in `next_frame`.
  virtual std::optional<Raster> track(const MaskContext& ctx, const Raster& previous, int previous_frame,
                                      int next_frame, const MaskGenConfig& config) = 0;
};

/// Accumulates rotation-compensated outlier cells of frames [t-k, t+k] inside
/// the box, thresholds at a fraction of the densest cell, dilates, and keeps
/// the largest 4-connected component.
class GeometricSegmenter final : public SegmenterPlugin {
 public:
  std::optional<Raster> refine(const MaskContext& ctx, const BBox& box, const MaskGenConfig& config) override;
};

/// Re-runs the single-frame refiner inside the previous mask's bounding box
/// grown by the search margin.
class GeometricTracker final : public TrackerPlugin {
 public:
  std::optional<Raster> track(const MaskContext& ctx, const Raster& previous, int previous_frame, int next_frame,
                              const MaskGenConfig& config) override;
};

/// Plugins backed by an external executable. The request JSON is fed on
/// stdin; stdout must carry {"empty":true} or {"rle":[...],"first":0|1}.
class ProcessSegmenter final : public SegmenterPlugin {
 public:
  explicit ProcessSegmenter(std::string command) : command_(std::move(command)) {}
  std::optional<Raster> refine(const MaskContext& ctx, const BBox& box, const MaskGenConfig& config) override;

 private:
  std::string command_;
};

class ProcessTracker final : public TrackerPlugin {
 public:
  explicit ProcessTracker(std::string command) : command_(std::move(command)) {}
  std::optional<Raster> track(const MaskContext& ctx, const Raster& previous, int previous_frame, int next_frame,
                              const MaskGenConfig& config) override;

 private:
  std::string command_;
};

/// Per frame, replaces every connected group of overlapping boxes by its hull
/// until no two boxes overlap. Output ordered by (frame, y0, x0).
std::vector<BBox> merge_boxes(std::vector<BBox> boxes);
std::vector<BBox> merge_boxes(const std::vector<WindowScore>& flagged);

/// Single-frame-or-interval geometric refinement inside `region`, anchored at
/// `anchor`: the core shared by GeometricSegmenter and GeometricTracker.
std::optional<Raster> refine_outlier_region(const MaskContext& ctx, const BBox& region, int anchor, int first_frame,
                                            int last_frame, const MaskGenConfig& config);

/// Runs the plugin (or the geometric default) and checks its contract: the
/// mask has image size, is nonempty and intersects the box.
std::optional<Raster> refine_box(const MaskContext& ctx, const BBox& box, const MaskGenConfig& config,
                                 SegmenterPlugin* plugin = nullptr);

/// Tracks `seed` (at `frame`) forward and backward. Short gaps (fewer than
/// max_empty_frames) are bridged with the last mask so each direction covers a
/// contiguous interval.
MaskSequence propagate_mask(const MaskContext& ctx, const Raster& seed, int frame, const MaskGenConfig& config,
                            TrackerPlugin* plugin = nullptr, int object_id = 0);

/// Pixelwise OR per frame; object_id 0. Throws ValidationError on mismatched
/// sequence id or resolution.
MaskSequence superimpose(const std::vector<MaskSequence>& masks);

/// Flagged windows -> merged boxes -> refined seeds -> propagated sequences,
/// one per object. A seed mostly covered by an existing sequence is skipped.
std::vector<MaskSequence> build_masks(const MaskContext& ctx, const std::vector<WindowScore>& flagged,
                                      const MaskGenConfig& config, SegmenterPlugin* segmenter = nullptr,
                                      TrackerPlugin* tracker = nullptr);

struct TrainingEntry {
  int frame = 0;
  std::string mask_file;
};

/// Writes frame_%06d.pgm per masked frame plus manifest.json into `dir`.
std::vector<TrainingEntry> export_training_set(const MaskSequence& masks, const SequenceMeta& meta,
                                               const std::filesystem::path& dir);

}  // namespace dynaseg
