#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "dynaseg/types.hpp"

namespace dynaseg {

/// Scenario families: a static object, an object moving without (Easy) or
/// with (Hard) motion consensus inversion, an object carried rigidly with the
/// camera very close to it (VeryHard), and a static camera facing a large
/// moving object (StaticCamera).
enum class Preset { Static, Easy, Hard, VeryHard, StaticCamera };

std::string to_string(Preset preset);
Preset parse_preset(const std::string& name);

struct ScenarioConfig {
  Preset preset = Preset::Easy;
  std::uint64_t seed = 1;
  std::string sequence_id;  // empty: "<preset>_<seed>"

  int width = 1280;
  int height = 720;
  double fps = 30.0;
  int frame_count = 600;
  CameraIntrinsics intrinsics{700.0, 700.0, 640.0, 360.0};

  /// Static landmarks spread over the room surfaces.
  int n_features = 3000;
  int n_object_points = 400;
  Eigen::Vector3d object_size{0.8, 0.8, 0.8};
  /// Object distance from the camera when placed (meters).
  double object_depth = 3.0;
  /// Object translation per frame while moving (meters).
  double object_speed = 0.03;
  /// Appearance identity: objects with equal ids share descriptor words.
  int object_id = 0;
  int motion_start = 200;
  int motion_stop = 240;

  double reprojection_gate = 2.0;
  double pixel_noise = 0.3;
  double dropout = 0.05;
  int ghosts_per_frame = 4;
  int runs = 10;

  /// Defaults tuned per preset (object size, depth, speed, point count).
  static ScenarioConfig for_preset(Preset preset, std::uint64_t seed = 1);
  void validate() const;
  std::string id() const;
};

/// Meta file carrying the scenario in its extra keys.
SequenceMeta scenario_meta(const ScenarioConfig& config);
/// Inverse of scenario_meta; throws ValidationError when keys are missing.
ScenarioConfig scenario_from_meta(const SequenceMeta& meta);

enum class MotionHypothesis { StaticWorld, ObjectWorld };

/// Noise-free view of one landmark in one frame, with the positions predicted
/// from the previous frame under both motion hypotheses.
struct Observation {
  int point = 0;
  bool on_object = false;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Eigen::Vector2d predicted_static = Eigen::Vector2d::Zero();
  Eigen::Vector2d predicted_object = Eigen::Vector2d::Zero();
};

/// Deterministic synthetic world: room of static landmarks, one cuboid object,
/// camera trajectory, and per-frame visibility with occlusion by the object.
class Scene {
 public:
  explicit Scene(const ScenarioConfig& config);

  const ScenarioConfig& config() const noexcept { return config_; }
  SequenceMeta meta() const { return scenario_meta(config_); }
  int frame_count() const noexcept { return config_.frame_count; }

  int landmark_count() const noexcept { return static_cast<int>(points_.size()); }
  bool on_object(int point) const { return point >= static_count_; }
  int descriptor(int point) const { return descriptors_.at(point); }

  Eigen::Isometry3d camera_pose(int frame) const;  // camera-to-world
  Eigen::Isometry3d object_pose(int frame) const;  // object-to-world
  /// Object rigid motion between frame - 1 and frame (identity at frame 0).
  Eigen::Isometry3d object_motion(int frame) const;
  bool object_moving(int frame) const;

  Eigen::Vector3d world_point(int point, int frame) const;
  std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& world, int frame) const;
  /// Where `point` should appear in `frame` if the previous frame's structure
  /// moved according to `hypothesis`. nullopt when it projects behind the camera.
  std::optional<Eigen::Vector2d> predict(int point, int frame, MotionHypothesis hypothesis) const;

  const std::vector<Observation>& observations(int frame) const { return observations_.at(frame); }
  MotionHypothesis dominant(int frame) const { return dominant_.at(frame); }
  bool consensus_inverted(int frame) const { return dominant(frame) == MotionHypothesis::ObjectWorld; }

  /// Projected object silhouette (convex hull of its corners) when in view.
  std::optional<std::vector<Eigen::Vector2d>> object_silhouette(int frame) const;
  std::optional<BBox> object_box(int frame) const;

 private:
  void build_world();
  void build_frames();

  ScenarioConfig config_;
  std::vector<Eigen::Vector3d> points_;  // static world coords, then object-local coords
  std::vector<Eigen::Vector3d> normals_; // object-local outward normals (object points only)
  std::vector<int> descriptors_;
  int static_count_ = 0;
  Eigen::Isometry3d object_origin_ = Eigen::Isometry3d::Identity();
  Eigen::Vector3d object_velocity_ = Eigen::Vector3d::Zero();
  Eigen::Isometry3d object_in_camera_ = Eigen::Isometry3d::Identity();
  std::vector<Eigen::Isometry3d> cameras_;
  std::vector<Eigen::Isometry3d> objects_;
  std::vector<std::vector<Observation>> observations_;
  std::vector<MotionHypothesis> dominant_;
};

struct GroundTruth {
  Trajectory trajectory;
  std::map<int, BBox> boxes;
  MaskSequence masks;
  std::vector<bool> consensus_inverted;
  std::vector<bool> object_moving;
  double tracking_rate = 1.0;
};

GroundTruth ground_truth(const Scene& scene);

/// Feature records of one run: per-run noise, dropout and ghost outliers; a
/// feature is an outlier when it misses the frame's dominant-motion prediction
/// by more than the reprojection gate.
std::vector<FeatureRecord> generate_run(const Scene& scene, int run);

struct Simulation {
  SequenceMeta meta;
  GroundTruth truth;
  std::vector<std::vector<FeatureRecord>> runs;
};

Simulation generate(const ScenarioConfig& config);

/// Writes meta.txt, gt_trajectory.txt, gt_masks.jsonl and
/// features_run_NN.jsonl into `dir`.
void emit_run_files(const Simulation& sim, const std::filesystem::path& dir);

struct ReferenceTrackerConfig {
  /// Frames with fewer supporting features for the winning hypothesis are lost.
  int min_support = 20;
  /// Relative noise on each translation increment.
  double increment_noise = 0.02;
  /// Monocular scale drawn per run from [min_scale, max_scale].
  double min_scale = 0.5;
  double max_scale = 2.0;
};

/// Minimal stand-in for a feature-based SLAM: in every frame it adopts the
/// motion hypothesis supported by most of the given features (which may have
/// been filtered) and integrates the corresponding camera motion. Records
/// without a landmark id are ignored.
Trajectory track_run(const Scene& scene, std::span<const FeatureRecord> records, int run,
                     const ReferenceTrackerConfig& config = {});

}  // namespace dynaseg
