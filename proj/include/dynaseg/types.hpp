#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace dynaseg {

enum class FeatureStatus : std::uint8_t { Inlier, Outlier };

/// One keypoint observation reported by a SLAM run.
///
/// `point` and `descriptor` are optional extras (-1 when absent): a landmark
/// id usable as a track key, and a quantized descriptor word.
struct FeatureRecord {
  int frame = 0;
  int run = 0;
  double x = 0.0;
  double y = 0.0;
  FeatureStatus status = FeatureStatus::Inlier;
  int point = -1;
  int descriptor = -1;

  bool is_outlier() const noexcept { return status == FeatureStatus::Outlier; }
  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

using FeatureGroups = std::map<int, std::vector<FeatureRecord>>;

struct CameraIntrinsics {
  double fx = 700.0;
  double fy = 700.0;
  double cx = 640.0;
  double cy = 360.0;

  template <typename Scalar = double>
  Eigen::Matrix<Scalar, 3, 3> matrix() const {
    Eigen::Matrix<Scalar, 3, 3> k;
    k << Scalar(fx), Scalar(0), Scalar(cx),
         Scalar(0), Scalar(fy), Scalar(cy),
         Scalar(0), Scalar(0), Scalar(1);
    return k;
  }
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

struct SequenceMeta {
  std::string sequence_id;
  int image_width = 0;
  int image_height = 0;
  double fps = 30.0;
  int frame_count = 0;
  CameraIntrinsics intrinsics;
  /// Keys beyond the required set, kept verbatim and written back sorted.
  std::map<std::string, std::string> extras;

  bool contains(double x, double y) const noexcept {
    return x >= 0.0 && y >= 0.0 && x < image_width && y < image_height;
  }
  void validate() const;
};

/// Camera pose in the world frame; `q` rotates camera coordinates into world.
struct Pose {
  double timestamp = 0.0;
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
};

struct Trajectory {
  std::vector<Pose> poses;
  int tracked_frames = 0;
  int total_frames = 0;

  /// Builds a trajectory whose tracked/total counts both equal poses.size().
  static Trajectory from_poses(std::vector<Pose> poses);
  void validate() const;
};

/// Axis-aligned box, half-open: [x0, x1) x [y0, y1).
struct BBox {
  int frame = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const noexcept { return x1 - x0; }
  double height() const noexcept { return y1 - y0; }
  double area() const noexcept { return width() * height(); }
  bool valid() const noexcept { return x0 < x1 && y0 < y1; }
  bool contains(double x, double y) const noexcept {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

double intersection_area(const BBox& a, const BBox& b) noexcept;
double iou(const BBox& a, const BBox& b) noexcept;
bool overlaps(const BBox& a, const BBox& b) noexcept;
BBox hull(const BBox& a, const BBox& b) noexcept;

/// Binary raster, rows = image height, cols = image width, values 0/1.
using Raster = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major run-length encoding of a binary raster. Runs alternate starting
/// with `first`; every run length is positive.
struct Rle {
  int width = 0;
  int height = 0;
  std::uint8_t first = 0;
  std::vector<std::int64_t> runs;

  friend bool operator==(const Rle&, const Rle&) = default;
};

/// Per-frame binary masks of one object (object_id 0 is the union object).
struct MaskSequence {
  std::string sequence_id;
  int width = 0;
  int height = 0;
  int object_id = 0;
  std::map<int, Rle> frames;

  bool has(int frame) const { return frames.count(frame) != 0; }
  Raster raster(int frame) const;
  void set(int frame, const Raster& mask);
};

}  // namespace dynaseg
