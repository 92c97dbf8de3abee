#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace dynaseg {

struct Correspondence {
  Eigen::Vector2d from;
  Eigen::Vector2d to;
};

struct MotionEstimate {
  Eigen::Matrix3d homography = Eigen::Matrix3d::Identity();
  std::vector<bool> inliers;
  int inlier_count = 0;
};

/// Normalized DLT homography through >= 4 correspondences.
std::optional<Eigen::Matrix3d> fit_homography(std::span<const Correspondence> matches);

/// Transfer error |H from - to|, +inf when mapped behind the plane at infinity.
double transfer_error(const Eigen::Matrix3d& h, const Correspondence& match);

/// RANSAC over 4-point homographies followed by a refit on the inliers:
/// the image motion agreed on by most features.
std::optional<MotionEstimate> estimate_dominant_motion(std::span<const Correspondence> matches, double threshold,
                                                       int iterations, std::uint64_t seed);

}  // namespace dynaseg
