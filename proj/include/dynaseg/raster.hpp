#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "dynaseg/types.hpp"

namespace dynaseg {

enum class Connectivity { Four, Eight };

struct ComponentLabels {
  /// 0 is background, components are numbered from 1 in raster scan order.
  Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels;
  /// sizes[i] is the pixel count of label i + 1.
  std::vector<std::int64_t> sizes;
};

ComponentLabels label_components(const Raster& mask, Connectivity connectivity);

/// Keeps the component with the most pixels; ties go to the earliest label.
Raster largest_component(const Raster& mask, Connectivity connectivity = Connectivity::Four);

/// Squared Euclidean distance (in pixels^2) from every pixel to the nearest
/// foreground pixel; +inf everywhere when the raster is empty.
Eigen::ArrayXXd squared_distance_transform(const Raster& mask);

/// Disk dilation: a pixel is set when a foreground pixel lies within `radius`.
Raster dilate(const Raster& mask, double radius);

std::int64_t count_foreground(const Raster& mask);

/// Tight pixel bounding box (half-open), nullopt when empty.
std::optional<BBox> bounding_box(const Raster& mask, int frame = 0);

/// Convex hull, counter-clockwise in image coordinates, collinear points dropped.
std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> points);

/// Sets every pixel whose square [c, c+1) x [r, r+1) comes within `margin` of
/// the convex polygon (measured per axis). margin >= 0.5 guarantees that each
/// vertex's containing pixel is set.
void fill_convex_polygon(Raster& mask, const std::vector<Eigen::Vector2d>& polygon, double margin);

/// Sets every pixel whose center lies in the box expanded by `radius`
/// (Minkowski sum with a disk).
Raster box_dilated(const BBox& box, double radius, int width, int height);

}  // namespace dynaseg
