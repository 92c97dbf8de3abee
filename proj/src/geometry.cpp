#include "dynaseg/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dynaseg {

std::optional<WarpedBox> warp_box(const Homography<double>& h, const BBox& box, int width, int height) {
  const Eigen::Vector2d corners[4] = {{box.x0, box.y0}, {box.x1, box.y0}, {box.x1, box.y1}, {box.x0, box.y1}};
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (const auto& c : corners) {
    const auto p = apply_homography<double>(h, c);
    if (!p) return std::nullopt;
    x0 = std::min(x0, p->x());
    y0 = std::min(y0, p->y());
    x1 = std::max(x1, p->x());
    y1 = std::max(y1, p->y());
  }
  const double full_area = (x1 - x0) * (y1 - y0);
  BBox clipped{box.frame, std::max(x0, 0.0), std::max(y0, 0.0), std::min(x1, double(width)),
               std::min(y1, double(height))};
  if (!clipped.valid() || !(full_area > 0.0)) return std::nullopt;
  return WarpedBox{clipped, clipped.area() / full_area};
}

const Pose* find_pose(const Trajectory& traj, int frame, const FrameClock& clock) noexcept {
  if (traj.poses.empty()) return nullptr;
  const double t = clock.timestamp(frame);
  auto it = std::lower_bound(traj.poses.begin(), traj.poses.end(), t,
                             [](const Pose& p, double ts) { return p.timestamp < ts; });
  const Pose* best = nullptr;
  double best_dt = std::numeric_limits<double>::infinity();
  if (it != traj.poses.end()) {
    best = &*it;
    best_dt = std::abs(it->timestamp - t);
  }
  if (it != traj.poses.begin()) {
    const Pose& prev = *std::prev(it);
    if (std::abs(prev.timestamp - t) <= best_dt) {
      best = &prev;
      best_dt = std::abs(prev.timestamp - t);
    }
  }
  // Small slack so frames sitting exactly half a period away still associate.
  if (best_dt > clock.tolerance() * (1.0 + 1e-9)) return nullptr;
  return best;
}

const Pose& pose_at_frame(const Trajectory& traj, int frame, const FrameClock& clock) {
  const Pose* p = find_pose(traj, frame, clock);
  if (!p) throw GapError(frame, "trajectory has no pose for frame " + std::to_string(frame));
  return *p;
}

RotationDelta<double> rotation_between(const Trajectory& traj, int from, int to, const FrameClock& clock) {
  const Eigen::Matrix3d r_from = pose_at_frame(traj, from, clock).q.toRotationMatrix();
  const Eigen::Matrix3d r_to = pose_at_frame(traj, to, clock).q.toRotationMatrix();
  return r_to * r_from.transpose();
}

RotationDelta<double> camera_rotation_between(const Trajectory& traj, int from, int to, const FrameClock& clock) {
  const Eigen::Matrix3d r_from = pose_at_frame(traj, from, clock).q.toRotationMatrix();
  const Eigen::Matrix3d r_to = pose_at_frame(traj, to, clock).q.toRotationMatrix();
  return r_to.transpose() * r_from;
}

}  // namespace dynaseg
