#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "dynaseg/error.hpp"
#include "dynaseg/types.hpp"

namespace dynaseg {

template <typename Scalar>
using RotationDelta = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar>
using Homography = Eigen::Matrix<Scalar, 3, 3>;

/// Similarity transform x -> scale * rotation * x + translation.
template <typename Scalar>
struct Sim3 {
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

  Scalar scale = Scalar(1);
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  template <typename Derived>
  auto operator*(const Eigen::MatrixBase<Derived>& points) const {
    return ((scale * rotation) * points).colwise() + translation;
  }

  Sim3 operator*(const Sim3& other) const {
    Sim3 out;
    out.scale = scale * other.scale;
    out.rotation = rotation * other.rotation;
    out.translation = scale * rotation * other.translation + translation;
    return out;
  }

  Sim3 inverse() const {
    Sim3 out;
    out.scale = Scalar(1) / scale;
    out.rotation = rotation.transpose();
    out.translation = -(out.scale * out.rotation * translation);
    return out;
  }

  Eigen::Matrix<Scalar, 4, 4> matrix() const {
    Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Identity();
    m.template topLeftCorner<3, 3>() = scale * rotation;
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }
};

/// H = K * dR * K^-1: maps pixels of a view to a view rotated by dR, ignoring
/// translation.
template <typename Scalar>
Homography<Scalar> compensation_homography(const CameraIntrinsics& intrinsics,
                                           const RotationDelta<Scalar>& rotation) {
  const Eigen::Matrix<Scalar, 3, 3> k = intrinsics.template matrix<Scalar>();
  Eigen::Matrix<Scalar, 3, 3> k_inv = Eigen::Matrix<Scalar, 3, 3>::Identity();
  k_inv(0, 0) = Scalar(1) / k(0, 0);
  k_inv(1, 1) = Scalar(1) / k(1, 1);
  k_inv(0, 2) = -k(0, 2) / k(0, 0);
  k_inv(1, 2) = -k(1, 2) / k(1, 1);
  return k * rotation * k_inv;
}

/// Projective application with homogeneous normalization. Returns nullopt for
/// points mapped to or behind the plane at infinity.
template <typename Scalar>
std::optional<Eigen::Matrix<Scalar, 2, 1>> apply_homography(const Homography<Scalar>& h,
                                                           const Eigen::Matrix<Scalar, 2, 1>& p) {
  const Eigen::Matrix<Scalar, 3, 1> q = h * p.homogeneous();
  if (q.z() <= Scalar(0)) return std::nullopt;
  return q.hnormalized();
}

struct WarpedBox {
  BBox box;                  // clipped to the image
  double retained_fraction;  // clipped area / unclipped hull area
};

/// Warps the four corners of `box` and returns their axis-aligned hull clipped
/// to the image. nullopt is the skip signal: a corner left the front of the
/// camera or the hull misses the image entirely.
std::optional<WarpedBox> warp_box(const Homography<double>& h, const BBox& box, int width, int height);

/// Frame index <-> timestamp association: frame f sits at t0 + f / fps.
struct FrameClock {
  double t0 = 0.0;
  double fps = 30.0;

  double timestamp(int frame) const noexcept { return t0 + frame / fps; }
  double tolerance() const noexcept { return 0.5 / fps; }
};

/// Pose whose timestamp is nearest to the frame's, within half a frame period.
/// Throws GapError otherwise.
const Pose& pose_at_frame(const Trajectory& traj, int frame, const FrameClock& clock);
/// Non-throwing variant of pose_at_frame.
const Pose* find_pose(const Trajectory& traj, int frame, const FrameClock& clock) noexcept;

/// dR = R(to) * R(from)^T with R the pose (camera-to-world) rotations: the
/// relative rotation expressed in the world frame.
RotationDelta<double> rotation_between(const Trajectory& traj, int from, int to, const FrameClock& clock);

/// R(to)^T * R(from): takes camera-`from` coordinates to camera-`to`
/// coordinates. compensation_homography of this maps pixels of `from` into `to`.
RotationDelta<double> camera_rotation_between(const Trajectory& traj, int from, int to,
                                              const FrameClock& clock);

/// Closed-form least-squares similarity (Umeyama) minimizing
/// sum ||ref_i - (s R est_i + t)||^2. Points are columns of 3xN matrices.
///
/// Rank-deficient cross-covariance (fewer than two independent directions)
/// throws DegeneracyError unless `allow_degenerate`; in that mode the SVD
/// solution is returned as-is, which is still a minimizer, and a point set with
/// zero spread falls back to a pure translation.
template <typename DerivedEst, typename DerivedRef>
Sim3<typename DerivedEst::Scalar> umeyama_sim3(const Eigen::MatrixBase<DerivedEst>& est,
                                               const Eigen::MatrixBase<DerivedRef>& ref,
                                               bool allow_degenerate = false) {
  using Scalar = typename DerivedEst::Scalar;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  static_assert(DerivedEst::RowsAtCompileTime == 3 || DerivedEst::RowsAtCompileTime == Eigen::Dynamic);

  if (est.rows() != 3 || ref.rows() != 3 || est.cols() != ref.cols()) {
    throw ValidationError("umeyama_sim3: expected two 3xN point sets of equal size");
  }
  const Eigen::Index n = est.cols();
  if (n < 3) throw DegeneracyError("umeyama_sim3: need at least 3 point pairs");

  const Vector3 mean_est = est.rowwise().mean();
  const Vector3 mean_ref = ref.rowwise().mean();
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> est_c = est.colwise() - mean_est;
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> ref_c = ref.colwise() - mean_ref;

  const Scalar inv_n = Scalar(1) / Scalar(n);
  const Scalar var_est = est_c.squaredNorm() * inv_n;
  const Matrix3 sigma = ref_c * est_c.transpose() * inv_n;

  Eigen::JacobiSVD<Matrix3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector3 d = svd.singularValues();
  const Scalar tol = Scalar(1e-10);
  const bool rank_deficient = !(d(0) > Scalar(0)) || d(1) <= tol * d(0);

  Sim3<Scalar> out;
  if (rank_deficient) {
    if (!allow_degenerate) throw DegeneracyError("umeyama_sim3: degenerate (rank < 2) point configuration");
    if (!(var_est > Scalar(0)) || !(d(0) > Scalar(0))) {
      out.translation = mean_ref - mean_est;
      return out;
    }
  }

  Vector3 s = Vector3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < Scalar(0)) s(2) = Scalar(-1);

  out.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  out.scale = d.dot(s) / var_est;
  out.translation = mean_ref - out.scale * out.rotation * mean_est;
  return out;
}

/// Sum of squared residuals ||ref_i - T(est_i)||^2.
template <typename Scalar, typename DerivedEst, typename DerivedRef>
Scalar alignment_residual(const Sim3<Scalar>& transform, const Eigen::MatrixBase<DerivedEst>& est,
                          const Eigen::MatrixBase<DerivedRef>& ref) {
  return (ref - transform * est).squaredNorm();
}

}  // namespace dynaseg
