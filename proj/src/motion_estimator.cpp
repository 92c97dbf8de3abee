#include "dynaseg/motion_estimator.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

namespace dynaseg {

namespace {

// Similarity moving the centroid to the origin with mean distance sqrt(2).
Eigen::Matrix3d normalizer(std::span<const Correspondence> matches, bool source) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& m : matches) mean += source ? m.from : m.to;
  mean /= double(matches.size());
  double spread = 0.0;
  for (const auto& m : matches) spread += ((source ? m.from : m.to) - mean).norm();
  spread /= double(matches.size());
  const double s = spread > 0.0 ? std::sqrt(2.0) / spread : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * mean.x(),
       0, s, -s * mean.y(),
       0, 0, 1;
  return t;
}

}  // namespace

std::optional<Eigen::Matrix3d> fit_homography(std::span<const Correspondence> matches) {
  if (matches.size() < 4) return std::nullopt;
  const Eigen::Matrix3d t_from = normalizer(matches, true);
  const Eigen::Matrix3d t_to = normalizer(matches, false);

  Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
  for (const auto& m : matches) {
    const Eigen::Vector3d p = t_from * m.from.homogeneous();
    const Eigen::Vector3d q = t_to * m.to.homogeneous();
    Eigen::Matrix<double, 2, 9> a;
    a << 0, 0, 0, -q.z() * p.transpose(), q.y() * p.transpose(),
         q.z() * p.transpose(), 0, 0, 0, -q.x() * p.transpose();
    ata.noalias() += a.transpose() * a;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(ata);
  if (eig.info() != Eigen::Success) return std::nullopt;
  // A second null direction means the points do not pin down a homography.
  const auto& ev = eig.eigenvalues();
  if (!(ev(1) > 1e-12 * std::max(ev(8), 1.0))) return std::nullopt;
  const Eigen::Matrix<double, 9, 1> h = eig.eigenvectors().col(0);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d out = t_to.inverse() * hn * t_from;
  if (std::abs(out(2, 2)) > 1e-12) out /= out(2, 2);
  if (!out.allFinite()) return std::nullopt;
  return out;
}

double transfer_error(const Eigen::Matrix3d& h, const Correspondence& match) {
  const Eigen::Vector3d q = h * match.from.homogeneous();
  if (!(q.z() > 0.0)) return std::numeric_limits<double>::infinity();
  return (q.hnormalized() - match.to).norm();
}

std::optional<MotionEstimate> estimate_dominant_motion(std::span<const Correspondence> matches, double threshold,
                                                       int iterations, std::uint64_t seed) {
  const std::size_t n = matches.size();
  if (n < 4) return std::nullopt;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  auto score = [&](const Eigen::Matrix3d& h, MotionEstimate& out) {
    out.homography = h;
    out.inliers.assign(n, false);
    out.inlier_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (transfer_error(h, matches[i]) <= threshold) {
        out.inliers[i] = true;
        ++out.inlier_count;
      }
    }
  };

  std::optional<MotionEstimate> best;
  std::vector<Correspondence> sample(4);
  for (int it = 0; it < iterations; ++it) {
    std::size_t idx[4];
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = pick(rng);
        fresh = true;
        for (int j = 0; j < k; ++j) fresh = fresh && idx[j] != idx[k];
      } while (!fresh);
      sample[k] = matches[idx[k]];
    }
    const auto h = fit_homography(sample);
    if (!h) continue;
    MotionEstimate candidate;
    score(*h, candidate);
    if (!best || candidate.inlier_count > best->inlier_count) best = std::move(candidate);
  }
  if (!best || best->inlier_count < 4) return best;

  std::vector<Correspondence> support;
  for (std::size_t i = 0; i < n; ++i) {
    if (best->inliers[i]) support.push_back(matches[i]);
  }
  if (const auto refit = fit_homography(support)) {
    MotionEstimate refined;
    score(*refit, refined);
    if (refined.inlier_count >= best->inlier_count) best = std::move(refined);
  }
  return best;
}

}  // namespace dynaseg
