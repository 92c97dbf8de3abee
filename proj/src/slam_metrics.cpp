#include "dynaseg/slam_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dynaseg/error.hpp"
#include "dynaseg/geometry.hpp"

namespace dynaseg {

void MetricsConfig::validate() const {
  if (!(tau >= 0.0)) throw ValidationError("metrics: tau must be >= 0");
  if (!(delta_r_max >= 0.0 && delta_r_max <= 1.0)) throw ValidationError("metrics: delta_r_max must lie in [0, 1]");
  if (!(l_max > 0.0)) throw ValidationError("metrics: l_max must be > 0");
  if (runs < 1) throw ValidationError("metrics: runs must be >= 1");
}

std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                           double tolerance) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> gaps;
  const auto& g = gt.poses;
  for (std::size_t i = 0; i < est.poses.size(); ++i) {
    const double t = est.poses[i].timestamp;
    auto it = std::lower_bound(g.begin(), g.end(), t, [](const Pose& p, double ts) { return p.timestamp < ts; });
    std::size_t best = g.size();
    double best_dt = tolerance;
    if (it != g.end() && std::abs(it->timestamp - t) <= best_dt) {
      best = static_cast<std::size_t>(it - g.begin());
      best_dt = std::abs(it->timestamp - t);
    }
    if (it != g.begin() && std::abs(std::prev(it)->timestamp - t) <= best_dt) {
      best = static_cast<std::size_t>(std::prev(it) - g.begin());
      best_dt = std::abs(std::prev(it)->timestamp - t);
    }
    if (best == g.size()) continue;
    // One estimate per ground-truth pose: keep the closer one.
    if (!pairs.empty() && pairs.back().second == best) {
      if (best_dt < gaps.back()) {
        pairs.back().first = i;
        gaps.back() = best_dt;
      }
      continue;
    }
    pairs.emplace_back(i, best);
    gaps.push_back(best_dt);
  }
  return pairs;
}

Ate ate_rmse(const Trajectory& est, const Trajectory& gt, double tolerance) {
  const auto pairs = associate(est, gt, tolerance);
  if (pairs.size() < 3) return std::nullopt;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::Matrix3Xd e(3, n), r(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    e.col(i) = est.poses[pairs[i].first].t;
    r.col(i) = gt.poses[pairs[i].second].t;
  }
  const Sim3<double> s = umeyama_sim3(e, r, /*allow_degenerate=*/true);
  return std::sqrt(alignment_residual(s, e, r) / double(n));
}

double tracking_rate(const Trajectory& traj) noexcept {
  if (traj.total_frames <= 0) return 0.0;
  return double(traj.tracked_frames) / double(traj.total_frames);
}

bool is_valid(const Ate& ate, double tracking_rate, double r_gt, const MetricsConfig& config) noexcept {
  return ate.has_value() && !(tracking_rate < r_gt - config.delta_r_max);
}

double compute_penalized(const Ate& ate, bool valid, std::span<const double> peers,
                         const MetricsConfig& config) noexcept {
  if (valid && ate) return *ate;
  if (peers.empty()) return config.l_max * (1.0 + config.tau);
  return *std::max_element(peers.begin(), peers.end()) * (1.0 + config.tau);
}

bool is_success(const Ate& ate, double tracking_rate, double r_gt, const MetricsConfig& config) noexcept {
  return ate.has_value() && *ate <= config.l_max && tracking_rate >= r_gt - config.delta_r_max;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty list");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

RunAggregate aggregate_runs(std::span<const RunResult> runs) {
  if (runs.empty()) throw ValidationError("aggregate_runs: at least one run is required");
  std::vector<double> ates, rates;
  for (const auto& r : runs) {
    rates.push_back(r.tracking_rate);
    if (r.ate) ates.push_back(*r.ate);
  }
  RunAggregate out;
  const std::size_t unknown = runs.size() - ates.size();
  out.unknown_fraction = double(unknown) / double(runs.size());
  if (2 * unknown <= runs.size() && !ates.empty()) out.median_ate = median(ates);
  out.median_tracking_rate = median(rates);
  return out;
}

double success_rate(std::span<const bool> successes) {
  if (successes.empty()) throw ValidationError("success_rate: at least one sequence is required");
  const auto n = std::count(successes.begin(), successes.end(), true);
  return double(n) / double(successes.size());
}

}  // namespace dynaseg
