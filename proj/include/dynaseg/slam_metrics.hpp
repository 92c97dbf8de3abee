#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dynaseg/types.hpp"

namespace dynaseg {

/// ATE RMSE in meters; nullopt is "Unknown".
using Ate = std::optional<double>;

struct MetricsConfig {
  double tau = 0.10;
  double delta_r_max = 0.15;
  double l_max = 0.10;
  int runs = 10;
  /// Pose association tolerance in seconds; <= 0 means half a frame period.
  double assoc_tolerance = 0.0;

  void validate() const;
  double tolerance(double fps) const noexcept { return assoc_tolerance > 0.0 ? assoc_tolerance : 0.5 / fps; }
};

/// Pairs of (estimated, ground-truth) pose indices, nearest timestamp within
/// `tolerance`.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                           double tolerance);

/// Sim(3)-aligned ATE RMSE; Unknown with fewer than 3 associations.
Ate ate_rmse(const Trajectory& est, const Trajectory& gt, double tolerance);

double tracking_rate(const Trajectory& traj) noexcept;

bool is_valid(const Ate& ate, double tracking_rate, double r_gt, const MetricsConfig& config) noexcept;

/// ate when valid; max(peers) * (1 + tau) otherwise; l_max * (1 + tau) when no
/// peer has a valid ATE.
double compute_penalized(const Ate& ate, bool valid, std::span<const double> peers,
                         const MetricsConfig& config) noexcept;

bool is_success(const Ate& ate, double tracking_rate, double r_gt, const MetricsConfig& config) noexcept;

struct RunResult {
  Ate ate;
  double tracking_rate = 0.0;
};

struct RunAggregate {
  Ate median_ate;
  double median_tracking_rate = 0.0;
  double unknown_fraction = 0.0;
};

/// Median of a nonempty list; even counts average the middle pair.
double median(std::vector<double> values);

RunAggregate aggregate_runs(std::span<const RunResult> runs);

double success_rate(std::span<const bool> successes);

struct SequenceEval {
  Ate ate_rmse;
  double tracking_rate = 0.0;
  double r_gt = 1.0;
  double penalized_ate = 0.0;
  bool valid = false;
  bool success = false;
  double unknown_fraction = 0.0;
};

}  // namespace dynaseg
