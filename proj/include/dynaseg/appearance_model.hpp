#pragma once

#include <cstdint>
#include <map>

#include "dynaseg/types.hpp"

namespace dynaseg {

struct AppearanceConfig {
  /// A descriptor word is dynamic when P(inside mask | word) reaches this.
  double min_posterior = 0.5;
  /// Words seen fewer times in training stay static.
  int min_word_support = 5;
  /// Grid used to cluster dynamic features into objects (pixels).
  int cluster_cell = 32;
  /// Clusters need this many dynamic features per run on average.
  double min_cluster_features = 5.0;
  /// Margin added around each cluster's convex hull (pixels).
  double hull_margin = 1.5;

  void validate() const;
};

/// Learns which descriptor words belong to dynamic objects from features
/// falling inside example masks, then masks any sequence frame by frame.
class AppearanceModel {
 public:
  explicit AppearanceModel(AppearanceConfig config = {}) : config_(config) {}

  /// Only frames that carry a mask contribute.
  void add_example(const FeatureGroups& features, const MaskSequence& masks);

  double posterior(int word) const;
  bool is_dynamic(int word) const;
  std::int64_t examples() const noexcept { return examples_; }

  /// Convex hull of every sufficiently large cluster of dynamic features.
  /// `total_runs` normalizes cluster support when `features` pools runs.
  MaskSequence infer(const FeatureGroups& features, const SequenceMeta& meta, int total_runs) const;
  Raster infer_frame(const std::vector<FeatureRecord>& features, int width, int height, int total_runs) const;

 private:
  struct WordCounts {
    std::int64_t inside = 0;
    std::int64_t total = 0;
  };

  AppearanceConfig config_;
  std::map<int, WordCounts> words_;
  std::int64_t examples_ = 0;
};

}  // namespace dynaseg
