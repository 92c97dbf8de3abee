#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dynaseg/appearance_model.hpp"
#include "dynaseg/mask_pipeline.hpp"
#include "dynaseg/run_merge.hpp"
#include "dynaseg/slam_metrics.hpp"
#include "dynaseg/window_detector.hpp"

namespace dynaseg {

/// Every tunable of the pipeline, read from one flat `key = value` file.
/// Precedence: command-line overrides > file > defaults.
struct PipelineConfig {
  MergeConfig merge;
  DetectorConfig detector;
  MaskGenConfig masks;
  AppearanceConfig appearance;
  MetricsConfig metrics;

  /// Throws ValidationError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  static std::vector<std::string> keys();
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Applies "key=value" overrides in order.
void apply_overrides(PipelineConfig& config, const std::vector<std::string>& overrides);

}  // namespace dynaseg
