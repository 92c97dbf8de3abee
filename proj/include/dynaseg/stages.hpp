#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynaseg/appearance_model.hpp"
#include "dynaseg/config.hpp"
#include "dynaseg/mask_pipeline.hpp"
#include "dynaseg/run_merge.hpp"
#include "dynaseg/slam_metrics.hpp"
#include "dynaseg/types.hpp"
#include "dynaseg/window_detector.hpp"

namespace dynaseg {

namespace fs = std::filesystem;

/// A sequence directory as written by emit_run_files.
struct SequenceDir {
  fs::path dir;
  SequenceMeta meta;
  std::vector<fs::path> feature_files;  // features_run_*.jsonl, sorted
  fs::path trajectory;                  // gt_trajectory.txt (may not exist)
  fs::path gt_masks;                    // gt_masks.jsonl (may not exist)
};

inline constexpr const char* kMetaFile = "meta.txt";
inline constexpr const char* kTrajectoryFile = "gt_trajectory.txt";
inline constexpr const char* kMaskFile = "gt_masks.jsonl";

std::string feature_file_name(int run);
std::string estimate_file_name(int run);

SequenceDir open_sequence(const fs::path& dir);
/// `root` itself when it holds a meta file, else every immediate subdirectory
/// that does, sorted by name.
std::vector<SequenceDir> discover_sequences(const fs::path& root);

/// Records of every file, grouped by their run field (ascending run id).
std::vector<std::vector<FeatureRecord>> load_runs(const std::vector<fs::path>& files, const SequenceMeta& meta);

MergedFeatureMap merge_feature_files(const std::vector<fs::path>& files, const SequenceMeta& meta,
                                     const MergeConfig& config);

/// Estimated trajectories of one system over a sequence's runs.
struct SystemRuns {
  std::string system;
  std::vector<Trajectory> runs;
};

struct EvaluationCase {
  std::string sequence_id;
  Trajectory ground_truth;
  double r_gt = 1.0;
  int total_frames = 0;
  double fps = 30.0;
  std::vector<SystemRuns> systems;
};

/// Report with per-sequence, per-system SequenceEval and dataset summaries
/// (average penalized ATE, success rate, false-start-free ratio). Key order is
/// fixed.
nlohmann::ordered_json evaluation_report(const std::vector<EvaluationCase>& cases, const MetricsConfig& config);

/// Loads est_run_*.txt of every system directory under `estimates/<sequence id>`.
std::vector<SystemRuns> load_estimates(const fs::path& sequence_estimates, int total_frames);

/// Serialized report with a trailing newline.
std::string dump_report(const nlohmann::ordered_json& report);

}  // namespace dynaseg
