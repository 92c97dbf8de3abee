#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "dynaseg/types.hpp"

namespace dynaseg {

struct MergeConfig {
  int cell_size = 8;
  /// A cell/status survives when seen in at least ceil(fraction * runs) runs.
  double min_run_fraction = 0.3;

  void validate() const;
};

/// Filtered counters of one grid cell in one frame. runs_in / runs_out keep
/// the number of contributing runs even when filtering zeroed the counter.
struct CellCounts {
  std::int32_t cell = 0;  // row-major index: cy * cols + cx
  std::int32_t inliers = 0;
  std::int32_t outliers = 0;
  std::int32_t runs_in = 0;
  std::int32_t runs_out = 0;

  friend bool operator==(const CellCounts&, const CellCounts&) = default;
};

struct WindowCounts {
  std::int64_t inliers = 0;
  std::int64_t outliers = 0;

  std::int64_t total() const noexcept { return inliers + outliers; }
  friend bool operator==(const WindowCounts&, const WindowCounts&) = default;
};

/// Half-open range of cell indices whose centers fall inside a box.
struct CellRange {
  int cx0 = 0, cy0 = 0, cx1 = 0, cy1 = 0;
  bool empty() const noexcept { return cx0 >= cx1 || cy0 >= cy1; }
};

/// Per-frame summed-area tables of the filtered counters.
class CountTable {
 public:
  CountTable() = default;
  CountTable(int cols, int rows, const std::vector<CellCounts>& cells);

  WindowCounts sum(const CellRange& range) const;

 private:
  using Table = Eigen::Array<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Table inliers_;
  Table outliers_;
};

/// Inlier/outlier observations of several runs, quantized on a per-frame grid.
class MergedFeatureMap {
 public:
  MergedFeatureMap() = default;
  MergedFeatureMap(int width, int height, int frame_count, int cell_size, int total_runs);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int frame_count() const noexcept { return static_cast<int>(frames_.size()); }
  int cell_size() const noexcept { return cell_size_; }
  int cols() const noexcept { return cols_; }
  int rows() const noexcept { return rows_; }
  int total_runs() const noexcept { return total_runs_; }
  double min_run_fraction() const noexcept { return min_run_fraction_; }

  bool has_frame(int frame) const noexcept { return frame >= 0 && frame < frame_count(); }
  /// Nonzero cells of a frame sorted by cell index. Throws ValidationError for
  /// frames out of range.
  const std::vector<CellCounts>& frame(int frame) const;

  CellRange cells_in(const BBox& box) const;
  Eigen::Vector2d cell_center(std::int32_t cell) const;
  std::int32_t cell_at(double x, double y) const;

  CountTable count_table(int frame) const;

  // Used by FeatureMapBuilder and the map reader.
  std::vector<CellCounts>& mutable_frame(int frame) { return frames_.at(frame); }
  void set_min_run_fraction(double f) { min_run_fraction_ = f; }

 private:
  int width_ = 0;
  int height_ = 0;
  int cell_size_ = 1;
  int cols_ = 0;
  int rows_ = 0;
  int total_runs_ = 0;
  double min_run_fraction_ = 0.0;
  std::vector<std::vector<CellCounts>> frames_;
};

/// Incremental merge: add runs one at a time, then filter.
class FeatureMapBuilder {
 public:
  FeatureMapBuilder(const SequenceMeta& meta, int cell_size);

  /// Every record counts as one observation of run number `runs()`.
  /// Records outside the image or the frame range throw ValidationError.
  void add_run(std::span<const FeatureRecord> records);
  int runs() const noexcept { return runs_; }

  MergedFeatureMap finish(const MergeConfig& config) const;

 private:
  struct Accumulator {
    std::int32_t inliers = 0;
    std::int32_t outliers = 0;
    std::int32_t runs_in = 0;
    std::int32_t runs_out = 0;
    std::int32_t last_run_in = -1;
    std::int32_t last_run_out = -1;
  };

  SequenceMeta meta_;
  int cell_size_;
  int cols_;
  int runs_ = 0;
  std::vector<std::unordered_map<std::int32_t, Accumulator>> frames_;
};

/// Minimum runs a cell must be seen in to keep its counter.
int min_runs_required(double min_run_fraction, int total_runs) noexcept;

MergedFeatureMap merge_runs(const std::vector<std::vector<FeatureRecord>>& runs, const SequenceMeta& meta,
                            const MergeConfig& config);

/// Filtered (inlier, outlier) observation counts of cells whose centers fall
/// inside `box`.
WindowCounts window_counts(const MergedFeatureMap& map, int frame, const BBox& box);

// JSON-lines dump: a header object, then one object per nonzero cell.
void write_merged_map(const MergedFeatureMap& map, const std::filesystem::path& path);
void write_merged_map(const MergedFeatureMap& map, std::ostream& out);
MergedFeatureMap read_merged_map(const std::filesystem::path& path);

}  // namespace dynaseg
