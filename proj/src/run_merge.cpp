#include "dynaseg/run_merge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "dynaseg/error.hpp"
#include "dynaseg/io.hpp"

namespace dynaseg {

void MergeConfig::validate() const {
  if (cell_size < 1) throw ValidationError("merge: cell_size must be >= 1");
  if (!(min_run_fraction >= 0.0 && min_run_fraction <= 1.0)) {
    throw ValidationError("merge: min_run_fraction must lie in [0, 1]");
  }
}

int min_runs_required(double min_run_fraction, int total_runs) noexcept {
  // Tolerance keeps e.g. 0.3 * 10 from rounding up to 4.
  return static_cast<int>(std::ceil(min_run_fraction * total_runs - 1e-9));
}

// --- CountTable ---------------------------------------------------------------

CountTable::CountTable(int cols, int rows, const std::vector<CellCounts>& cells) {
  inliers_.setZero(rows + 1, cols + 1);
  outliers_.setZero(rows + 1, cols + 1);
  for (const auto& c : cells) {
    const int cy = c.cell / cols, cx = c.cell % cols;
    inliers_(cy + 1, cx + 1) = c.inliers;
    outliers_(cy + 1, cx + 1) = c.outliers;
  }
  for (int r = 1; r <= rows; ++r) {
    for (int c = 1; c <= cols; ++c) {
      inliers_(r, c) += inliers_(r - 1, c) + inliers_(r, c - 1) - inliers_(r - 1, c - 1);
      outliers_(r, c) += outliers_(r - 1, c) + outliers_(r, c - 1) - outliers_(r - 1, c - 1);
    }
  }
}

WindowCounts CountTable::sum(const CellRange& g) const {
  if (g.empty()) return {};
  auto rect = [&](const Table& t) {
    return t(g.cy1, g.cx1) - t(g.cy0, g.cx1) - t(g.cy1, g.cx0) + t(g.cy0, g.cx0);
  };
  return {rect(inliers_), rect(outliers_)};
}

// --- MergedFeatureMap -------------------------------------------------------

MergedFeatureMap::MergedFeatureMap(int width, int height, int frame_count, int cell_size, int total_runs)
    : width_(width),
      height_(height),
      cell_size_(cell_size),
      cols_((width + cell_size - 1) / cell_size),
      rows_((height + cell_size - 1) / cell_size),
      total_runs_(total_runs),
      frames_(static_cast<std::size_t>(std::max(frame_count, 0))) {}

const std::vector<CellCounts>& MergedFeatureMap::frame(int f) const {
  if (!has_frame(f)) {
    throw ValidationError("merged map: frame " + std::to_string(f) + " outside [0, " +
                          std::to_string(frame_count()) + ")");
  }
  return frames_[static_cast<std::size_t>(f)];
}

CellRange MergedFeatureMap::cells_in(const BBox& box) const {
  // Cell i has its center at (i + 0.5) * c; keep centers in [x0, x1).
  const double c = cell_size_;
  auto first = [&](double v) { return static_cast<int>(std::ceil(v / c - 0.5)); };
  CellRange g;
  g.cx0 = std::clamp(first(box.x0), 0, cols_);
  g.cx1 = std::clamp(first(box.x1), 0, cols_);
  g.cy0 = std::clamp(first(box.y0), 0, rows_);
  g.cy1 = std::clamp(first(box.y1), 0, rows_);
  return g;
}

Eigen::Vector2d MergedFeatureMap::cell_center(std::int32_t cell) const {
  const int cy = cell / cols_, cx = cell % cols_;
  return {(cx + 0.5) * cell_size_, (cy + 0.5) * cell_size_};
}

std::int32_t MergedFeatureMap::cell_at(double x, double y) const {
  const int cx = std::clamp(static_cast<int>(std::floor(x / cell_size_)), 0, cols_ - 1);
  const int cy = std::clamp(static_cast<int>(std::floor(y / cell_size_)), 0, rows_ - 1);
  return cy * cols_ + cx;
}

CountTable MergedFeatureMap::count_table(int f) const { return CountTable(cols_, rows_, frame(f)); }

// --- FeatureMapBuilder ------------------------------------------------------

FeatureMapBuilder::FeatureMapBuilder(const SequenceMeta& meta, int cell_size)
    : meta_(meta), cell_size_(cell_size), cols_((meta.image_width + cell_size - 1) / cell_size) {
  meta_.validate();
  if (cell_size < 1) throw ValidationError("merge: cell_size must be >= 1");
  frames_.resize(static_cast<std::size_t>(meta.frame_count));
}

void FeatureMapBuilder::add_run(std::span<const FeatureRecord> records) {
  const std::int32_t run = runs_;
  for (const auto& r : records) {
    if (r.frame < 0 || r.frame >= meta_.frame_count) {
      throw ValidationError("merge: record frame " + std::to_string(r.frame) + " outside the sequence");
    }
    if (!meta_.contains(r.x, r.y)) {
      throw ValidationError("merge: record at (" + format_double(r.x) + ", " + format_double(r.y) + ") in frame " +
                            std::to_string(r.frame) + " lies outside the image");
    }
    const std::int32_t cell = static_cast<std::int32_t>(r.y / cell_size_) * cols_ +
                              static_cast<std::int32_t>(r.x / cell_size_);
    Accumulator& acc = frames_[static_cast<std::size_t>(r.frame)][cell];
    if (r.is_outlier()) {
      ++acc.outliers;
      if (acc.last_run_out != run) {
        acc.last_run_out = run;
        ++acc.runs_out;
      }
    } else {
      ++acc.inliers;
      if (acc.last_run_in != run) {
        acc.last_run_in = run;
        ++acc.runs_in;
      }
    }
  }
  ++runs_;
}

MergedFeatureMap FeatureMapBuilder::finish(const MergeConfig& config) const {
  config.validate();
  if (runs_ == 0) throw ValidationError("merge: at least one run is required");
  MergedFeatureMap map(meta_.image_width, meta_.image_height, meta_.frame_count, cell_size_, runs_);
  map.set_min_run_fraction(config.min_run_fraction);
  const int needed = min_runs_required(config.min_run_fraction, runs_);
  for (std::size_t f = 0; f < frames_.size(); ++f) {
    auto& out = map.mutable_frame(static_cast<int>(f));
    out.reserve(frames_[f].size());
    for (const auto& [cell, acc] : frames_[f]) {
      CellCounts c;
      c.cell = cell;
      c.runs_in = acc.runs_in;
      c.runs_out = acc.runs_out;
      c.inliers = acc.runs_in >= needed ? acc.inliers : 0;
      c.outliers = acc.runs_out >= needed ? acc.outliers : 0;
      if (c.inliers > 0 || c.outliers > 0) out.push_back(c);
    }
    std::sort(out.begin(), out.end(), [](const CellCounts& a, const CellCounts& b) { return a.cell < b.cell; });
  }
  return map;
}

MergedFeatureMap merge_runs(const std::vector<std::vector<FeatureRecord>>& runs, const SequenceMeta& meta,
                            const MergeConfig& config) {
  config.validate();
  if (runs.empty()) throw ValidationError("merge: at least one run is required");
  FeatureMapBuilder builder(meta, config.cell_size);
  for (const auto& run : runs) builder.add_run(run);
  return builder.finish(config);
}

WindowCounts window_counts(const MergedFeatureMap& map, int frame, const BBox& box) {
  const auto& cells = map.frame(frame);
  const CellRange g = map.cells_in(box);
  WindowCounts out;
  if (g.empty()) return out;
  for (const auto& c : cells) {
    const int cy = c.cell / map.cols(), cx = c.cell % map.cols();
    if (cx >= g.cx0 && cx < g.cx1 && cy >= g.cy0 && cy < g.cy1) {
      out.inliers += c.inliers;
      out.outliers += c.outliers;
    }
  }
  return out;
}

// --- dump -------------------------------------------------------------------

void write_merged_map(const MergedFeatureMap& map, std::ostream& out) {
  out << "{\"width\":" << map.width() << ",\"height\":" << map.height() << ",\"frames\":" << map.frame_count()
      << ",\"cell_size\":" << map.cell_size() << ",\"runs\":" << map.total_runs()
      << ",\"min_run_fraction\":" << format_double(map.min_run_fraction()) << "}\n";
  for (int f = 0; f < map.frame_count(); ++f) {
    for (const auto& c : map.frame(f)) {
      out << "{\"frame\":" << f << ",\"cell\":" << c.cell << ",\"in\":" << c.inliers << ",\"out\":" << c.outliers
          << ",\"runs_in\":" << c.runs_in << ",\"runs_out\":" << c.runs_out << "}\n";
    }
  }
}

void write_merged_map(const MergedFeatureMap& map, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_merged_map(map, out);
}

MergedFeatureMap read_merged_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string source = path.string();
  std::string line;
  std::size_t line_no = 0;
  MergedFeatureMap map;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source, line_no, e.what());
    }
    try {
      if (!header) {
        map = MergedFeatureMap(j.at("width").get<int>(), j.at("height").get<int>(), j.at("frames").get<int>(),
                               j.at("cell_size").get<int>(), j.at("runs").get<int>());
        map.set_min_run_fraction(j.at("min_run_fraction").get<double>());
        header = true;
        continue;
      }
      CellCounts c;
      const int f = j.at("frame").get<int>();
      c.cell = j.at("cell").get<std::int32_t>();
      c.inliers = j.at("in").get<std::int32_t>();
      c.outliers = j.at("out").get<std::int32_t>();
      c.runs_in = j.at("runs_in").get<std::int32_t>();
      c.runs_out = j.at("runs_out").get<std::int32_t>();
      if (!map.has_frame(f) || c.cell < 0 || c.cell >= map.cols() * map.rows()) {
        throw ParseError(source, line_no, "cell outside the map");
      }
      if (c.runs_in > map.total_runs() || c.runs_out > map.total_runs()) {
        throw ParseError(source, line_no, "runs seen exceeds total runs");
      }
      map.mutable_frame(f).push_back(c);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (!header) throw ParseError(source, 0, "missing header line");
  for (int f = 0; f < map.frame_count(); ++f) {
    auto& cells = map.mutable_frame(f);
    std::sort(cells.begin(), cells.end(), [](const CellCounts& a, const CellCounts& b) { return a.cell < b.cell; });
  }
  return map;
}

}  // namespace dynaseg
