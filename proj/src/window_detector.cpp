#include "dynaseg/window_detector.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "dynaseg/error.hpp"
#include "dynaseg/io.hpp"

namespace dynaseg {

void DetectorConfig::validate() const {
  if (stride <= 0) throw ValidationError("detector: stride must be > 0");
  if (window_sizes.empty()) throw ValidationError("detector: at least one window size is required");
  for (int s : window_sizes) {
    if (s < stride) throw ValidationError("detector: window size " + std::to_string(s) + " is below the stride");
  }
  if (frame_gap < 1) throw ValidationError("detector: frame_gap must be >= 1");
  if (!(s_max > 0.0 && s_max < 1.0)) throw ValidationError("detector: s_max must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("detector: epsilon must be > 0");
  if (!(min_features >= 0.0)) throw ValidationError("detector: min_features must be >= 0");
  if (!(min_retained_fraction >= 0.0 && min_retained_fraction <= 1.0)) {
    throw ValidationError("detector: min_retained_fraction must lie in [0, 1]");
  }
}

double outlier_score(const WindowCounts& current, const WindowCounts& future, double epsilon) noexcept {
  const double now = (current.outliers + epsilon) / (current.inliers + epsilon);
  const double later = (future.outliers + epsilon) / (future.inliers + epsilon);
  return now / later;
}

namespace {

// Homography taking frame-t pixels into frame t+g, nullopt on a trajectory gap.
std::optional<Homography<double>> frame_homography(const DetectionInputs& in, int frame, int gap) {
  if (!find_pose(in.trajectory, frame, in.clock) || !find_pose(in.trajectory, frame + gap, in.clock)) {
    return std::nullopt;
  }
  return compensation_homography<double>(in.intrinsics,
                                         camera_rotation_between(in.trajectory, frame, frame + gap, in.clock));
}

template <typename CountFn>
WindowOutcome score_with(const Homography<double>& h, const MergedFeatureMap& map, int frame, const BBox& box,
                         const DetectorConfig& config, CountFn&& count) {
  WindowOutcome out;
  const auto warped = warp_box(h, box, map.width(), map.height());
  if (!warped || warped->retained_fraction < config.min_retained_fraction) {
    out.skip = SkipReason::OffImage;
    return out;
  }
  WindowScore& s = out.score;
  s.frame = frame;
  s.box = box;
  s.box.frame = frame;
  s.warped = warped->box;
  s.warped.frame = frame + config.frame_gap;
  s.current = count(0, s.box);
  s.future = count(1, s.warped);
  s.score = outlier_score(s.current, s.future, config.epsilon);
  return out;
}

bool dense_enough(const WindowScore& s, int runs, double min_features) {
  const double n = std::max(runs, 1);
  return s.current.total() / n >= min_features && s.future.total() / n >= min_features;
}

}  // namespace

WindowOutcome score_window(const DetectionInputs& in, int frame, const BBox& box, const DetectorConfig& config) {
  if (!in.map.has_frame(frame) || !in.map.has_frame(frame + config.frame_gap)) {
    throw ValidationError("score_window: frames " + std::to_string(frame) + " and " +
                          std::to_string(frame + config.frame_gap) + " must both exist in the map");
  }
  const auto h = frame_homography(in, frame, config.frame_gap);
  if (!h) {
    WindowOutcome out;
    out.skip = SkipReason::TrajectoryGap;
    return out;
  }
  return score_with(*h, in.map, frame, box, config, [&](int which, const BBox& b) {
    return window_counts(in.map, which == 0 ? frame : frame + config.frame_gap, b);
  });
}

std::vector<BBox> enumerate_windows(int width, int height, const DetectorConfig& config, int frame) {
  std::vector<BBox> out;
  for (int size : config.window_sizes) {
    for (int y = 0; y + size <= height; y += config.stride) {
      for (int x = 0; x + size <= width; x += config.stride) {
        out.push_back(BBox{frame, double(x), double(y), double(x + size), double(y + size)});
      }
    }
  }
  return out;
}

ScanResult scan_sequence(const DetectionInputs& in, const DetectorConfig& config, int jobs) {
  config.validate();
  const int gap = config.frame_gap;
  const int last = in.map.frame_count() - gap;  // frames [0, last) are anchors
  const std::vector<BBox> windows = enumerate_windows(in.map.width(), in.map.height(), config);

  struct FrameResult {
    std::vector<WindowScore> flagged;
    ScanStats stats;
  };
  std::vector<FrameResult> per_frame(static_cast<std::size_t>(std::max(last, 0)));

  auto scan_frame = [&](int t) {
    FrameResult& r = per_frame[static_cast<std::size_t>(t)];
    const auto h = frame_homography(in, t, gap);
    if (!h) {
      r.stats.skipped_gap += static_cast<std::int64_t>(windows.size());
      return;
    }
    const CountTable tables[2] = {in.map.count_table(t), in.map.count_table(t + gap)};
    for (const BBox& box : windows) {
      const WindowOutcome o = score_with(*h, in.map, t, box, config, [&](int which, const BBox& b) {
        return tables[which].sum(in.map.cells_in(b));
      });
      if (!o.scored()) {
        ++r.stats.skipped_off_image;
        continue;
      }
      if (!dense_enough(o.score, in.map.total_runs(), config.min_features)) {
        ++r.stats.skipped_sparse;
        continue;
      }
      ++r.stats.scored;
      if (o.score.flagged(config.s_max)) {
        ++r.stats.flagged;
        r.flagged.push_back(o.score);
      }
    }
  };

  const int workers = std::clamp(jobs, 1, std::max(last, 1));
  if (workers == 1) {
    for (int t = 0; t < last; ++t) scan_frame(t);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int i = 0; i < workers; ++i) {
      pool.emplace_back([&] {
        for (int t = next++; t < last; t = next++) scan_frame(t);
      });
    }
  }

  // Frames in order, windows in enumeration order (size, y, x) within a frame.
  ScanResult result;
  for (auto& r : per_frame) {
    result.stats.scored += r.stats.scored;
    result.stats.flagged += r.stats.flagged;
    result.stats.skipped_gap += r.stats.skipped_gap;
    result.stats.skipped_off_image += r.stats.skipped_off_image;
    result.stats.skipped_sparse += r.stats.skipped_sparse;
    result.flagged.insert(result.flagged.end(), r.flagged.begin(), r.flagged.end());
  }
  return result;
}

void write_flagged_windows(const std::vector<WindowScore>& windows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& w : windows) {
    out << "{\"frame\":" << w.frame << ",\"box\":[" << format_double(w.box.x0) << ',' << format_double(w.box.y0)
        << ',' << format_double(w.box.x1) << ',' << format_double(w.box.y1) << "],\"S\":" << format_double(w.score)
        << "}\n";
  }
}

std::vector<WindowScore> read_flagged_windows(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<WindowScore> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto& b = j.at("box");
      if (!b.is_array() || b.size() != 4) throw ParseError(path.string(), line_no, "box must hold 4 numbers");
      WindowScore w;
      w.frame = j.at("frame").get<int>();
      w.box = BBox{w.frame, b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      w.score = j.at("S").get<double>();
      if (!w.box.valid()) throw ParseError(path.string(), line_no, "empty box");
      if (!(w.score > 0.0)) throw ParseError(path.string(), line_no, "S must be positive");
      out.push_back(w);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

}  // namespace dynaseg
