#include "dynaseg/feature_filter.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

#include "dynaseg/rle.hpp"

namespace dynaseg {

namespace {

bool masked(const Raster& mask, double x, double y) {
  const auto c = static_cast<Eigen::Index>(std::floor(x));
  const auto r = static_cast<Eigen::Index>(std::floor(y));
  if (r < 0 || c < 0 || r >= mask.rows() || c >= mask.cols()) return false;
  return mask(r, c) != 0;
}

// Point lookups straight on the runs: cumulative run ends, binary searched.
class RunIndex {
 public:
  explicit RunIndex(const Rle& rle) : width_(rle.width), height_(rle.height), first_(rle.first) {
    ends_.reserve(rle.runs.size());
    std::int64_t end = 0;
    for (std::int64_t n : rle.runs) ends_.push_back(end += n);
  }

  bool masked(double x, double y) const {
    const auto c = static_cast<std::int64_t>(std::floor(x));
    const auto r = static_cast<std::int64_t>(std::floor(y));
    if (r < 0 || c < 0 || r >= height_ || c >= width_) return false;
    const auto run = std::upper_bound(ends_.begin(), ends_.end(), r * width_ + c) - ends_.begin();
    return ((first_ + run) & 1) != 0;
  }

 private:
  std::int64_t width_;
  std::int64_t height_;
  int first_;
  std::vector<std::int64_t> ends_;
};

}  // namespace

std::vector<bool> keep_flags(const KeypointSet& keypoints, const Raster& mask) {
  std::vector<bool> keep;
  keep.reserve(keypoints.points.size());
  for (const auto& p : keypoints.points) keep.push_back(!masked(mask, p.x(), p.y()));
  return keep;
}

KeypointSet filter_keypoints(const KeypointSet& keypoints, const Raster& mask) {
  KeypointSet out{keypoints.frame, {}};
  for (const auto& p : keypoints.points) {
    if (!masked(mask, p.x(), p.y())) out.points.push_back(p);
  }
  return out;
}

FilterResult filter_keypoints(const KeypointSet& keypoints, const MaskSequence& masks) {
  if (!masks.has(keypoints.frame)) return {keypoints, true};
  return {filter_keypoints(keypoints, masks.raster(keypoints.frame)), false};
}

std::vector<FeatureRecord> filter_records(const std::vector<FeatureRecord>& records, const MaskSequence& masks,
                                          FilterStats* stats) {
  std::vector<FeatureRecord> out;
  out.reserve(records.size());
  int cached_frame = -1;
  std::optional<RunIndex> mask;
  FilterStats local;
  std::set<int> missing;
  for (const auto& r : records) {
    ++local.input;
    if (r.frame != cached_frame) {
      cached_frame = r.frame;
      mask.reset();
      if (auto it = masks.frames.find(r.frame); it != masks.frames.end()) {
        mask.emplace(it->second);
      } else {
        missing.insert(r.frame);
      }
    }
    if (mask && mask->masked(r.x, r.y)) continue;
    out.push_back(r);
    ++local.kept;
  }
  local.frames_without_mask = static_cast<std::int64_t>(missing.size());
  if (stats) *stats = local;
  return out;
}

}  // namespace dynaseg
