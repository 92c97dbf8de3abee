#include "dynaseg/mask_pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "dynaseg/error.hpp"
#include "dynaseg/io.hpp"
#include "dynaseg/raster.hpp"
#include "dynaseg/rle.hpp"

namespace dynaseg {

void MaskGenConfig::validate() const {
  if (k < 1) throw ValidationError("masks: k must be >= 1");
  if (!(refine_density_threshold > 0.0 && refine_density_threshold <= 1.0)) {
    throw ValidationError("masks: refine_density_threshold must lie in (0, 1]");
  }
  if (!(dilation_radius >= 0.0)) throw ValidationError("masks: dilation_radius must be >= 0");
  if (!(search_margin >= 0.0)) throw ValidationError("masks: search_margin must be >= 0");
  if (max_empty_frames < 1) throw ValidationError("masks: max_empty_frames must be >= 1");
}

// --- box merging --------------------------------------------------------------

std::vector<BBox> merge_boxes(std::vector<BBox> boxes) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const BBox& a, const BBox& b) { return a.frame < b.frame; });
  std::vector<BBox> out;
  for (auto begin = boxes.begin(); begin != boxes.end();) {
    auto end = std::find_if(begin, boxes.end(), [&](const BBox& b) { return b.frame != begin->frame; });
    std::vector<BBox> group(begin, end);
    // Hulls can grow into boxes they did not touch before, so repeat until stable.
    bool merged = true;
    while (merged) {
      merged = false;
      for (std::size_t i = 0; i < group.size() && !merged; ++i) {
        for (std::size_t j = i + 1; j < group.size(); ++j) {
          if (!overlaps(group[i], group[j])) continue;
          group[i] = hull(group[i], group[j]);
          group.erase(group.begin() + static_cast<std::ptrdiff_t>(j));
          merged = true;
          break;
        }
      }
    }
    std::sort(group.begin(), group.end(),
              [](const BBox& a, const BBox& b) { return std::tie(a.y0, a.x0, a.y1, a.x1) < std::tie(b.y0, b.x0, b.y1, b.x1); });
    out.insert(out.end(), group.begin(), group.end());
    begin = end;
  }
  return out;
}

std::vector<BBox> merge_boxes(const std::vector<WindowScore>& flagged) {
  std::vector<BBox> boxes;
  boxes.reserve(flagged.size());
  for (const auto& w : flagged) {
    BBox b = w.box;
    b.frame = w.frame;
    boxes.push_back(b);
  }
  return merge_boxes(std::move(boxes));
}

// --- geometric refinement ------------------------------------------------------

namespace {

// Pixels of frame `from` mapped into frame `to`; identity without a trajectory
// or when either pose is missing.
Homography<double> frame_to_frame(const MaskContext& ctx, int from, int to) {
  if (!ctx.trajectory || from == to) return Homography<double>::Identity();
  if (!find_pose(*ctx.trajectory, from, ctx.clock) || !find_pose(*ctx.trajectory, to, ctx.clock)) {
    return Homography<double>::Identity();
  }
  return compensation_homography<double>(ctx.intrinsics, camera_rotation_between(*ctx.trajectory, from, to, ctx.clock));
}

struct Crop {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

}  // namespace

std::optional<Raster> refine_outlier_region(const MaskContext& ctx, const BBox& region, int anchor, int first_frame,
                                            int last_frame, const MaskGenConfig& config) {
  const MergedFeatureMap& map = ctx.map;
  first_frame = std::max(first_frame, 0);
  last_frame = std::min(last_frame, map.frame_count() - 1);
  const int cs = map.cell_size();

  Eigen::ArrayXXd acc = Eigen::ArrayXXd::Zero(map.rows(), map.cols());
  for (int f = first_frame; f <= last_frame; ++f) {
    const Homography<double> h = frame_to_frame(ctx, f, anchor);
    const bool identity = h.isIdentity();
    for (const auto& c : map.frame(f)) {
      if (c.outliers == 0) continue;
      Eigen::Vector2d p = map.cell_center(c.cell);
      if (!identity) {
        const auto q = apply_homography<double>(h, p);
        if (!q) continue;
        p = *q;
      }
      if (!region.contains(p.x(), p.y())) continue;
      const std::int32_t cell = map.cell_at(p.x(), p.y());
      acc(cell / map.cols(), cell % map.cols()) += c.outliers;
    }
  }
  const double peak = acc.maxCoeff();
  if (!(peak > 0.0)) return std::nullopt;
  const double threshold = config.refine_density_threshold * peak;

  // Work on a crop around the region; nothing can land outside it.
  const double reach = config.dilation_radius + cs;
  Crop crop;
  crop.x0 = std::clamp(static_cast<int>(std::floor(region.x0 - reach)), 0, ctx.width());
  crop.y0 = std::clamp(static_cast<int>(std::floor(region.y0 - reach)), 0, ctx.height());
  crop.x1 = std::clamp(static_cast<int>(std::ceil(region.x1 + reach)), 0, ctx.width());
  crop.y1 = std::clamp(static_cast<int>(std::ceil(region.y1 + reach)), 0, ctx.height());
  if (crop.width() <= 0 || crop.height() <= 0) return std::nullopt;

  Raster local = Raster::Zero(crop.height(), crop.width());
  for (int cy = 0; cy < map.rows(); ++cy) {
    for (int cx = 0; cx < map.cols(); ++cx) {
      if (!(acc(cy, cx) > 0.0) || acc(cy, cx) < threshold) continue;
      const int x0 = std::max(cx * cs, crop.x0), x1 = std::min((cx + 1) * cs, crop.x1);
      const int y0 = std::max(cy * cs, crop.y0), y1 = std::min((cy + 1) * cs, crop.y1);
      if (x0 >= x1 || y0 >= y1) continue;
      local.block(y0 - crop.y0, x0 - crop.x0, y1 - y0, x1 - x0).setOnes();
    }
  }
  local = dilate(local, config.dilation_radius);
  const BBox shifted{0, region.x0 - crop.x0, region.y0 - crop.y0, region.x1 - crop.x0, region.y1 - crop.y0};
  local = local * box_dilated(shifted, config.dilation_radius, crop.width(), crop.height());
  local = largest_component(local, Connectivity::Four);
  if (count_foreground(local) == 0) return std::nullopt;

  Raster mask = Raster::Zero(ctx.height(), ctx.width());
  mask.block(crop.y0, crop.x0, crop.height(), crop.width()) = local;
  return mask;
}

std::optional<Raster> GeometricSegmenter::refine(const MaskContext& ctx, const BBox& box, const MaskGenConfig& config) {
  return refine_outlier_region(ctx, box, box.frame, box.frame - config.k, box.frame + config.k, config);
}

std::optional<Raster> GeometricTracker::track(const MaskContext& ctx, const Raster& previous, int previous_frame,
                                              int next_frame, const MaskGenConfig& config) {
  const auto bounds = bounding_box(previous, previous_frame);
  if (!bounds) return std::nullopt;
  BBox region = *bounds;
  // Follow the camera rotation before widening the search.
  if (const auto warped = warp_box(frame_to_frame(ctx, previous_frame, next_frame), region, ctx.width(), ctx.height())) {
    region = warped->box;
  }
  region = BBox{next_frame, std::max(0.0, region.x0 - config.search_margin), std::max(0.0, region.y0 - config.search_margin),
                std::min(double(ctx.width()), region.x1 + config.search_margin),
                std::min(double(ctx.height()), region.y1 + config.search_margin)};
  return refine_outlier_region(ctx, region, next_frame, next_frame, next_frame, config);
}

// --- process plugins -----------------------------------------------------------

namespace {

nlohmann::ordered_json cells_json(const MaskContext& ctx, int first, int last) {
  auto cells = nlohmann::ordered_json::array();
  first = std::max(first, 0);
  last = std::min(last, ctx.frame_count() - 1);
  for (int f = first; f <= last; ++f) {
    for (const auto& c : ctx.map.frame(f)) {
      cells.push_back({f, c.cell % ctx.map.cols(), c.cell / ctx.map.cols(), c.inliers, c.outliers});
    }
  }
  return cells;
}

nlohmann::ordered_json request_header(const MaskContext& ctx, const char* op) {
  nlohmann::ordered_json j;
  j["op"] = op;
  j["sequence"] = ctx.sequence_id;
  j["width"] = ctx.width();
  j["height"] = ctx.height();
  j["frames"] = ctx.frame_count();
  j["cell_size"] = ctx.map.cell_size();
  j["runs"] = ctx.map.total_runs();
  return j;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::optional<Raster> run_plugin(const std::string& command, const nlohmann::ordered_json& request, int width,
                                 int height) {
  static std::atomic<unsigned> counter{0};
  const auto path = std::filesystem::temp_directory_path() /
                    ("dynaseg_request_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".json");
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PluginError("cannot write plugin request " + path.string());
    out << request.dump() << '\n';
  }
  const std::string shell = command + " < " + shell_quote(path.string());
  std::string output;
  FILE* pipe = ::popen(shell.c_str(), "r");
  if (!pipe) {
    std::filesystem::remove(path);
    throw PluginError("cannot start plugin: " + command);
  }
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) output.append(buf, n);
  const int status = ::pclose(pipe);
  std::filesystem::remove(path);
  if (status != 0) throw PluginError("plugin exited with status " + std::to_string(status) + ": " + command);

  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(output);
  } catch (const nlohmann::json::exception& e) {
    throw PluginError(std::string("plugin reply is not JSON: ") + e.what());
  }
  if (reply.value("empty", false)) return std::nullopt;
  try {
    Rle rle;
    rle.width = width;
    rle.height = height;
    const int first = reply.at("first").get<int>();
    if (first != 0 && first != 1) throw PluginError("plugin reply: \"first\" must be 0 or 1");
    rle.first = static_cast<std::uint8_t>(first);
    rle.runs = reply.at("rle").get<std::vector<std::int64_t>>();
    return decode_mask(rle);
  } catch (const nlohmann::json::exception& e) {
    throw PluginError(std::string("plugin reply: ") + e.what());
  } catch (const ValidationError& e) {
    throw PluginError(std::string("plugin reply: ") + e.what());
  }
}

}  // namespace

std::optional<Raster> ProcessSegmenter::refine(const MaskContext& ctx, const BBox& box, const MaskGenConfig& config) {
  auto req = request_header(ctx, "refine");
  req["frame"] = box.frame;
  req["box"] = {box.x0, box.y0, box.x1, box.y1};
  req["first"] = std::max(box.frame - config.k, 0);
  req["last"] = std::min(box.frame + config.k, ctx.frame_count() - 1);
  req["cells"] = cells_json(ctx, box.frame - config.k, box.frame + config.k);
  return run_plugin(command_, req, ctx.width(), ctx.height());
}

std::optional<Raster> ProcessTracker::track(const MaskContext& ctx, const Raster& previous, int previous_frame,
                                            int next_frame, const MaskGenConfig&) {
  auto req = request_header(ctx, "track");
  const Rle prev = encode_mask(previous);
  req["previous_frame"] = previous_frame;
  req["frame"] = next_frame;
  req["previous"] = {{"rle", prev.runs}, {"first", prev.first}};
  req["cells"] = cells_json(ctx, next_frame, next_frame);
  return run_plugin(command_, req, ctx.width(), ctx.height());
}

// --- refine / propagate ----------------------------------------------------------

std::optional<Raster> refine_box(const MaskContext& ctx, const BBox& box, const MaskGenConfig& config,
                                 SegmenterPlugin* plugin) {
  if (!box.valid()) throw ValidationError("refine_box: empty box");
  if (!ctx.map.has_frame(box.frame)) throw ValidationError("refine_box: frame outside the sequence");
  GeometricSegmenter fallback;
  SegmenterPlugin& seg = plugin ? *plugin : fallback;
  auto mask = seg.refine(ctx, box, config);
  if (!mask) return std::nullopt;
  if (mask->rows() != ctx.height() || mask->cols() != ctx.width()) {
    throw PluginError("segmenter returned a mask of the wrong size");
  }
  const auto bounds = bounding_box(*mask, box.frame);
  if (!bounds) return std::nullopt;
  const int c0 = std::max(0, static_cast<int>(std::floor(box.x0)));
  const int r0 = std::max(0, static_cast<int>(std::floor(box.y0)));
  const int c1 = std::min(ctx.width(), static_cast<int>(std::ceil(box.x1)));
  const int r1 = std::min(ctx.height(), static_cast<int>(std::ceil(box.y1)));
  if (c0 >= c1 || r0 >= r1 || (mask->block(r0, c0, r1 - r0, c1 - c0) != 0).count() == 0) {
    throw PluginError("segmenter mask does not intersect its box");
  }
  return mask;
}

MaskSequence propagate_mask(const MaskContext& ctx, const Raster& seed, int frame, const MaskGenConfig& config,
                            TrackerPlugin* plugin, int object_id) {
  if (count_foreground(seed) == 0) throw ValidationError("propagate_mask: empty seed");
  GeometricTracker fallback;
  TrackerPlugin& tracker = plugin ? *plugin : fallback;

  MaskSequence out;
  out.sequence_id = ctx.sequence_id;
  out.width = ctx.width();
  out.height = ctx.height();
  out.object_id = object_id;
  out.set(frame, seed);

  for (int step : {+1, -1}) {
    Raster last = seed;
    int last_frame = frame;
    int empty = 0;
    for (int f = frame + step; f >= 0 && f < ctx.frame_count(); f += step) {
      auto next = tracker.track(ctx, last, last_frame, f, config);
      if (next && (next->rows() != ctx.height() || next->cols() != ctx.width())) {
        throw PluginError("tracker returned a mask of the wrong size");
      }
      if (!next || count_foreground(*next) == 0) {
        if (++empty >= config.max_empty_frames) break;
        continue;
      }
      // Bridge the short gap so coverage stays contiguous.
      for (int g = last_frame + step; g != f; g += step) out.set(g, last);
      out.set(f, *next);
      last = std::move(*next);
      last_frame = f;
      empty = 0;
    }
  }
  return out;
}

MaskSequence superimpose(const std::vector<MaskSequence>& masks) {
  if (masks.empty()) throw ValidationError("superimpose: no mask sequences");
  MaskSequence out;
  out.sequence_id = masks.front().sequence_id;
  out.width = masks.front().width;
  out.height = masks.front().height;
  out.object_id = 0;
  std::map<int, Raster> acc;
  for (const auto& m : masks) {
    if (m.sequence_id != out.sequence_id) throw ValidationError("superimpose: sequence ids differ");
    if (m.width != out.width || m.height != out.height) throw ValidationError("superimpose: resolutions differ");
    for (const auto& [frame, rle] : m.frames) {
      const Raster r = decode_mask(rle);
      auto it = acc.find(frame);
      if (it == acc.end()) {
        acc.emplace(frame, r);
      } else {
        it->second = it->second.max(r);
      }
    }
  }
  for (const auto& [frame, r] : acc) out.set(frame, r);
  return out;
}

std::vector<MaskSequence> build_masks(const MaskContext& ctx, const std::vector<WindowScore>& flagged,
                                      const MaskGenConfig& config, SegmenterPlugin* segmenter, TrackerPlugin* tracker) {
  config.validate();
  std::vector<MaskSequence> objects;
  for (const BBox& box : merge_boxes(flagged)) {
    // A window landing on an object that is already tracked adds nothing.
    const bool covered = std::any_of(objects.begin(), objects.end(), [&](const MaskSequence& obj) {
      if (!obj.has(box.frame)) return false;
      const auto extent = bounding_box(obj.raster(box.frame), box.frame);
      return extent && overlaps(*extent, box);
    });
    if (covered) continue;
    const auto seed = refine_box(ctx, box, config, segmenter);
    if (!seed) continue;
    // Skip seeds that mostly overlap an object found earlier (either way round:
    // seeds accumulate over several frames and come out larger).
    const std::int64_t area = count_foreground(*seed);
    bool known = false;
    for (const auto& obj : objects) {
      if (!obj.has(box.frame)) continue;
      const Raster existing = obj.raster(box.frame);
      const std::int64_t shared = (seed->min(existing) != 0).count();
      if (2 * shared >= std::min(area, count_foreground(existing))) {
        known = true;
        break;
      }
    }
    if (known) continue;
    MaskSequence track = propagate_mask(ctx, *seed, box.frame, config, tracker, static_cast<int>(objects.size()) + 1);
    // Tracks that mostly retrace an existing object are folded into it.
    MaskSequence* twin = nullptr;
    for (auto& obj : objects) {
      std::int64_t shared = 0, own = 0;
      for (const auto& [frame, rle] : track.frames) {
        if (!obj.has(frame)) continue;
        const Raster mine = decode_mask(rle);
        shared += (mine.min(obj.raster(frame)) != 0).count();
        own += count_foreground(mine);
      }
      if (own > 0 && 2 * shared >= own) {
        twin = &obj;
        break;
      }
    }
    if (!twin) {
      objects.push_back(std::move(track));
      continue;
    }
    for (const auto& [frame, rle] : track.frames) {
      const Raster mine = decode_mask(rle);
      twin->set(frame, twin->has(frame) ? Raster(twin->raster(frame).max(mine)) : mine);
    }
  }
  return objects;
}

std::vector<TrainingEntry> export_training_set(const MaskSequence& masks, const SequenceMeta& meta,
                                               const std::filesystem::path& dir) {
  if (masks.width != meta.image_width || masks.height != meta.image_height) {
    throw ValidationError("export_training_set: mask resolution does not match the sequence");
  }
  std::filesystem::create_directories(dir);
  std::vector<TrainingEntry> entries;
  nlohmann::ordered_json manifest;
  manifest["sequence"] = meta.sequence_id;
  manifest["width"] = meta.image_width;
  manifest["height"] = meta.image_height;
  manifest["entries"] = nlohmann::ordered_json::array();
  for (const auto& [frame, rle] : masks.frames) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.pgm", frame);
    write_pgm(decode_mask(rle), dir / name);
    entries.push_back({frame, name});
    manifest["entries"].push_back({{"frame", frame}, {"mask", name}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  return entries;
}

}  // namespace dynaseg
