#include "dynaseg/appearance_model.hpp"

#include <cmath>

#include "dynaseg/error.hpp"
#include "dynaseg/raster.hpp"

namespace dynaseg {

void AppearanceConfig::validate() const {
  if (!(min_posterior > 0.0 && min_posterior <= 1.0)) throw ValidationError("appearance: min_posterior must lie in (0, 1]");
  if (min_word_support < 1) throw ValidationError("appearance: min_word_support must be >= 1");
  if (cluster_cell < 1) throw ValidationError("appearance: cluster_cell must be >= 1");
  if (!(min_cluster_features > 0.0)) throw ValidationError("appearance: min_cluster_features must be > 0");
  if (!(hull_margin >= 0.5)) throw ValidationError("appearance: hull_margin must be >= 0.5");
}

void AppearanceModel::add_example(const FeatureGroups& features, const MaskSequence& masks) {
  for (const auto& [frame, records] : features) {
    if (!masks.has(frame)) continue;
    const Raster mask = masks.raster(frame);
    for (const auto& r : records) {
      if (r.descriptor < 0) continue;
      const auto col = static_cast<Eigen::Index>(std::floor(r.x));
      const auto row = static_cast<Eigen::Index>(std::floor(r.y));
      const bool inside = row >= 0 && col >= 0 && row < mask.rows() && col < mask.cols() && mask(row, col);
      WordCounts& w = words_[r.descriptor];
      ++w.total;
      if (inside) ++w.inside;
      ++examples_;
    }
  }
}

double AppearanceModel::posterior(int word) const {
  auto it = words_.find(word);
  if (it == words_.end() || it->second.total == 0) return 0.0;
  return double(it->second.inside) / double(it->second.total);
}

bool AppearanceModel::is_dynamic(int word) const {
  auto it = words_.find(word);
  if (it == words_.end() || it->second.total < config_.min_word_support) return false;
  return posterior(word) >= config_.min_posterior;
}

Raster AppearanceModel::infer_frame(const std::vector<FeatureRecord>& features, int width, int height,
                                    int total_runs) const {
  Raster mask = Raster::Zero(height, width);
  const int cell = config_.cluster_cell;
  const int cols = (width + cell - 1) / cell, rows = (height + cell - 1) / cell;

  Raster occupied = Raster::Zero(rows, cols);
  std::vector<const FeatureRecord*> dynamic;
  for (const auto& r : features) {
    if (r.descriptor < 0 || !is_dynamic(r.descriptor)) continue;
    if (!(r.x >= 0 && r.y >= 0 && r.x < width && r.y < height)) continue;
    dynamic.push_back(&r);
    occupied(static_cast<int>(r.y) / cell, static_cast<int>(r.x) / cell) = 1;
  }
  if (dynamic.empty()) return mask;

  const ComponentLabels cc = label_components(occupied, Connectivity::Eight);
  std::vector<std::vector<Eigen::Vector2d>> clusters(cc.sizes.size());
  for (const FeatureRecord* r : dynamic) {
    const int label = cc.labels(static_cast<int>(r->y) / cell, static_cast<int>(r->x) / cell);
    clusters[static_cast<std::size_t>(label - 1)].emplace_back(r->x, r->y);
  }
  const double runs = std::max(total_runs, 1);
  for (auto& points : clusters) {
    if (points.size() / runs < config_.min_cluster_features) continue;
    fill_convex_polygon(mask, convex_hull(std::move(points)), config_.hull_margin);
  }
  return mask;
}

MaskSequence AppearanceModel::infer(const FeatureGroups& features, const SequenceMeta& meta, int total_runs) const {
  MaskSequence out;
  out.sequence_id = meta.sequence_id;
  out.width = meta.image_width;
  out.height = meta.image_height;
  out.object_id = 0;
  for (const auto& [frame, records] : features) {
    const Raster mask = infer_frame(records, meta.image_width, meta.image_height, total_runs);
    if (count_foreground(mask) > 0) out.set(frame, mask);
  }
  return out;
}

}  // namespace dynaseg
