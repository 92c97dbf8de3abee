#include "dynaseg/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dynaseg {

ComponentLabels label_components(const Raster& mask, Connectivity connectivity) {
  const int rows = static_cast<int>(mask.rows());
  const int cols = static_cast<int>(mask.cols());
  ComponentLabels out;
  out.labels.setZero(rows, cols);

  std::vector<std::pair<int, int>> stack;
  std::int32_t next = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!mask(r, c) || out.labels(r, c) != 0) continue;
      ++next;
      std::int64_t size = 0;
      stack.clear();
      stack.emplace_back(r, c);
      out.labels(r, c) = next;
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        ++size;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (connectivity == Connectivity::Four && dx != 0 && dy != 0) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= rows || nx >= cols) continue;
            if (!mask(ny, nx) || out.labels(ny, nx) != 0) continue;
            out.labels(ny, nx) = next;
            stack.emplace_back(ny, nx);
          }
        }
      }
      out.sizes.push_back(size);
    }
  }
  return out;
}

Raster largest_component(const Raster& mask, Connectivity connectivity) {
  const ComponentLabels cc = label_components(mask, connectivity);
  Raster out = Raster::Zero(mask.rows(), mask.cols());
  if (cc.sizes.empty()) return out;
  const auto best = std::max_element(cc.sizes.begin(), cc.sizes.end()) - cc.sizes.begin();
  const std::int32_t label = static_cast<std::int32_t>(best) + 1;
  out = (cc.labels == label).cast<std::uint8_t>();
  return out;
}

namespace {

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas).
void distance_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[k]) {
      v[k] = q;
      z[k + 1] = inf;
    } else {
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = inf;
    }
  }
  if (k < 0) {
    std::fill(d, d + n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double diff = q - v[j];
    d[q] = diff * diff + f[v[j]];
  }
}

}  // namespace

Eigen::ArrayXXd squared_distance_transform(const Raster& mask) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int rows = static_cast<int>(mask.rows());
  const int cols = static_cast<int>(mask.cols());
  Eigen::ArrayXXd dist(rows, cols);  // column-major: columns contiguous
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) dist(r, c) = mask(r, c) ? 0.0 : inf;

  const int n = std::max(rows, cols);
  std::vector<int> v(n + 1);
  std::vector<double> z(n + 2);
  std::vector<double> f(n), d(n);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) f[r] = dist(r, c);
    distance_1d(f.data(), d.data(), rows, v, z);
    for (int r = 0; r < rows; ++r) dist(r, c) = d[r];
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) f[c] = dist(r, c);
    distance_1d(f.data(), d.data(), cols, v, z);
    for (int c = 0; c < cols; ++c) dist(r, c) = d[c];
  }
  return dist;
}

Raster dilate(const Raster& mask, double radius) {
  if (radius <= 0.0) return mask;
  const Eigen::ArrayXXd dist = squared_distance_transform(mask);
  const double r2 = radius * radius;
  Raster out(mask.rows(), mask.cols());
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c) out(r, c) = dist(r, c) <= r2 ? 1 : 0;
  return out;
}

std::int64_t count_foreground(const Raster& mask) { return (mask != 0).count(); }

std::optional<BBox> bounding_box(const Raster& mask, int frame) {
  int r0 = static_cast<int>(mask.rows()), r1 = -1, c0 = static_cast<int>(mask.cols()), c1 = -1;
  for (int r = 0; r < mask.rows(); ++r) {
    for (int c = 0; c < mask.cols(); ++c) {
      if (!mask(r, c)) continue;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
    }
  }
  if (r1 < 0) return std::nullopt;
  return BBox{frame, double(c0), double(r0), double(c1 + 1), double(r1 + 1)};
}

std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> points) {
  std::sort(points.begin(), points.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return points;

  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> h(2 * points.size());
  std::size_t k = 0;
  for (const auto& p : points) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  for (std::size_t i = points.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], points[i]) <= 0) --k;
    h[k++] = points[i];
  }
  h.resize(k - 1);
  return h;
}

void fill_convex_polygon(Raster& mask, const std::vector<Eigen::Vector2d>& polygon, double margin) {
  if (polygon.empty()) return;
  const int rows = static_cast<int>(mask.rows());
  const int cols = static_cast<int>(mask.cols());

  double ymin = polygon[0].y(), ymax = polygon[0].y();
  for (const auto& p : polygon) {
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  const int r_begin = std::max(0, static_cast<int>(std::floor(ymin - margin)));
  const int r_end = std::min(rows - 1, static_cast<int>(std::floor(ymax + margin)));

  const std::size_t n = polygon.size();
  for (int r = r_begin; r <= r_end; ++r) {
    // x-extent of the polygon within the horizontal band [r - margin, r + 1 + margin].
    const double band_lo = r - margin;
    const double band_hi = r + 1 + margin;
    double xmin = std::numeric_limits<double>::infinity();
    double xmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d& a = polygon[i];
      const Eigen::Vector2d& b = polygon[(i + 1) % n];
      if (a.y() >= band_lo && a.y() <= band_hi) {
        xmin = std::min(xmin, a.x());
        xmax = std::max(xmax, a.x());
      }
      // Edge crossings with the band limits.
      for (double yl : {band_lo, band_hi}) {
        if ((a.y() - yl) * (b.y() - yl) < 0.0) {
          const double t = (yl - a.y()) / (b.y() - a.y());
          const double x = a.x() + t * (b.x() - a.x());
          xmin = std::min(xmin, x);
          xmax = std::max(xmax, x);
        }
      }
    }
    if (xmin > xmax) continue;
    const int c_begin = std::max(0, static_cast<int>(std::floor(xmin - margin)));
    const int c_end = std::min(cols - 1, static_cast<int>(std::floor(xmax + margin)));
    for (int c = c_begin; c <= c_end; ++c) mask(r, c) = 1;
  }
}

Raster box_dilated(const BBox& box, double radius, int width, int height) {
  Raster out = Raster::Zero(height, width);
  const int r0 = std::max(0, static_cast<int>(std::floor(box.y0 - radius - 0.5)));
  const int r1 = std::min(height - 1, static_cast<int>(std::ceil(box.y1 + radius)));
  const int c0 = std::max(0, static_cast<int>(std::floor(box.x0 - radius - 0.5)));
  const int c1 = std::min(width - 1, static_cast<int>(std::ceil(box.x1 + radius)));
  const double r2 = radius * radius;
  for (int r = r0; r <= r1; ++r) {
    const double py = r + 0.5;
    const double dy = py < box.y0 ? box.y0 - py : (py > box.y1 ? py - box.y1 : 0.0);
    for (int c = c0; c <= c1; ++c) {
      const double px = c + 0.5;
      const double dx = px < box.x0 ? box.x0 - px : (px > box.x1 ? px - box.x1 : 0.0);
      if (dx * dx + dy * dy <= r2) out(r, c) = 1;
    }
  }
  return out;
}

}  // namespace dynaseg
