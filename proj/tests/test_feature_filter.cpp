#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "dynaseg/feature_filter.hpp"
#include "support.hpp"

using namespace dynaseg;

namespace {

KeypointSet random_points(std::mt19937_64& rng, int frame, int n, int w, int h) {
  std::uniform_real_distribution<double> x(0.0, w), y(0.0, h);
  KeypointSet k;
  k.frame = frame;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector2d p(x(rng), y(rng));
    if (p.x() >= w || p.y() >= h) continue;
    k.points.push_back(p);
  }
  return k;
}

Raster random_mask(std::mt19937_64& rng, int w, int h) {
  std::bernoulli_distribution bit(0.4);
  Raster m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = bit(rng);
  return m;
}

MaskSequence sequence_of(int w, int h) {
  MaskSequence s;
  s.sequence_id = "s";
  s.width = w;
  s.height = h;
  return s;
}

}  // namespace

TEST_CASE("filter_keypoints: empty and full masks") {
  std::mt19937_64 rng(61);
  const KeypointSet k = random_points(rng, 3, 200, 64, 48);
  CHECK(filter_keypoints(k, Raster::Zero(48, 64)).points == k.points);
  CHECK(filter_keypoints(k, Raster::Ones(48, 64)).points.empty());
  CHECK(filter_keypoints(k, Raster::Zero(48, 64)).frame == 3);
}

TEST_CASE("filter_keypoints: half-plane mask") {
  Raster mask = Raster::Zero(720, 1280);
  mask.leftCols(640).setOnes();
  KeypointSet k;
  k.points = {{100.0, 300.0}, {900.0, 300.0}};
  const KeypointSet out = filter_keypoints(k, mask);
  REQUIRE(out.points.size() == 1);
  CHECK(out.points[0].x() == 900.0);
  // Boundary pixels are looked up by floor.
  k.points = {{639.999, 10.0}, {640.0, 10.0}};
  REQUIRE(filter_keypoints(k, mask).points.size() == 1);
  CHECK(filter_keypoints(k, mask).points[0].x() == 640.0);
}

TEST_CASE("filter_keypoints: brute force, subset and idempotence") {
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 500; ++trial) {
    const Raster mask = random_mask(rng, 31, 17);
    const KeypointSet k = random_points(rng, trial, 60, 31, 17);
    const KeypointSet out = filter_keypoints(k, mask);
    std::vector<Eigen::Vector2d> expect;
    for (const auto& p : k.points) {
      if (!mask(int(std::floor(p.y())), int(std::floor(p.x())))) expect.push_back(p);
    }
    CHECK(out.points == expect);
    CHECK(filter_keypoints(out, mask).points == out.points);
    const auto flags = keep_flags(k, mask);
    CHECK(std::count(flags.begin(), flags.end(), true) == std::ptrdiff_t(out.points.size()));
  }
}

TEST_CASE("filter_keypoints: mask sequence lookup") {
  MaskSequence masks = sequence_of(8, 8);
  masks.set(1, Raster::Ones(8, 8));
  KeypointSet k;
  k.frame = 1;
  k.points = {{1.0, 1.0}};
  FilterResult r = filter_keypoints(k, masks);
  CHECK_FALSE(r.mask_missing);
  CHECK(r.kept.points.empty());
  k.frame = 2;
  r = filter_keypoints(k, masks);
  CHECK(r.mask_missing);
  CHECK(r.kept.points == k.points);
}

TEST_CASE("filter_records matches per-frame filtering") {
  std::mt19937_64 rng(63);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 40, h = 30;
    MaskSequence masks = sequence_of(w, h);
    std::map<int, Raster> rasters;
    for (int f = 0; f < 6; ++f) {
      if (f % 3 == 2) continue;
      rasters[f] = random_mask(rng, w, h);
      masks.set(f, rasters[f]);
    }
    std::vector<FeatureRecord> records;
    std::uniform_int_distribution<int> frame(0, 5), run(0, 3);
    std::uniform_real_distribution<double> x(0.0, w), y(0.0, h);
    for (int i = 0; i < 400; ++i) {
      FeatureRecord r;
      r.frame = frame(rng);
      r.x = x(rng);
      r.y = y(rng);
      r.run = run(rng);
      r.status = i % 3 ? FeatureStatus::Inlier : FeatureStatus::Outlier;
      if (r.x >= w || r.y >= h) continue;
      records.push_back(r);
    }

    FilterStats stats;
    const auto out = filter_records(records, masks, &stats);
    std::vector<FeatureRecord> expect;
    std::set<int> unmasked;
    for (const auto& r : records) {
      const auto it = rasters.find(r.frame);
      if (it == rasters.end()) unmasked.insert(r.frame);
      if (it != rasters.end() && it->second(int(r.y), int(r.x))) continue;
      expect.push_back(r);
    }
    REQUIRE(out.size() == expect.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].frame == expect[i].frame);
      CHECK(out[i].x == expect[i].x);
      CHECK(out[i].y == expect[i].y);
      CHECK(out[i].run == expect[i].run);
      CHECK(out[i].status == expect[i].status);
    }
    CHECK(stats.input == std::int64_t(records.size()));
    CHECK(stats.kept == std::int64_t(out.size()));
    CHECK(stats.frames_without_mask == std::int64_t(unmasked.size()));
    CHECK(filter_records(out, masks).size() == out.size());
  }
}
