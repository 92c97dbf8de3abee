#include <doctest.h>

#include <cmath>
#include <random>

#include "dynaseg/error.hpp"
#include "dynaseg/window_detector.hpp"
#include "support.hpp"

using namespace dynaseg;

namespace {

FeatureRecord rec(int frame, double x, double y, bool out, int run = 0) {
  FeatureRecord r;
  r.frame = frame;
  r.x = x;
  r.y = y;
  r.status = out ? FeatureStatus::Outlier : FeatureStatus::Inlier;
  r.run = run;
  return r;
}

// One feature per 8 px cell on every frame. In `burst_frame` the cells of
// `burst` turn into outliers.
struct GridFixture {
  SequenceMeta meta;
  MergedFeatureMap map;
  Trajectory trajectory;

  GridFixture(int runs, int burst_frame, const BBox& burst) : meta(test::small_meta(300, 200, 6)) {
    meta.intrinsics = {300.0, 300.0, 150.0, 100.0};
    std::vector<std::vector<FeatureRecord>> data(runs);
    for (int r = 0; r < runs; ++r) {
      for (int f = 0; f < meta.frame_count; ++f) {
        for (double y = 4; y < meta.image_height; y += 8) {
          for (double x = 4; x < meta.image_width; x += 8) {
            data[r].push_back(rec(f, x, y, f == burst_frame && burst.contains(x, y), r));
          }
        }
      }
    }
    map = merge_runs(data, meta, MergeConfig{8, 0.3});
    trajectory = test::identity_trajectory(meta.frame_count);
  }

  DetectionInputs inputs() const { return {map, trajectory, FrameClock{0.0, meta.fps}, meta.intrinsics}; }
};

DetectorConfig small_config() {
  DetectorConfig c;
  c.window_sizes = {50, 100};
  c.stride = 25;
  return c;
}

Trajectory yawing(int frames, double rad_per_frame) {
  Trajectory t = test::identity_trajectory(frames);
  for (int f = 0; f < frames; ++f) {
    t.poses[f].q = Eigen::Quaterniond(Eigen::AngleAxisd(f * rad_per_frame, Eigen::Vector3d::UnitY()));
  }
  return t;
}

}  // namespace

TEST_CASE("outlier_score fixtures") {
  CHECK(outlier_score({40, 2}, {40, 2}, 0.5) == doctest::Approx(1.0));
  const double s = outlier_score({40, 2}, {20, 10}, 0.5);
  CHECK(std::abs(s - 0.1205) < 1e-4);
  CHECK(s < 0.15);
  const double empty_future = outlier_score({30, 0}, {0, 0}, 0.5);
  CHECK(std::abs(empty_future - 0.0164) < 1e-4);
  CHECK(outlier_score({0, 0}, {0, 0}, 0.5) == doctest::Approx(1.0));
}

TEST_CASE("outlier_score is nearly scale invariant for dense windows") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> n(50, 400);
  const auto ratio = [](const WindowCounts& c) { return (c.outliers + 0.5) / (c.inliers + 0.5); };
  for (int trial = 0; trial < 500; ++trial) {
    const WindowCounts a{n(rng), n(rng)}, b{n(rng), n(rng)};
    const double base = outlier_score(a, b, 0.5);
    for (int k : {2, 5, 10}) {
      const WindowCounts ak{a.inliers * k, a.outliers * k}, bk{b.inliers * k, b.outliers * k};
      // Each smoothed ratio moves by at most 1%; the quotient of two by at most 2%.
      CHECK(std::abs(ratio(ak) / ratio(a) - 1.0) < 0.01);
      CHECK(std::abs(ratio(bk) / ratio(b) - 1.0) < 0.01);
      CHECK(std::abs(outlier_score(ak, bk, 0.5) - base) / base < 0.02);
    }
  }
}

TEST_CASE("enumerate_windows count and order") {
  DetectorConfig c;
  const auto windows = enumerate_windows(1280, 720, c, 7);
  std::size_t expect = 0;
  for (int s : c.window_sizes) expect += std::size_t((1280 - s) / c.stride + 1) * std::size_t((720 - s) / c.stride + 1);
  CHECK(windows.size() == expect);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const BBox& w = windows[i];
    CHECK(w.frame == 7);
    CHECK(w.x0 >= 0);
    CHECK(w.y0 >= 0);
    CHECK(w.x1 <= 1280);
    CHECK(w.y1 <= 720);
    if (i == 0) continue;
    const BBox& p = windows[i - 1];
    const auto key = [](const BBox& b) { return std::tuple(b.width(), b.y0, b.x0); };
    CHECK(key(p) < key(w));
  }
  CHECK(enumerate_windows(90, 90, c).empty());
}

TEST_CASE("detector config validation") {
  DetectorConfig c;
  CHECK_NOTHROW(c.validate());
  c.stride = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = DetectorConfig{};
  c.window_sizes = {};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = DetectorConfig{};
  c.s_max = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = DetectorConfig{};
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = DetectorConfig{};
  c.window_sizes = {20};
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("scan: a map without outliers flags nothing") {
  const GridFixture fx(2, -1, BBox{});
  const ScanResult r = scan_sequence(fx.inputs(), small_config());
  CHECK(r.flagged.empty());
  CHECK(r.stats.flagged == 0);
  const auto per_frame = enumerate_windows(300, 200, small_config()).size();
  CHECK(r.stats.scored == std::int64_t(per_frame * 3));
}

TEST_CASE("scan: an outlier burst is flagged at the frame before it") {
  const BBox burst{3, 100, 48, 200, 152};
  const GridFixture fx(2, 3, burst);
  const DetectorConfig c = small_config();
  const ScanResult r = scan_sequence(fx.inputs(), c);
  REQUIRE_FALSE(r.flagged.empty());
  for (const auto& w : r.flagged) {
    CHECK(w.frame == 0);
    CHECK(w.warped.frame == 3);
    CHECK(iou(w.box, burst) > 0.0);
    CHECK(w.score < c.s_max);
    // Counts come from the summed-area tables; compare with direct summation.
    CHECK(w.current == window_counts(fx.map, 0, w.box));
    CHECK(w.future == window_counts(fx.map, 3, w.warped));
  }
  const bool exact = std::any_of(r.flagged.begin(), r.flagged.end(),
                                 [&](const WindowScore& w) { return w.box == BBox{0, 100, 50, 200, 150}; });
  CHECK(exact);

  // score_window agrees with the scan on every flagged window.
  for (const auto& w : r.flagged) {
    const WindowOutcome o = score_window(fx.inputs(), w.frame, w.box, c);
    REQUIRE(o.scored());
    CHECK(o.score.score == doctest::Approx(w.score));
  }
}

TEST_CASE("scan output does not depend on the worker count") {
  const GridFixture fx(3, 3, BBox{3, 30, 20, 160, 120});
  DetectorConfig c = small_config();
  c.frame_gap = 1;
  const ScanResult one = scan_sequence(fx.inputs(), c, 1);
  for (int jobs : {2, 3, 8}) {
    const ScanResult many = scan_sequence(fx.inputs(), c, jobs);
    REQUIRE(many.flagged.size() == one.flagged.size());
    for (std::size_t i = 0; i < one.flagged.size(); ++i) {
      CHECK(many.flagged[i].frame == one.flagged[i].frame);
      CHECK(many.flagged[i].box == one.flagged[i].box);
      CHECK(many.flagged[i].score == one.flagged[i].score);
    }
    CHECK(many.stats.scored == one.stats.scored);
  }
  const ScanResult again = scan_sequence(fx.inputs(), c, 1);
  REQUIRE(again.flagged.size() == one.flagged.size());
  for (std::size_t i = 0; i < one.flagged.size(); ++i) CHECK(again.flagged[i].score == one.flagged[i].score);
}

TEST_CASE("scan: sparse windows are skipped") {
  const GridFixture fx(1, 3, BBox{3, 100, 48, 200, 152});
  DetectorConfig c = small_config();
  c.min_features = 1000.0;
  const ScanResult r = scan_sequence(fx.inputs(), c);
  CHECK(r.flagged.empty());
  CHECK(r.stats.scored == 0);
  CHECK(r.stats.skipped_sparse > 0);
}

TEST_CASE("score_window: rotation moves the compared window") {
  GridFixture fx(1, -1, BBox{});
  const double a = 0.05;
  fx.trajectory = yawing(fx.meta.frame_count, a);
  const DetectorConfig c = small_config();
  const BBox box{0, 100, 50, 200, 150};
  const WindowOutcome o = score_window(fx.inputs(), 0, box, c);
  REQUIRE(o.scored());
  const double shift = 0.5 * (o.score.warped.x0 + o.score.warped.x1) - 150.0;
  CHECK(std::abs(std::abs(shift) - 300.0 * std::tan(3 * a)) < 2.0);
  CHECK(std::abs(0.5 * (o.score.warped.y0 + o.score.warped.y1) - 100.0) < 2.0);
  const auto h = compensation_homography<double>(fx.meta.intrinsics,
                                                 camera_rotation_between(fx.trajectory, 0, 3, FrameClock{}));
  const BBox expect = warp_box(h, box, 300, 200)->box;
  CHECK(o.score.warped.x0 == expect.x0);
  CHECK(o.score.warped.y0 == expect.y0);
  CHECK(o.score.warped.x1 == expect.x1);
  CHECK(o.score.warped.y1 == expect.y1);
}

TEST_CASE("score_window: skip reasons and errors") {
  GridFixture fx(1, -1, BBox{});
  const DetectorConfig c = small_config();
  const BBox box{0, 100, 50, 200, 150};

  fx.trajectory = yawing(fx.meta.frame_count, 0.3);
  CHECK(score_window(fx.inputs(), 0, box, c).skip == SkipReason::OffImage);

  fx.trajectory = test::identity_trajectory(fx.meta.frame_count);
  fx.trajectory.poses.erase(fx.trajectory.poses.begin() + 3);
  CHECK(score_window(fx.inputs(), 0, box, c).skip == SkipReason::TrajectoryGap);
  const ScanResult r = scan_sequence(fx.inputs(), c);
  CHECK(r.stats.skipped_gap == std::int64_t(enumerate_windows(300, 200, c).size()));

  CHECK_THROWS_AS(score_window(fx.inputs(), 4, box, c), ValidationError);
}

TEST_CASE("flagged windows round trip") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> coord(0.0, 1280.0), s(1e-6, 0.15);
  std::uniform_int_distribution<int> frame(0, 5000), count(0, 6);
  test::TempDir dir;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<WindowScore> windows(count(rng));
    for (auto& w : windows) {
      w.frame = frame(rng);
      double x0 = coord(rng), x1 = coord(rng), y0 = coord(rng), y1 = coord(rng);
      if (x0 > x1) std::swap(x0, x1);
      if (y0 > y1) std::swap(y0, y1);
      w.box = BBox{w.frame, x0, y0, x1 + 1.0, y1 + 1.0};
      w.score = s(rng);
    }
    write_flagged_windows(windows, dir / "f.jsonl");
    const auto back = read_flagged_windows(dir / "f.jsonl");
    REQUIRE(back.size() == windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
      CHECK(back[i].frame == windows[i].frame);
      CHECK(back[i].box == windows[i].box);
      CHECK(back[i].score == windows[i].score);
    }
  }
}

TEST_CASE("flagged window reader rejects bad lines") {
  test::TempDir dir;
  test::spit(dir / "a.jsonl", "{\"frame\":1,\"box\":[0,0,10],\"S\":0.1}\n");
  CHECK_THROWS(read_flagged_windows(dir / "a.jsonl"));
  test::spit(dir / "b.jsonl", "{\"frame\":1,\"box\":[0,0,10,10],\"S\":0}\n");
  CHECK_THROWS(read_flagged_windows(dir / "b.jsonl"));
  test::spit(dir / "c.jsonl", "{\"frame\":1,\"box\":[5,0,5,10],\"S\":0.1}\n");
  CHECK_THROWS(read_flagged_windows(dir / "c.jsonl"));
  test::spit(dir / "d.jsonl", "\n{\"frame\":2,\"box\":[0,0,10,10],\"S\":0.1}\n\n");
  CHECK(read_flagged_windows(dir / "d.jsonl").size() == 1);
}
