#include <doctest.h>

#include "dynaseg/error.hpp"
#include "dynaseg/io.hpp"
#include "dynaseg/scene_simulator.hpp"
#include "dynaseg/slam_metrics.hpp"
#include "support.hpp"

using namespace dynaseg;

namespace {

ScenarioConfig preset(Preset p, std::uint64_t seed, int runs = 2) {
  ScenarioConfig c = ScenarioConfig::for_preset(p, seed);
  c.runs = runs;
  return c;
}

struct Tally {
  std::int64_t object = 0, object_out = 0, background = 0, background_out = 0;
};

// Per-frame counts of a run's records split by ground-truth origin.
std::vector<Tally> tally(const Scene& scene, const std::vector<FeatureRecord>& run) {
  std::vector<Tally> t(scene.frame_count());
  for (const auto& r : run) {
    if (r.point < 0) continue;  // ghost
    Tally& x = t[r.frame];
    if (scene.on_object(r.point)) {
      ++x.object;
      x.object_out += r.is_outlier();
    } else {
      ++x.background;
      x.background_out += r.is_outlier();
    }
  }
  return t;
}

}  // namespace

TEST_CASE("presets parse and print") {
  for (Preset p : {Preset::Static, Preset::Easy, Preset::Hard, Preset::VeryHard, Preset::StaticCamera}) {
    CHECK(parse_preset(to_string(p)) == p);
  }
  CHECK(parse_preset("Hard") == Preset::Hard);
  CHECK_THROWS_AS(parse_preset("medium"), ValidationError);
  CHECK(ScenarioConfig::for_preset(Preset::Easy, 4).id() == "easy_4");
}

TEST_CASE("scenario config validation") {
  CHECK_NOTHROW(ScenarioConfig{}.validate());
  ScenarioConfig c;
  c.n_features = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = ScenarioConfig{};
  c.motion_stop = c.frame_count;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = ScenarioConfig{};
  c.motion_start = 300;
  c.motion_stop = 250;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = ScenarioConfig{};
  c.runs = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("scenario survives the meta file") {
  ScenarioConfig c = preset(Preset::Hard, 17, 4);
  c.pixel_noise = 0.25;
  c.motion_start = 150;
  c.motion_stop = 199;
  test::TempDir dir;
  write_sequence_meta(scenario_meta(c), dir / "meta.txt");
  const ScenarioConfig back = scenario_from_meta(read_sequence_meta(dir / "meta.txt"));
  CHECK(back.preset == c.preset);
  CHECK(back.seed == c.seed);
  CHECK(back.id() == c.id());
  CHECK(back.pixel_noise == c.pixel_noise);
  CHECK(back.motion_start == 150);
  CHECK(back.motion_stop == 199);
  CHECK(back.object_size == c.object_size);
  CHECK(back.runs == 4);
  CHECK(scenario_meta(back).extras == scenario_meta(c).extras);

  SequenceMeta plain = test::small_meta();
  CHECK_THROWS_AS(scenario_from_meta(plain), ValidationError);
}

TEST_CASE("static preset: the object never produces outliers") {
  const Simulation sim = generate(preset(Preset::Static, 1));
  const Scene scene(preset(Preset::Static, 1));
  for (const auto& run : sim.runs) {
    for (const auto& t : tally(scene, run)) CHECK(t.object_out == 0);
  }
  for (bool b : sim.truth.consensus_inverted) CHECK_FALSE(b);
  for (bool b : sim.truth.object_moving) CHECK_FALSE(b);
}

TEST_CASE("easy preset: moving object features are outliers, no inversion") {
  for (std::uint64_t seed : {1, 2, 3}) {
    CAPTURE(seed);
    const ScenarioConfig c = preset(Preset::Easy, seed);
    const Scene scene(c);
    const Simulation sim = generate(c);
    int moving = 0;
    for (int f = 0; f < scene.frame_count(); ++f) {
      CHECK_FALSE(sim.truth.consensus_inverted[f]);
      moving += sim.truth.object_moving[f];
    }
    CHECK(moving > 0);
    for (const auto& run : sim.runs) {
      std::int64_t object = 0, object_out = 0;
      const auto t = tally(scene, run);
      for (int f = 0; f < scene.frame_count(); ++f) {
        if (!sim.truth.object_moving[f]) continue;
        object += t[f].object;
        object_out += t[f].object_out;
      }
      REQUIRE(object > 0);
      CHECK(double(object_out) / double(object) >= 0.8);
    }
  }
}

TEST_CASE("hard and very hard presets: consensus inversion during motion") {
  for (Preset p : {Preset::Hard, Preset::VeryHard}) {
    for (std::uint64_t seed : {1, 2}) {
      CAPTURE(to_string(p));
      CAPTURE(seed);
      const ScenarioConfig c = preset(p, seed);
      const Scene scene(c);
      const Simulation sim = generate(c);
      int inverted = 0;
      for (int f = 0; f < scene.frame_count(); ++f) {
        // Flags only ever appear while the object moves.
        if (sim.truth.consensus_inverted[f]) CHECK(sim.truth.object_moving[f]);
        if (!sim.truth.object_moving[f]) continue;
        CHECK(sim.truth.consensus_inverted[f]);
        inverted += sim.truth.consensus_inverted[f];
        int object_in_view = 0, static_in_view = 0;
        for (const auto& o : scene.observations(f)) (o.on_object ? object_in_view : static_in_view)++;
        CHECK(object_in_view > static_in_view);
      }
      CHECK(inverted > 0);
      const auto t = tally(scene, sim.runs[0]);
      for (int f = 0; f < scene.frame_count(); ++f) {
        if (!sim.truth.consensus_inverted[f]) continue;
        CHECK(2 * t[f].background_out > t[f].background);
      }
    }
  }
}

TEST_CASE("features stay in the image and object features in their box") {
  for (Preset p : {Preset::Easy, Preset::Hard, Preset::VeryHard, Preset::StaticCamera}) {
    CAPTURE(to_string(p));
    const ScenarioConfig c = preset(p, 5, 1);
    const Scene scene(c);
    const Simulation sim = generate(c);
    for (const auto& r : sim.runs[0]) {
      REQUIRE(r.x >= 0);
      REQUIRE(r.y >= 0);
      REQUIRE(r.x < c.width);
      REQUIRE(r.y < c.height);
      if (r.point < 0 || !scene.on_object(r.point)) continue;
      const auto box = sim.truth.boxes.find(r.frame);
      REQUIRE(box != sim.truth.boxes.end());
      CHECK(box->second.contains(r.x, r.y));
    }
    for (const auto& [f, b] : sim.truth.boxes) {
      CHECK(b.x0 >= 0);
      CHECK(b.y0 >= 0);
      CHECK(b.x1 <= c.width);
      CHECK(b.y1 <= c.height);
    }
  }
}

TEST_CASE("static camera preset: fixed pose") {
  const Scene scene(preset(Preset::StaticCamera, 1));
  for (int f = 1; f < scene.frame_count(); f += 37) {
    CHECK(scene.camera_pose(f).isApprox(scene.camera_pose(0)));
  }
}

TEST_CASE("emit_run_files: layout and determinism") {
  test::TempDir dir;
  const ScenarioConfig c = preset(Preset::Easy, 8, 10);
  emit_run_files(generate(c), dir / "a");
  emit_run_files(generate(c), dir / "b");
  emit_run_files(generate(preset(Preset::Easy, 9, 10)), dir / "c");
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
    ++files;
    const auto name = e.path().filename().string();
    CHECK(test::slurp(dir / "a" / name) == test::slurp(dir / "b" / name));
  }
  CHECK(files == 13);
  for (const char* name : {"meta.txt", "gt_trajectory.txt", "gt_masks.jsonl", "features_run_00.jsonl",
                           "features_run_09.jsonl"}) {
    CHECK(std::filesystem::exists(dir / "a" / name));
  }
  CHECK(test::slurp(dir / "a" / "features_run_00.jsonl") != test::slurp(dir / "c" / "features_run_00.jsonl"));

  // What was written reads back as the same simulation.
  const Simulation sim = generate(c);
  const auto groups = read_feature_records(dir / "a" / "features_run_03.jsonl", sim.meta);
  std::size_t n = 0;
  for (const auto& [f, records] : groups) n += records.size();
  CHECK(n == sim.runs[3].size());
  CHECK(read_sequence_meta(dir / "a" / "meta.txt").extras == sim.meta.extras);
}

TEST_CASE("reference tracker follows the dominant motion") {
  const ScenarioConfig c = preset(Preset::Hard, 3, 1);
  const Scene scene(c);
  const Simulation sim = generate(c);
  const MetricsConfig metrics;
  const double tol = metrics.tolerance(c.fps);

  const Trajectory raw = track_run(scene, sim.runs[0], 0);
  CHECK(raw.total_frames == c.frame_count);
  CHECK(tracking_rate(raw) > 0.9);

  // Dropping the object's features removes the inversion.
  std::vector<FeatureRecord> clean;
  for (const auto& r : sim.runs[0]) {
    if (r.point >= 0 && !scene.on_object(r.point)) clean.push_back(r);
  }
  const Trajectory filtered = track_run(scene, clean, 0);
  const Ate raw_ate = ate_rmse(raw, sim.truth.trajectory, tol);
  const Ate clean_ate = ate_rmse(filtered, sim.truth.trajectory, tol);
  REQUIRE(raw_ate);
  REQUIRE(clean_ate);
  CHECK(*clean_ate < metrics.l_max);
  CHECK(*clean_ate < *raw_ate);

  // Same inputs, same estimate.
  const Trajectory again = track_run(scene, clean, 0);
  REQUIRE(again.poses.size() == filtered.poses.size());
  for (std::size_t i = 0; i < again.poses.size(); ++i) CHECK(again.poses[i].t == filtered.poses[i].t);
}
