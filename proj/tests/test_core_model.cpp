#include <doctest.h>

#include <random>
#include <sstream>

#include "dynaseg/error.hpp"
#include "dynaseg/io.hpp"
#include "dynaseg/rle.hpp"
#include "support.hpp"

using namespace dynaseg;
using dynaseg::test::TempDir;

namespace {

FeatureRecord random_record(std::mt19937_64& rng, const SequenceMeta& meta) {
  std::uniform_real_distribution<double> ux(0.0, meta.image_width);
  std::uniform_real_distribution<double> uy(0.0, meta.image_height);
  std::uniform_int_distribution<int> frame(0, 100000), run(0, 99), coin(0, 1), id(-1, 5000);
  FeatureRecord r;
  r.frame = frame(rng);
  r.run = run(rng);
  r.x = ux(rng);
  r.y = uy(rng);
  if (r.x >= meta.image_width) r.x = 0.0;
  if (r.y >= meta.image_height) r.y = 0.0;
  r.status = coin(rng) ? FeatureStatus::Outlier : FeatureStatus::Inlier;
  r.point = id(rng);
  r.descriptor = coin(rng) ? id(rng) : -1;
  return r;
}

Raster random_raster(std::mt19937_64& rng, int max_side) {
  std::uniform_int_distribution<int> side(1, max_side);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  const int rows = side(rng), cols = side(rng);
  const double p = density(rng);
  std::bernoulli_distribution bit(p);
  Raster r(rows, cols);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = bit(rng) ? 1 : 0;
  return r;
}

}  // namespace

TEST_CASE("feature records: two records group into one frame") {
  TempDir dir;
  const SequenceMeta meta = test::small_meta();
  test::spit(dir / "f.jsonl",
             "{\"frame\":0,\"x\":10,\"y\":20,\"status\":\"in\",\"run\":0}\n"
             "{\"frame\":0,\"x\":30,\"y\":40,\"status\":\"out\",\"run\":0}\n");
  const FeatureGroups g = read_feature_records(dir / "f.jsonl", meta);
  REQUIRE(g.size() == 1);
  REQUIRE(g.at(0).size() == 2);
  CHECK(g.at(0)[0].x == 10.0);
  CHECK(g.at(0)[0].status == FeatureStatus::Inlier);
  CHECK(g.at(0)[1].y == 40.0);
  CHECK(g.at(0)[1].status == FeatureStatus::Outlier);
  CHECK(g.at(0)[1].point == -1);
}

TEST_CASE("feature records: empty file gives an empty map") {
  TempDir dir;
  test::spit(dir / "f.jsonl", "");
  CHECK(read_feature_records(dir / "f.jsonl", test::small_meta()).empty());
}

TEST_CASE("feature records: bad status is a parse error on its line") {
  TempDir dir;
  test::spit(dir / "f.jsonl",
             "{\"frame\":0,\"x\":10,\"y\":20,\"status\":\"in\",\"run\":0}\n"
             "{\"frame\":1,\"x\":10,\"y\":20,\"status\":\"inliar\",\"run\":0}\n");
  try {
    read_feature_records(dir / "f.jsonl", test::small_meta());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("feature records: malformed lines are rejected") {
  const char* bad[] = {
      "not json",
      "[1,2]",
      "{\"x\":1,\"y\":2,\"status\":\"in\",\"run\":0}",
      "{\"frame\":1.5,\"x\":1,\"y\":2,\"status\":\"in\",\"run\":0}",
      "{\"frame\":1,\"x\":\"1\",\"y\":2,\"status\":\"in\",\"run\":0}",
      "{\"frame\":-1,\"x\":1,\"y\":2,\"status\":\"in\",\"run\":0}",
      "{\"frame\":1,\"x\":1,\"y\":2,\"run\":0}",
      "{\"frame\":1,\"x\":1,\"y\":2,\"status\":\"in\"}",
  };
  for (const char* line : bad) {
    CAPTURE(line);
    CHECK_THROWS_AS(parse_feature_record(line), ParseError);
  }
}

TEST_CASE("feature records: out-of-image coordinates name the record") {
  TempDir dir;
  test::spit(dir / "f.jsonl", "{\"frame\":3,\"x\":64,\"y\":20,\"status\":\"in\",\"run\":0}\n");
  try {
    read_feature_records(dir / "f.jsonl", test::small_meta());
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("frame 3") != std::string::npos);
  }
}

TEST_CASE("feature records: random round trips are exact") {
  std::mt19937_64 rng(11);
  const SequenceMeta meta = test::small_meta(1280, 720);
  TempDir dir;
  std::vector<FeatureRecord> records;
  for (int i = 0; i < 1000; ++i) {
    const FeatureRecord r = random_record(rng, meta);
    REQUIRE(parse_feature_record(format_feature_record(r)) == r);
    records.push_back(r);
  }
  write_feature_records(dir / "f.jsonl", records);
  CHECK(read_feature_list(dir / "f.jsonl", meta) == records);
}

TEST_CASE("trajectory: identity pose line") {
  std::istringstream in("0.0 0 0 0 0 0 0 1\n");
  const Trajectory t = parse_trajectory(in);
  REQUIRE(t.poses.size() == 1);
  CHECK(t.poses[0].t.isZero());
  CHECK(t.poses[0].q.isApprox(Eigen::Quaterniond::Identity()));
  CHECK(t.tracked_frames == 1);
}

TEST_CASE("trajectory: comments are skipped and order is enforced") {
  std::istringstream ok("# header\n0 1 2 3 0 0 0 1\n  # indented\n1 1 2 3 0 0 0 1\n");
  CHECK(parse_trajectory(ok).poses.size() == 2);
  std::istringstream backwards("1.0 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n");
  CHECK_THROWS_AS(parse_trajectory(backwards), ValidationError);
  std::istringstream short_line("1.0 0 0 0 0 0 1\n");
  CHECK_THROWS_AS(parse_trajectory(short_line), ParseError);
}

TEST_CASE("trajectory: quaternions near unit are normalized, others rejected") {
  std::istringstream near("0 0 0 0 0 0 0 1.0005\n");
  CHECK(parse_trajectory(near).poses[0].q.norm() == doctest::Approx(1.0).epsilon(1e-12));
  std::istringstream far("0 0 0 0 0 0 0 1.01\n");
  CHECK_THROWS_AS(parse_trajectory(far), ValidationError);
}

TEST_CASE("trajectory: random round trips are stable") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 10.0);
  std::uniform_real_distribution<double> dt(1e-3, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Pose> poses;
    double ts = n(rng);
    for (int i = 0; i < 1 + trial % 7; ++i) {
      Pose p;
      p.timestamp = ts += dt(rng);
      p.t = Eigen::Vector3d(n(rng), n(rng), n(rng));
      p.q = test::random_rotation(rng);
      poses.push_back(p);
    }
    std::ostringstream first;
    write_trajectory(Trajectory::from_poses(poses), first);
    std::istringstream in(first.str());
    const Trajectory back = parse_trajectory(in);
    REQUIRE(back.poses.size() == poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
      CHECK(std::abs(back.poses[i].timestamp - poses[i].timestamp) <= 1e-9);
      CHECK((back.poses[i].t - poses[i].t).norm() <= 1e-9);
      CHECK(back.poses[i].q.coeffs().isApprox(poses[i].q.coeffs(), 1e-9));
    }
    std::ostringstream second;
    write_trajectory(back, second);
    CHECK(second.str() == first.str());
  }
}

TEST_CASE("rle: small fixtures") {
  Raster zero = Raster::Zero(4, 4);
  const Rle z = encode_mask(zero);
  CHECK(z.first == 0);
  CHECK(z.runs == std::vector<std::int64_t>{16});

  Raster checker(2, 2);
  checker << 1, 0, 0, 1;
  const Rle c = encode_mask(checker);
  CHECK(c.first == 1);
  // Row-major scan: the diagonal pixels meet in the middle.
  CHECK(c.runs == std::vector<std::int64_t>{1, 2, 1});
  CHECK(foreground_count(c) == 2);

  Raster stripe(1, 4);
  stripe << 0, 1, 0, 1;
  const Rle s = encode_mask(stripe);
  CHECK(s.first == 0);
  CHECK(s.runs == std::vector<std::int64_t>{1, 1, 1, 1});
}

TEST_CASE("rle: inconsistent runs are rejected") {
  Rle bad{4, 4, 0, {10, 5}};
  CHECK_THROWS_AS(decode_mask(bad), ValidationError);
  Rle zero_run{2, 2, 0, {2, 0, 2}};
  CHECK_THROWS_AS(decode_mask(zero_run), ValidationError);
}

TEST_CASE("rle: exhaustive 3x3 and random round trips") {
  for (int bits = 0; bits < 512; ++bits) {
    Raster r(3, 3);
    for (int i = 0; i < 9; ++i) r.data()[i] = (bits >> i) & 1;
    REQUIRE((decode_mask(encode_mask(r)) == r).all());
  }
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const Raster r = random_raster(rng, 120);
    const Rle rle = encode_mask(r);
    REQUIRE((decode_mask(rle) == r).all());
    CHECK(foreground_count(rle) == (r != 0).count());
  }
}

TEST_CASE("sequence meta: round trip keeps extras") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> side(1, 4000);
  std::uniform_real_distribution<double> u(1.0, 2000.0);
  for (int trial = 0; trial < 500; ++trial) {
    SequenceMeta m;
    m.sequence_id = "seq_" + std::to_string(trial);
    m.image_width = side(rng);
    m.image_height = side(rng);
    m.fps = u(rng);
    m.frame_count = side(rng);
    m.intrinsics = {u(rng), u(rng), u(rng), u(rng)};
    m.extras["sim.seed"] = std::to_string(trial);
    m.extras["t0"] = format_double(u(rng));
    std::ostringstream out;
    write_sequence_meta(m, out);
    std::istringstream in(out.str());
    const SequenceMeta back = parse_sequence_meta(in);
    CHECK(back.sequence_id == m.sequence_id);
    CHECK(back.image_width == m.image_width);
    CHECK(back.image_height == m.image_height);
    CHECK(back.fps == m.fps);
    CHECK(back.frame_count == m.frame_count);
    CHECK(back.intrinsics == m.intrinsics);
    CHECK(back.extras == m.extras);
  }
}

TEST_CASE("sequence meta: missing and invalid keys") {
  std::istringstream missing("id = a\nwidth = 10\n");
  CHECK_THROWS_AS(parse_sequence_meta(missing), ParseError);
  std::istringstream zero("id = a\nwidth = 0\nheight = 5\nfps = 30\nframes = 3\nfx = 1\nfy = 1\ncx = 0\ncy = 0\n");
  CHECK_THROWS_AS(parse_sequence_meta(zero), ValidationError);
  std::istringstream dup("id = a\nid = b\n");
  CHECK_THROWS_AS(parse_sequence_meta(dup), ParseError);
}

TEST_CASE("masks: random multi-object files round trip") {
  std::mt19937_64 rng(21);
  TempDir dir;
  const SequenceMeta meta = test::small_meta(37, 23);
  std::bernoulli_distribution bit(0.3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<MaskSequence> objects;
    for (int id = 1; id <= 1 + trial % 3; ++id) {
      MaskSequence s;
      s.sequence_id = meta.sequence_id;
      s.width = meta.image_width;
      s.height = meta.image_height;
      s.object_id = id;
      for (int f = 0; f < 3; ++f) {
        Raster r(meta.image_height, meta.image_width);
        for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = bit(rng);
        s.set(f * id, r);
      }
      objects.push_back(s);
    }
    std::ostringstream text;
    write_masks(text, objects);
    test::spit(dir / "m.jsonl", text.str());
    const auto back = read_masks(dir / "m.jsonl", meta);
    REQUIRE(back.size() == objects.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].object_id == objects[i].object_id);
      CHECK(back[i].frames == objects[i].frames);
    }
  }
}

TEST_CASE("masks: union reader ORs objects per frame") {
  TempDir dir;
  const SequenceMeta meta = test::small_meta(4, 1);
  test::spit(dir / "m.jsonl",
             "{\"frame\":0,\"object\":1,\"rle\":[1,1,2],\"first\":1}\n"
             "{\"frame\":0,\"object\":2,\"rle\":[2,1,1],\"first\":0}\n"
             "{\"frame\":2,\"object\":2,\"rle\":[4],\"first\":0}\n");
  const MaskSequence u = read_union_mask(dir / "m.jsonl", meta);
  REQUIRE(u.frames.size() == 2);
  Raster expected(1, 4);
  expected << 1, 0, 1, 1;
  CHECK((u.raster(0) == expected).all());
}

TEST_CASE("masks: bad files are rejected") {
  TempDir dir;
  const SequenceMeta meta = test::small_meta(4, 1);
  test::spit(dir / "a.jsonl", "{\"frame\":0,\"object\":1,\"rle\":[1,2],\"first\":1}\n");
  CHECK_THROWS_AS(read_masks(dir / "a.jsonl", meta), ValidationError);
  test::spit(dir / "b.jsonl", "{\"frame\":0,\"object\":1,\"rle\":[4],\"first\":2}\n");
  CHECK_THROWS_AS(read_masks(dir / "b.jsonl", meta), ParseError);
  test::spit(dir / "c.jsonl",
             "{\"frame\":0,\"object\":1,\"rle\":[4],\"first\":0}\n{\"frame\":0,\"object\":1,\"rle\":[4],\"first\":1}\n");
  CHECK_THROWS_AS(read_masks(dir / "c.jsonl", meta), ValidationError);
}

TEST_CASE("pgm: random round trips") {
  std::mt19937_64 rng(4);
  TempDir dir;
  for (int trial = 0; trial < 500; ++trial) {
    const Raster r = random_raster(rng, 40);
    write_pgm(r, dir / "m.pgm");
    REQUIRE((read_pgm(dir / "m.pgm") == r).all());
  }
  const std::string text = test::slurp(dir / "m.pgm");
  CHECK(text.rfind("P5", 0) == 0);
}

TEST_CASE("bbox helpers") {
  const BBox a{0, 0, 0, 10, 10}, b{0, 5, 5, 15, 15}, c{0, 10, 0, 20, 10};
  CHECK(intersection_area(a, b) == 25.0);
  CHECK(iou(a, b) == doctest::Approx(25.0 / 175.0));
  CHECK(overlaps(a, b));
  CHECK_FALSE(overlaps(a, c));
  CHECK(hull(a, b) == BBox{0, 0, 0, 15, 15});
  CHECK(a.contains(0, 0));
  CHECK_FALSE(a.contains(10, 5));
}

TEST_CASE("format_double is shortest and exact") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(3.0) == "3");
}
