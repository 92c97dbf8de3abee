#include "dynaseg/scene_simulator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "dynaseg/error.hpp"
#include "dynaseg/io.hpp"
#include "dynaseg/raster.hpp"

namespace dynaseg {

namespace {

constexpr int kBackgroundWords = 224;
constexpr int kObjectWords = 32;
constexpr double kNearPlane = 0.05;

// Room walls, floor and ceiling.
const Eigen::Vector3d kRoomMin{-6.0, -2.5, -6.0};
const Eigen::Vector3d kRoomMax{6.0, 2.5, 6.0};

double deg(double d) { return d * std::numbers::pi / 180.0; }

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(salt)};
  return std::mt19937_64(seq);
}

std::string lower_alnum(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

// Point sampled uniformly on the surface of an axis-aligned box, with the
// outward normal of its face.
std::pair<Eigen::Vector3d, Eigen::Vector3d> sample_box_surface(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                                                               std::mt19937_64& rng) {
  const Eigen::Vector3d d = hi - lo;
  const double areas[3] = {d.y() * d.z(), d.x() * d.z(), d.x() * d.y()};  // faces normal to x, y, z
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Six faces: (axis, lower) then (axis, upper).
  double pick = u(rng) * 2.0 * (areas[0] + areas[1] + areas[2]);
  int face = 0;
  while (face < 5 && pick >= areas[face / 2]) pick -= areas[face++ / 2];
  const int axis = face / 2;
  const bool upper = face % 2 == 1;
  Eigen::Vector3d p;
  for (int a = 0; a < 3; ++a) p(a) = lo(a) + u(rng) * d(a);
  p(axis) = upper ? hi(axis) : lo(axis);
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  n(axis) = upper ? 1.0 : -1.0;
  return {p, n};
}

bool inside_convex(const std::vector<Eigen::Vector2d>& poly, const Eigen::Vector2d& p) {
  if (poly.size() < 3) return false;
  int sign = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector2d& a = poly[i];
    const Eigen::Vector2d& b = poly[(i + 1) % poly.size()];
    const double c = (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
    const int s = c > 0 ? 1 : (c < 0 ? -1 : 0);
    if (s == 0) continue;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

Eigen::Vector2d far_away() {
  return Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
}

}  // namespace

// --- presets -------------------------------------------------------------------

std::string to_string(Preset preset) {
  switch (preset) {
    case Preset::Static: return "static";
    case Preset::Easy: return "easy";
    case Preset::Hard: return "hard";
    case Preset::VeryHard: return "veryhard";
    case Preset::StaticCamera: return "staticcamera";
  }
  return "unknown";
}

Preset parse_preset(const std::string& name) {
  const std::string key = lower_alnum(name);
  for (Preset p : {Preset::Static, Preset::Easy, Preset::Hard, Preset::VeryHard, Preset::StaticCamera}) {
    if (to_string(p) == key) return p;
  }
  throw ValidationError("unknown preset \"" + name + "\" (static, easy, hard, very-hard, static-camera)");
}

ScenarioConfig ScenarioConfig::for_preset(Preset preset, std::uint64_t seed) {
  ScenarioConfig c;
  c.preset = preset;
  c.seed = seed;
  switch (preset) {
    case Preset::Static:
    case Preset::Easy:
      c.object_size = {0.8, 0.8, 0.8};
      c.object_depth = 3.0;
      c.object_speed = preset == Preset::Static ? 0.0 : 0.03;
      c.n_object_points = 400;
      break;
    case Preset::Hard:
      c.object_size = {1.6, 1.2, 0.3};
      c.object_depth = 2.2;
      c.object_speed = 0.035;
      c.n_object_points = 2000;
      break;
    case Preset::VeryHard:
      c.object_size = {1.1, 0.65, 0.2};
      c.object_depth = 0.8;
      c.object_speed = 0.0;  // carried by the camera instead
      c.n_object_points = 2000;
      break;
    case Preset::StaticCamera:
      c.object_size = {1.2, 1.0, 0.3};
      c.object_depth = 1.6;
      c.object_speed = 0.025;
      c.n_object_points = 2000;
      break;
  }
  return c;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("scenario: " + what); };
  if (width <= 0 || height <= 0) fail("image size must be positive");
  if (!(fps > 0.0)) fail("fps must be > 0");
  if (frame_count < 2) fail("frame_count must be >= 2");
  if (!(intrinsics.fx > 0.0 && intrinsics.fy > 0.0)) fail("focal lengths must be > 0");
  if (n_features <= 0) fail("n_features must be > 0");
  if (n_object_points < 0) fail("n_object_points must be >= 0");
  if (!(object_size.minCoeff() > 0.0)) fail("object_size must be positive");
  if (!(object_depth > 0.0)) fail("object_depth must be > 0");
  if (!(object_speed >= 0.0)) fail("object_speed must be >= 0");
  if (object_id < 0) fail("object_id must be >= 0");
  if (motion_start < 0 || motion_stop < motion_start || motion_stop >= frame_count) {
    fail("motion frames must satisfy 0 <= start <= stop < frame_count");
  }
  if (!(reprojection_gate > 0.0)) fail("reprojection_gate must be > 0");
  if (!(pixel_noise >= 0.0)) fail("pixel_noise must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (ghosts_per_frame < 0) fail("ghosts_per_frame must be >= 0");
  if (runs < 1) fail("runs must be >= 1");
}

std::string ScenarioConfig::id() const {
  return sequence_id.empty() ? to_string(preset) + "_" + std::to_string(seed) : sequence_id;
}

SequenceMeta scenario_meta(const ScenarioConfig& c) {
  SequenceMeta m;
  m.sequence_id = c.id();
  m.image_width = c.width;
  m.image_height = c.height;
  m.fps = c.fps;
  m.frame_count = c.frame_count;
  m.intrinsics = c.intrinsics;
  auto& x = m.extras;
  x["sim.preset"] = to_string(c.preset);
  x["sim.seed"] = std::to_string(c.seed);
  x["sim.n_features"] = std::to_string(c.n_features);
  x["sim.n_object_points"] = std::to_string(c.n_object_points);
  x["sim.object_size"] = format_double(c.object_size.x()) + "," + format_double(c.object_size.y()) + "," +
                         format_double(c.object_size.z());
  x["sim.object_depth"] = format_double(c.object_depth);
  x["sim.object_speed"] = format_double(c.object_speed);
  x["sim.object_id"] = std::to_string(c.object_id);
  x["sim.motion_start"] = std::to_string(c.motion_start);
  x["sim.motion_stop"] = std::to_string(c.motion_stop);
  x["sim.reprojection_gate"] = format_double(c.reprojection_gate);
  x["sim.pixel_noise"] = format_double(c.pixel_noise);
  x["sim.dropout"] = format_double(c.dropout);
  x["sim.ghosts_per_frame"] = std::to_string(c.ghosts_per_frame);
  x["sim.runs"] = std::to_string(c.runs);
  return m;
}

ScenarioConfig scenario_from_meta(const SequenceMeta& m) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = m.extras.find(key);
    if (it == m.extras.end()) throw ValidationError("meta of " + m.sequence_id + " lacks simulator key " + key);
    return it->second;
  };
  auto number = [&](const std::string& key) {
    const std::string& v = get(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ValidationError("meta key " + key + " is not a number: " + v);
    }
  };
  auto integer = [&](const std::string& key) {
    const double d = number(key);
    if (d != std::floor(d)) throw ValidationError("meta key " + key + " is not an integer");
    return static_cast<long long>(d);
  };

  ScenarioConfig c;
  c.preset = parse_preset(get("sim.preset"));
  try {
    c.seed = std::stoull(get("sim.seed"));
  } catch (const std::exception&) {
    throw ValidationError("meta key sim.seed is not an unsigned integer");
  }
  c.sequence_id = m.sequence_id;
  c.width = m.image_width;
  c.height = m.image_height;
  c.fps = m.fps;
  c.frame_count = m.frame_count;
  c.intrinsics = m.intrinsics;
  c.n_features = static_cast<int>(integer("sim.n_features"));
  c.n_object_points = static_cast<int>(integer("sim.n_object_points"));
  {
    std::stringstream ss(get("sim.object_size"));
    std::string part;
    int i = 0;
    while (std::getline(ss, part, ',') && i < 3) c.object_size(i++) = std::stod(part);
    if (i != 3) throw ValidationError("meta key sim.object_size needs three values");
  }
  c.object_depth = number("sim.object_depth");
  c.object_speed = number("sim.object_speed");
  c.object_id = static_cast<int>(integer("sim.object_id"));
  c.motion_start = static_cast<int>(integer("sim.motion_start"));
  c.motion_stop = static_cast<int>(integer("sim.motion_stop"));
  c.reprojection_gate = number("sim.reprojection_gate");
  c.pixel_noise = number("sim.pixel_noise");
  c.dropout = number("sim.dropout");
  c.ghosts_per_frame = static_cast<int>(integer("sim.ghosts_per_frame"));
  c.runs = static_cast<int>(integer("sim.runs"));
  c.validate();
  return c;
}

// --- scene ---------------------------------------------------------------------

Scene::Scene(const ScenarioConfig& config) : config_(config) {
  config_.validate();
  build_world();
  build_frames();
}

void Scene::build_world() {
  const ScenarioConfig& c = config_;
  auto rng = make_rng(c.seed, 0, 0x776f726c64);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> background_word(0, kBackgroundWords - 1);
  std::uniform_int_distribution<int> object_word(0, kObjectWords - 1);
  const int object_base = kBackgroundWords + kObjectWords * c.object_id;

  // Camera path: steady pan with small wobble and a slow drift, phases per seed.
  const double yaw_rate = deg(0.35 + 0.1 * u(rng));
  const double phase[5] = {2 * std::numbers::pi * u(rng), 2 * std::numbers::pi * u(rng), 2 * std::numbers::pi * u(rng),
                           2 * std::numbers::pi * u(rng), 2 * std::numbers::pi * u(rng)};
  const bool fixed_camera = c.preset == Preset::StaticCamera;
  cameras_.resize(static_cast<std::size_t>(c.frame_count));
  for (int f = 0; f < c.frame_count; ++f) {
    const double s = fixed_camera ? 0.0 : double(f);
    const double tau = 2 * std::numbers::pi;
    const double yaw = yaw_rate * s;
    const double pitch = fixed_camera ? 0.0 : deg(3.0) * std::sin(tau * s / 300.0 + phase[0]);
    const double roll = fixed_camera ? 0.0 : deg(2.0) * std::sin(tau * s / 450.0 + phase[1]);
    Eigen::Vector3d t(0.1 * std::sin(tau * s / 600.0 + phase[2]), 0.03 * std::sin(tau * s / 200.0 + phase[3]),
                      0.1 * std::sin(tau * s / 400.0 + phase[4]));
    if (fixed_camera) t.setZero();
    Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
    pose.linear() = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) * Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()) *
                     Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitZ()))
                        .toRotationMatrix();
    pose.translation() = t;
    cameras_[static_cast<std::size_t>(f)] = pose;
  }

  // Static landmarks on the room surfaces.
  points_.reserve(static_cast<std::size_t>(c.n_features + c.n_object_points));
  for (int i = 0; i < c.n_features; ++i) {
    points_.push_back(sample_box_surface(kRoomMin, kRoomMax, rng).first);
    normals_.push_back(Eigen::Vector3d::Zero());
    // A few background landmarks look like object parts.
    descriptors_.push_back(u(rng) < 0.01 ? object_base + object_word(rng) : background_word(rng));
  }
  static_count_ = c.n_features;

  // Object points on the cuboid surface, in object coordinates.
  const Eigen::Vector3d half = 0.5 * c.object_size;
  for (int i = 0; i < c.n_object_points; ++i) {
    auto [p, n] = sample_box_surface(-half, half, rng);
    points_.push_back(p);
    normals_.push_back(n);
    descriptors_.push_back(u(rng) < 0.05 ? background_word(rng) : object_base + object_word(rng));
  }

  // Place the object in front of the camera as it looks at motion start, to
  // the left of its path so the motion sweeps across the view.
  const Eigen::Isometry3d& anchor = cameras_[static_cast<std::size_t>(c.motion_start)];
  const double travel = c.object_speed * (c.motion_stop - c.motion_start);
  const double lift = c.preset == Preset::VeryHard ? 0.0 : 0.2 * (2.0 * u(rng) - 1.0);
  object_in_camera_ = Eigen::Isometry3d::Identity();
  object_in_camera_.translation() = Eigen::Vector3d(-0.5 * travel, lift, c.object_depth + half.z());
  object_origin_ = anchor * object_in_camera_;
  object_velocity_ = c.object_speed * (anchor.linear() * Eigen::Vector3d::UnitX());

  objects_.resize(static_cast<std::size_t>(c.frame_count));
  for (int f = 0; f < c.frame_count; ++f) {
    const int clamped = std::clamp(f, c.motion_start, c.motion_stop);
    Eigen::Isometry3d pose;
    if (c.preset == Preset::VeryHard) {
      pose = cameras_[static_cast<std::size_t>(clamped)] * object_in_camera_;
    } else {
      pose = object_origin_;
      pose.pretranslate(object_velocity_ * double(clamped - c.motion_start));
    }
    objects_[static_cast<std::size_t>(f)] = pose;
  }
}

Eigen::Isometry3d Scene::camera_pose(int frame) const { return cameras_.at(static_cast<std::size_t>(frame)); }

Eigen::Isometry3d Scene::object_pose(int frame) const { return objects_.at(static_cast<std::size_t>(frame)); }

Eigen::Isometry3d Scene::object_motion(int frame) const {
  if (frame <= 0) return Eigen::Isometry3d::Identity();
  return object_pose(frame) * object_pose(frame - 1).inverse();
}

bool Scene::object_moving(int frame) const {
  if (config_.preset == Preset::Static) return false;
  if (config_.preset != Preset::VeryHard && !(config_.object_speed > 0.0)) return false;
  return frame > config_.motion_start && frame <= config_.motion_stop;
}

Eigen::Vector3d Scene::world_point(int point, int frame) const {
  const auto& p = points_.at(static_cast<std::size_t>(point));
  return on_object(point) ? Eigen::Vector3d(object_pose(frame) * p) : p;
}

std::optional<Eigen::Vector2d> Scene::project(const Eigen::Vector3d& world, int frame) const {
  const Eigen::Vector3d pc = camera_pose(frame).inverse() * world;
  if (pc.z() <= kNearPlane) return std::nullopt;
  const auto& k = config_.intrinsics;
  return Eigen::Vector2d(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
}

std::optional<Eigen::Vector2d> Scene::predict(int point, int frame, MotionHypothesis hypothesis) const {
  if (frame <= 0) return project(world_point(point, 0), 0);
  Eigen::Vector3d previous = world_point(point, frame - 1);
  if (hypothesis == MotionHypothesis::ObjectWorld) previous = object_motion(frame) * previous;
  return project(previous, frame);
}

std::optional<std::vector<Eigen::Vector2d>> Scene::object_silhouette(int frame) const {
  const Eigen::Vector3d half = 0.5 * config_.object_size;
  const Eigen::Isometry3d to_camera = camera_pose(frame).inverse() * object_pose(frame);
  Eigen::Vector3d cam[8];
  for (int i = 0; i < 8; ++i) {
    const Eigen::Vector3d local((i & 1) ? half.x() : -half.x(), (i & 2) ? half.y() : -half.y(),
                                (i & 4) ? half.z() : -half.z());
    cam[i] = to_camera * local;
  }
  // The part of the cuboid in front of the near plane: corners there plus
  // edge crossings with the plane.
  const double near = kNearPlane;
  const auto& k = config_.intrinsics;
  std::vector<Eigen::Vector2d> corners;
  auto add = [&](const Eigen::Vector3d& pc) {
    corners.emplace_back(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
  };
  for (int i = 0; i < 8; ++i) {
    if (cam[i].z() >= near) add(cam[i]);
    for (int bit : {1, 2, 4}) {
      const int j = i | bit;
      if (j == i) continue;
      const double zi = cam[i].z() - near, zj = cam[j].z() - near;
      if ((zi < 0.0) == (zj < 0.0)) continue;
      add(cam[i] + (cam[j] - cam[i]) * (zi / (zi - zj)));
    }
  }
  if (corners.size() < 3) return std::nullopt;
  auto hull = convex_hull(std::move(corners));
  if (hull.size() < 3) return std::nullopt;
  // Must reach into the image.
  const BBox image{frame, 0.0, 0.0, double(config_.width), double(config_.height)};
  BBox box{frame, hull[0].x(), hull[0].y(), hull[0].x(), hull[0].y()};
  for (const auto& p : hull) {
    box.x0 = std::min(box.x0, p.x());
    box.y0 = std::min(box.y0, p.y());
    box.x1 = std::max(box.x1, p.x());
    box.y1 = std::max(box.y1, p.y());
  }
  if (!overlaps(box, image)) return std::nullopt;
  return hull;
}

std::optional<BBox> Scene::object_box(int frame) const {
  const auto hull = object_silhouette(frame);
  if (!hull) return std::nullopt;
  // Margin covers the bounded pixel noise of emitted features.
  const double margin = 1.5;
  BBox box{frame, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : *hull) {
    box.x0 = std::min(box.x0, p.x() - margin);
    box.y0 = std::min(box.y0, p.y() - margin);
    box.x1 = std::max(box.x1, p.x() + margin);
    box.y1 = std::max(box.y1, p.y() + margin);
  }
  box.x0 = std::max(box.x0, 0.0);
  box.y0 = std::max(box.y0, 0.0);
  box.x1 = std::min(box.x1, double(config_.width));
  box.y1 = std::min(box.y1, double(config_.height));
  if (!box.valid()) return std::nullopt;
  return box;
}

void Scene::build_frames() {
  const ScenarioConfig& c = config_;
  const double gate = c.reprojection_gate;
  observations_.assign(static_cast<std::size_t>(c.frame_count), {});
  dominant_.assign(static_cast<std::size_t>(c.frame_count), MotionHypothesis::StaticWorld);

  for (int f = 0; f < c.frame_count; ++f) {
    const Eigen::Isometry3d world_to_camera = camera_pose(f).inverse();
    const Eigen::Vector3d center = camera_pose(f).translation();
    const Eigen::Isometry3d obj = object_pose(f);
    const auto silhouette = object_silhouette(f);
    double nearest_object = std::numeric_limits<double>::infinity();
    if (silhouette) {
      const Eigen::Vector3d half = 0.5 * c.object_size;
      for (int i = 0; i < 8; ++i) {
        const Eigen::Vector3d local((i & 1) ? half.x() : -half.x(), (i & 2) ? half.y() : -half.y(),
                                    (i & 4) ? half.z() : -half.z());
        nearest_object = std::min(nearest_object, (world_to_camera * (obj * local)).z());
      }
    }

    auto& obs = observations_[static_cast<std::size_t>(f)];
    for (int i = 0; i < landmark_count(); ++i) {
      const bool object_point = on_object(i);
      const Eigen::Vector3d world = object_point ? Eigen::Vector3d(obj * points_[i]) : points_[i];
      if (object_point) {
        const Eigen::Vector3d normal = obj.linear() * normals_[i];
        if (normal.dot(center - world) <= 0.0) continue;  // back face
      }
      const Eigen::Vector3d pc = world_to_camera * world;
      if (pc.z() <= kNearPlane) continue;
      const Eigen::Vector2d px(c.intrinsics.fx * pc.x() / pc.z() + c.intrinsics.cx,
                               c.intrinsics.fy * pc.y() / pc.z() + c.intrinsics.cy);
      if (!(px.x() >= 0.0 && px.y() >= 0.0 && px.x() < c.width && px.y() < c.height)) continue;
      if (!object_point && silhouette && pc.z() > nearest_object && inside_convex(*silhouette, px)) continue;

      Observation o;
      o.point = i;
      o.on_object = object_point;
      o.pixel = px;
      o.predicted_static = predict(i, f, MotionHypothesis::StaticWorld).value_or(far_away());
      o.predicted_object = object_moving(f) ? predict(i, f, MotionHypothesis::ObjectWorld).value_or(far_away())
                                            : o.predicted_static;
      obs.push_back(o);
    }

    int support_static = 0, support_object = 0;
    for (const auto& o : obs) {
      if ((o.pixel - o.predicted_static).norm() <= gate) ++support_static;
      if ((o.pixel - o.predicted_object).norm() <= gate) ++support_object;
    }
    if (object_moving(f) && support_object > support_static) {
      dominant_[static_cast<std::size_t>(f)] = MotionHypothesis::ObjectWorld;
    }
  }
}

// --- outputs ---------------------------------------------------------------------

GroundTruth ground_truth(const Scene& scene) {
  const ScenarioConfig& c = scene.config();
  GroundTruth gt;
  std::vector<Pose> poses;
  gt.masks.sequence_id = c.id();
  gt.masks.width = c.width;
  gt.masks.height = c.height;
  gt.masks.object_id = 1;
  for (int f = 0; f < c.frame_count; ++f) {
    const Eigen::Isometry3d pose = scene.camera_pose(f);
    Pose p;
    p.timestamp = f / c.fps;
    p.t = pose.translation();
    p.q = Eigen::Quaterniond(pose.linear()).normalized();
    poses.push_back(p);

    if (const auto box = scene.object_box(f)) {
      gt.boxes.emplace(f, *box);
      Raster mask = Raster::Zero(c.height, c.width);
      fill_convex_polygon(mask, *scene.object_silhouette(f), 0.5);
      if (count_foreground(mask) > 0) gt.masks.set(f, mask);
    }
    gt.consensus_inverted.push_back(scene.consensus_inverted(f));
    gt.object_moving.push_back(scene.object_moving(f));
  }
  gt.trajectory = Trajectory::from_poses(std::move(poses));
  gt.tracking_rate = 1.0;
  return gt;
}

std::vector<FeatureRecord> generate_run(const Scene& scene, int run) {
  const ScenarioConfig& c = scene.config();
  auto rng = make_rng(c.seed, static_cast<std::uint64_t>(run) + 1, 0x72756e);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto jitter = [&] {
    // Truncated at 3 sigma so features stay within the ground-truth box margin.
    double n;
    do {
      n = noise(rng);
    } while (std::abs(n) > 3.0);
    return c.pixel_noise * n;
  };

  std::vector<FeatureRecord> out;
  for (int f = 0; f < c.frame_count; ++f) {
    const bool inverted = scene.consensus_inverted(f);
    for (const auto& o : scene.observations(f)) {
      if (u(rng) < c.dropout) continue;
      const Eigen::Vector2d px = o.pixel + Eigen::Vector2d(jitter(), jitter());
      if (!(px.x() >= 0.0 && px.y() >= 0.0 && px.x() < c.width && px.y() < c.height)) continue;
      const Eigen::Vector2d& expected = inverted ? o.predicted_object : o.predicted_static;
      FeatureRecord r;
      r.frame = f;
      r.run = run;
      r.x = px.x();
      r.y = px.y();
      r.status = (px - expected).norm() > c.reprojection_gate ? FeatureStatus::Outlier : FeatureStatus::Inlier;
      r.point = o.point;
      r.descriptor = scene.descriptor(o.point);
      out.push_back(r);
    }
    for (int g = 0; g < c.ghosts_per_frame; ++g) {
      FeatureRecord r;
      r.frame = f;
      r.run = run;
      r.x = u(rng) * c.width;
      r.y = u(rng) * c.height;
      r.status = FeatureStatus::Outlier;
      out.push_back(r);
    }
  }
  return out;
}

Simulation generate(const ScenarioConfig& config) {
  const Scene scene(config);
  Simulation sim;
  sim.meta = scene.meta();
  sim.truth = ground_truth(scene);
  for (int r = 0; r < config.runs; ++r) sim.runs.push_back(generate_run(scene, r));
  return sim;
}

void emit_run_files(const Simulation& sim, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_sequence_meta(sim.meta, dir / "meta.txt");
  write_trajectory(sim.truth.trajectory, dir / "gt_trajectory.txt");
  write_masks(dir / "gt_masks.jsonl", {sim.truth.masks});
  for (std::size_t r = 0; r < sim.runs.size(); ++r) {
    char name[40];
    std::snprintf(name, sizeof(name), "features_run_%02zu.jsonl", r);
    write_feature_records(dir / name, sim.runs[r]);
  }
}

// --- reference tracker -------------------------------------------------------------

Trajectory track_run(const Scene& scene, std::span<const FeatureRecord> records, int run,
                     const ReferenceTrackerConfig& config) {
  const ScenarioConfig& c = scene.config();
  auto rng = make_rng(c.seed, static_cast<std::uint64_t>(run) + 1, 0x747261636b);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double scale = config.min_scale + (config.max_scale - config.min_scale) * u(rng);

  std::vector<std::vector<const FeatureRecord*>> by_frame(static_cast<std::size_t>(c.frame_count));
  for (const auto& r : records) {
    if (r.frame < 0 || r.frame >= c.frame_count || r.point < 0 || r.point >= scene.landmark_count()) continue;
    by_frame[static_cast<std::size_t>(r.frame)].push_back(&r);
  }

  Trajectory traj;
  traj.total_frames = c.frame_count;
  Eigen::Isometry3d estimate = scene.camera_pose(0);
  for (int f = 0; f < c.frame_count; ++f) {
    const auto& frame_records = by_frame[static_cast<std::size_t>(f)];
    int support_static = 0, support_object = 0;
    for (const FeatureRecord* r : frame_records) {
      const Eigen::Vector2d px(r->x, r->y);
      const auto a = scene.predict(r->point, f, MotionHypothesis::StaticWorld);
      const auto b = scene.predict(r->point, f, MotionHypothesis::ObjectWorld);
      if (a && (px - *a).norm() <= c.reprojection_gate) ++support_static;
      if (b && (px - *b).norm() <= c.reprojection_gate) ++support_object;
    }
    const bool follow_object = support_object > support_static;
    const int support = std::max(support_static, support_object);

    if (f > 0) {
      const Eigen::Isometry3d prev = scene.camera_pose(f - 1), next = scene.camera_pose(f);
      Eigen::Isometry3d delta = prev.inverse() * next;
      if (follow_object) {
        delta = prev.inverse() * scene.object_pose(f - 1) * scene.object_pose(f).inverse() * next;
      }
      const double step = delta.translation().norm();
      const Eigen::Vector3d n(noise(rng), noise(rng), noise(rng));
      delta.translation() += config.increment_noise * step / std::sqrt(3.0) * n;
      estimate = estimate * delta;
    }
    if (support < config.min_support) continue;  // lost
    Pose p;
    p.timestamp = f / c.fps;
    p.t = scale * estimate.translation();
    p.q = Eigen::Quaterniond(estimate.linear()).normalized();
    traj.poses.push_back(p);
    ++traj.tracked_frames;
  }
  return traj;
}

}  // namespace dynaseg
