#include "dynaseg/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>

#include "json.hpp"

#include "dynaseg/error.hpp"
#include "dynaseg/raster.hpp"
#include "dynaseg/rle.hpp"

namespace dynaseg {

using nlohmann::json;

// --- types ------------------------------------------------------------------

void SequenceMeta::validate() const {
  if (image_width <= 0 || image_height <= 0) throw ValidationError("meta: width and height must be positive");
  if (!(fps > 0.0)) throw ValidationError("meta: fps must be positive");
  if (frame_count <= 0) throw ValidationError("meta: frame count must be positive");
  if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) throw ValidationError("meta: fx and fy must be positive");
}

Trajectory Trajectory::from_poses(std::vector<Pose> poses) {
  Trajectory t;
  t.poses = std::move(poses);
  t.tracked_frames = static_cast<int>(t.poses.size());
  t.total_frames = t.tracked_frames;
  return t;
}

void Trajectory::validate() const {
  for (std::size_t i = 1; i < poses.size(); ++i) {
    if (!(poses[i].timestamp > poses[i - 1].timestamp)) {
      throw ValidationError("trajectory: timestamps not strictly increasing at pose " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (std::abs(poses[i].q.norm() - 1.0) > 1e-6) {
      throw ValidationError("trajectory: non-unit quaternion at pose " + std::to_string(i));
    }
  }
  if (tracked_frames < 0 || tracked_frames > total_frames) {
    throw ValidationError("trajectory: tracked frames must lie in [0, total frames]");
  }
}

double intersection_area(const BBox& a, const BBox& b) noexcept {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

double iou(const BBox& a, const BBox& b) noexcept {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

bool overlaps(const BBox& a, const BBox& b) noexcept { return intersection_area(a, b) > 0.0; }

BBox hull(const BBox& a, const BBox& b) noexcept {
  return BBox{a.frame, std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
}

Raster MaskSequence::raster(int frame) const {
  auto it = frames.find(frame);
  if (it == frames.end()) return Raster::Zero(height, width);
  return decode_mask(it->second);
}

void MaskSequence::set(int frame, const Raster& mask) {
  if (mask.rows() != height || mask.cols() != width) {
    throw ValidationError("mask sequence: raster size does not match " + std::to_string(width) + "x" +
                          std::to_string(height));
  }
  frames[frame] = encode_mask(mask);
}

// --- numbers ----------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

namespace {

bool parse_double(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

int json_int(const json& j, const char* key, const std::string& source, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer()) {
    throw ParseError(source, line_no, std::string("missing or non-integer \"") + key + "\"");
  }
  return it->get<int>();
}

}  // namespace

// --- feature records --------------------------------------------------------

std::string format_feature_record(const FeatureRecord& r) {
  std::string s;
  s.reserve(96);
  s += "{\"frame\":";
  s += std::to_string(r.frame);
  s += ",\"x\":";
  s += format_double(r.x);
  s += ",\"y\":";
  s += format_double(r.y);
  s += ",\"status\":\"";
  s += r.is_outlier() ? "out" : "in";
  s += "\",\"run\":";
  s += std::to_string(r.run);
  if (r.point >= 0) {
    s += ",\"pt\":";
    s += std::to_string(r.point);
  }
  if (r.descriptor >= 0) {
    s += ",\"desc\":";
    s += std::to_string(r.descriptor);
  }
  s += '}';
  return s;
}

namespace {

// Feature files are by far the largest inputs, so their lines go through
// RapidJSON; full-precision mode keeps doubles exact.
int record_int(const rapidjson::Document& d, const char* key, const std::string& source, std::size_t line_no) {
  auto it = d.FindMember(key);
  if (it == d.MemberEnd() || !it->value.IsInt()) {
    throw ParseError(source, line_no, std::string("missing or non-integer \"") + key + "\"");
  }
  return it->value.GetInt();
}

double record_number(const rapidjson::Document& d, const char* key, const std::string& source, std::size_t line_no) {
  auto it = d.FindMember(key);
  if (it == d.MemberEnd() || !it->value.IsNumber()) {
    throw ParseError(source, line_no, std::string("missing or non-numeric \"") + key + "\"");
  }
  return it->value.GetDouble();
}

}  // namespace

FeatureRecord parse_feature_record(const std::string& line, const std::string& source, std::size_t line_no) {
  thread_local rapidjson::Document d;
  d.Parse<rapidjson::kParseFullPrecisionFlag>(line.data(), line.size());
  if (d.HasParseError()) {
    throw ParseError(source, line_no,
                     std::string("invalid JSON: ") + rapidjson::GetParseError_En(d.GetParseError()) + " at offset " +
                         std::to_string(d.GetErrorOffset()));
  }
  if (!d.IsObject()) throw ParseError(source, line_no, "expected a JSON object");

  FeatureRecord r;
  r.frame = record_int(d, "frame", source, line_no);
  r.x = record_number(d, "x", source, line_no);
  r.y = record_number(d, "y", source, line_no);
  r.run = record_int(d, "run", source, line_no);
  auto status = d.FindMember("status");
  if (status == d.MemberEnd() || !status->value.IsString()) throw ParseError(source, line_no, "missing \"status\"");
  const std::string_view s(status->value.GetString(), status->value.GetStringLength());
  if (s == "in") {
    r.status = FeatureStatus::Inlier;
  } else if (s == "out") {
    r.status = FeatureStatus::Outlier;
  } else {
    throw ParseError(source, line_no, "status must be \"in\" or \"out\", got \"" + std::string(s) + "\"");
  }
  if (d.HasMember("pt")) r.point = record_int(d, "pt", source, line_no);
  if (d.HasMember("desc")) r.descriptor = record_int(d, "desc", source, line_no);
  if (r.frame < 0 || r.run < 0) throw ParseError(source, line_no, "frame and run must be non-negative");
  return r;
}

std::vector<FeatureRecord> read_feature_list(const fs::path& path, const SequenceMeta& meta) {
  auto in = open_in(path);
  const std::string source = path.string();
  std::vector<FeatureRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    FeatureRecord r = parse_feature_record(line, source, line_no);
    if (!meta.contains(r.x, r.y)) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": record (frame " + std::to_string(r.frame) +
                            ", x " + format_double(r.x) + ", y " + format_double(r.y) + ") outside the " +
                            std::to_string(meta.image_width) + "x" + std::to_string(meta.image_height) + " image");
    }
    out.push_back(r);
  }
  return out;
}

FeatureGroups group_by_frame(const std::vector<FeatureRecord>& records) {
  FeatureGroups groups;
  for (const auto& r : records) groups[r.frame].push_back(r);
  return groups;
}

FeatureGroups read_feature_records(const fs::path& path, const SequenceMeta& meta) {
  return group_by_frame(read_feature_list(path, meta));
}

void write_feature_records(std::ostream& out, const std::vector<FeatureRecord>& records) {
  for (const auto& r : records) {
    out << format_feature_record(r) << '\n';
  }
}

void write_feature_records(const fs::path& path, const std::vector<FeatureRecord>& records) {
  auto out = open_out(path);
  write_feature_records(out, records);
}

// --- trajectories -----------------------------------------------------------

Trajectory parse_trajectory(std::istream& in, const std::string& source) {
  std::vector<Pose> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;

    std::istringstream fields(line);
    std::vector<double> v;
    std::string token;
    while (fields >> token) {
      double d;
      if (!parse_double(token, d)) throw ParseError(source, line_no, "not a number: \"" + token + "\"");
      v.push_back(d);
    }
    if (v.size() != 8) {
      throw ParseError(source, line_no, "expected 8 fields, got " + std::to_string(v.size()));
    }
    Pose p;
    p.timestamp = v[0];
    p.t = Eigen::Vector3d(v[1], v[2], v[3]);
    p.q = Eigen::Quaterniond(v[7], v[4], v[5], v[6]);
    const double norm = p.q.norm();
    if (std::abs(norm - 1.0) > 1e-3) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": quaternion norm " + format_double(norm));
    }
    if (std::abs(norm - 1.0) > 1e-12) p.q.normalize();
    if (!poses.empty() && !(p.timestamp > poses.back().timestamp)) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": timestamp " + format_double(p.timestamp) +
                            " does not increase");
    }
    poses.push_back(p);
  }
  return Trajectory::from_poses(std::move(poses));
}

Trajectory read_trajectory(const fs::path& path) {
  auto in = open_in(path);
  return parse_trajectory(in, path.string());
}

void write_trajectory(const Trajectory& traj, std::ostream& out) {
  out << "# timestamp tx ty tz qx qy qz qw\n";
  for (const auto& p : traj.poses) {
    out << format_double(p.timestamp) << ' ' << format_double(p.t.x()) << ' ' << format_double(p.t.y()) << ' '
        << format_double(p.t.z()) << ' ' << format_double(p.q.x()) << ' ' << format_double(p.q.y()) << ' '
        << format_double(p.q.z()) << ' ' << format_double(p.q.w()) << '\n';
  }
}

void write_trajectory(const Trajectory& traj, const fs::path& path) {
  auto out = open_out(path);
  write_trajectory(traj, out);
}

// --- sequence meta ----------------------------------------------------------

SequenceMeta parse_sequence_meta(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    if (!kv.emplace(key, value).second) throw ParseError(source, line_no, "duplicate key \"" + key + "\"");
  }

  SequenceMeta meta;
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(source, 0, std::string("missing key \"") + key + "\"");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto number = [&](const char* key) {
    const std::string v = take(key);
    double d;
    if (!parse_double(v, d)) throw ParseError(source, 0, std::string("key \"") + key + "\" is not a number");
    return d;
  };
  auto integer = [&](const char* key) {
    const double d = number(key);
    if (d != std::floor(d)) throw ParseError(source, 0, std::string("key \"") + key + "\" is not an integer");
    return static_cast<int>(d);
  };

  meta.sequence_id = take("id");
  meta.image_width = integer("width");
  meta.image_height = integer("height");
  meta.fps = number("fps");
  meta.frame_count = integer("frames");
  meta.intrinsics.fx = number("fx");
  meta.intrinsics.fy = number("fy");
  meta.intrinsics.cx = number("cx");
  meta.intrinsics.cy = number("cy");
  meta.extras = std::move(kv);
  meta.validate();
  return meta;
}

SequenceMeta read_sequence_meta(const fs::path& path) {
  auto in = open_in(path);
  return parse_sequence_meta(in, path.string());
}

void write_sequence_meta(const SequenceMeta& meta, std::ostream& out) {
  out << "id = " << meta.sequence_id << '\n'
      << "width = " << meta.image_width << '\n'
      << "height = " << meta.image_height << '\n'
      << "fps = " << format_double(meta.fps) << '\n'
      << "frames = " << meta.frame_count << '\n'
      << "fx = " << format_double(meta.intrinsics.fx) << '\n'
      << "fy = " << format_double(meta.intrinsics.fy) << '\n'
      << "cx = " << format_double(meta.intrinsics.cx) << '\n'
      << "cy = " << format_double(meta.intrinsics.cy) << '\n';
  for (const auto& [k, v] : meta.extras) out << k << " = " << v << '\n';
}

void write_sequence_meta(const SequenceMeta& meta, const fs::path& path) {
  auto out = open_out(path);
  write_sequence_meta(meta, out);
}

// --- masks ------------------------------------------------------------------

std::vector<MaskSequence> read_masks(const fs::path& path, const SequenceMeta& meta) {
  auto in = open_in(path);
  const std::string source = path.string();
  std::map<int, MaskSequence> by_object;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    const int frame = json_int(j, "frame", source, line_no);
    const int object = json_int(j, "object", source, line_no);
    const int first = json_int(j, "first", source, line_no);
    if (first != 0 && first != 1) throw ParseError(source, line_no, "\"first\" must be 0 or 1");
    auto runs = j.find("rle");
    if (runs == j.end() || !runs->is_array()) throw ParseError(source, line_no, "missing \"rle\" array");

    Rle rle;
    rle.width = meta.image_width;
    rle.height = meta.image_height;
    rle.first = static_cast<std::uint8_t>(first);
    rle.runs.reserve(runs->size());
    for (const auto& r : *runs) {
      if (!r.is_number_integer()) throw ParseError(source, line_no, "rle entries must be integers");
      rle.runs.push_back(r.get<std::int64_t>());
    }
    std::uint8_t value = rle.first;
    std::int64_t total = 0;
    for (std::size_t i = 0; i < rle.runs.size(); ++i, value ^= 1) {
      if (rle.runs[i] <= 0) throw ValidationError(source + ":" + std::to_string(line_no) + ": non-positive run");
      total += rle.runs[i];
    }
    if (total != static_cast<std::int64_t>(meta.image_width) * meta.image_height) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": rle covers " + std::to_string(total) +
                            " pixels, image has " +
                            std::to_string(static_cast<std::int64_t>(meta.image_width) * meta.image_height));
    }

    auto& seq = by_object[object];
    seq.sequence_id = meta.sequence_id;
    seq.width = meta.image_width;
    seq.height = meta.image_height;
    seq.object_id = object;
    if (!seq.frames.emplace(frame, std::move(rle)).second) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": duplicate frame " + std::to_string(frame) +
                            " for object " + std::to_string(object));
    }
  }
  std::vector<MaskSequence> out;
  for (auto& [id, seq] : by_object) out.push_back(std::move(seq));
  return out;
}

void write_masks(std::ostream& out, const std::vector<MaskSequence>& masks) {
  for (const auto& seq : masks) {
    for (const auto& [frame, rle] : seq.frames) {
      out << "{\"frame\":" << frame << ",\"object\":" << seq.object_id << ",\"rle\":[";
      for (std::size_t i = 0; i < rle.runs.size(); ++i) {
        if (i) out << ',';
        out << rle.runs[i];
      }
      out << "],\"first\":" << static_cast<int>(rle.first) << "}\n";
    }
  }
}

void write_masks(const fs::path& path, const std::vector<MaskSequence>& masks) {
  auto out = open_out(path);
  write_masks(out, masks);
}

void write_pgm(const Raster& mask, const fs::path& path) {
  auto out = open_out(path);
  out << "P5\n" << mask.cols() << ' ' << mask.rows() << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(mask.cols()));
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) row[c] = mask(r, c) ? static_cast<char>(255) : 0;
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

Raster read_pgm(const fs::path& path) {
  auto in = open_in(path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw ParseError(path.string(), 0, "not an 8-bit P5 PGM");
  in.get();
  Raster mask(h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int r = 0; r < h; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), w);
    if (!in) throw ParseError(path.string(), 0, "truncated PGM");
    for (int c = 0; c < w; ++c) mask(r, c) = row[c] ? 1 : 0;
  }
  return mask;
}

}  // namespace dynaseg

namespace dynaseg {

MaskSequence read_union_mask(const fs::path& path, const SequenceMeta& meta) {
  MaskSequence out;
  out.sequence_id = meta.sequence_id;
  out.width = meta.image_width;
  out.height = meta.image_height;
  out.object_id = 0;
  for (const auto& seq : read_masks(path, meta)) {
    for (const auto& [frame, rle] : seq.frames) {
      auto it = out.frames.find(frame);
      if (it == out.frames.end()) {
        out.frames.emplace(frame, rle);
      } else {
        Raster merged = decode_mask(it->second);
        merged = merged.max(decode_mask(rle));
        it->second = encode_mask(merged);
      }
    }
  }
  return out;
}

}  // namespace dynaseg
