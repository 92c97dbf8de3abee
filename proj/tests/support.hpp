#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "dynaseg/types.hpp"

namespace dynaseg::test {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dynaseg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline Eigen::Quaterniond random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized();
}

inline SequenceMeta small_meta(int width = 64, int height = 48, int frames = 10) {
  SequenceMeta m;
  m.sequence_id = "fixture";
  m.image_width = width;
  m.image_height = height;
  m.frame_count = frames;
  m.fps = 30.0;
  m.intrinsics = {50.0, 50.0, width / 2.0, height / 2.0};
  return m;
}

inline Trajectory identity_trajectory(int frames, double fps = 30.0) {
  std::vector<Pose> poses;
  for (int f = 0; f < frames; ++f) {
    Pose p;
    p.timestamp = f / fps;
    poses.push_back(p);
  }
  return Trajectory::from_poses(std::move(poses));
}

}  // namespace dynaseg::test
