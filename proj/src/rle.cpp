#include "dynaseg/rle.hpp"

#include <numeric>

#include "dynaseg/error.hpp"

namespace dynaseg {

Rle encode_mask(const Raster& mask) {
  Rle rle;
  rle.width = static_cast<int>(mask.cols());
  rle.height = static_cast<int>(mask.rows());
  const Eigen::Index n = mask.size();
  if (n == 0) return rle;

  const std::uint8_t* data = mask.data();
  std::uint8_t current = data[0] ? 1 : 0;
  rle.first = current;
  std::int64_t length = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::uint8_t v = data[i] ? 1 : 0;
    if (v == current) {
      ++length;
    } else {
      rle.runs.push_back(length);
      current = v;
      length = 1;
    }
  }
  rle.runs.push_back(length);
  return rle;
}

Raster decode_mask(const Rle& rle) {
  if (rle.width < 0 || rle.height < 0) throw ValidationError("rle: negative dimensions");
  if (rle.first > 1) throw ValidationError("rle: first value must be 0 or 1");
  const std::int64_t expected = static_cast<std::int64_t>(rle.width) * rle.height;
  std::int64_t total = 0;
  for (std::int64_t r : rle.runs) {
    if (r <= 0) throw ValidationError("rle: run lengths must be positive");
    total += r;
  }
  if (total != expected) {
    throw ValidationError("rle: runs sum to " + std::to_string(total) + ", expected " + std::to_string(expected));
  }

  Raster mask(rle.height, rle.width);
  std::uint8_t* data = mask.data();
  std::uint8_t value = rle.first;
  std::int64_t pos = 0;
  for (std::int64_t r : rle.runs) {
    std::fill(data + pos, data + pos + r, value);
    pos += r;
    value ^= 1;
  }
  return mask;
}

std::int64_t foreground_count(const Rle& rle) {
  std::int64_t count = 0;
  std::uint8_t value = rle.first;
  for (std::int64_t r : rle.runs) {
    if (value) count += r;
    value ^= 1;
  }
  return count;
}

}  // namespace dynaseg
