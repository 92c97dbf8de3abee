#pragma once

#include "dynaseg/types.hpp"

namespace dynaseg {

Rle encode_mask(const Raster& mask);

/// Throws ValidationError when run lengths are non-positive or do not sum to
/// width * height.
Raster decode_mask(const Rle& rle);

/// Number of foreground pixels, computed on the runs directly.
std::int64_t foreground_count(const Rle& rle);

}  // namespace dynaseg
