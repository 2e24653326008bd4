#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "holoseg/tensor.hpp"

namespace holoseg {

/// 8-bit interleaved RGB raster. `comments` are carried into PPM headers.
struct RgbImage {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel
  std::vector<std::string> comments;

  RgbImage() = default;
  RgbImage(Index w, Index h) : width(w), height(h), pixels(static_cast<std::size_t>(w * h * 3), 0) {}

  std::uint8_t* at(Index y, Index x) { return pixels.data() + (y * width + x) * 3; }
  const std::uint8_t* at(Index y, Index x) const { return pixels.data() + (y * width + x) * 3; }
};

}  // namespace holoseg
