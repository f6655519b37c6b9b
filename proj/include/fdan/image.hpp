#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fdan {

struct Image {
  int h = 0, w = 0;
  std::vector<uint8_t> px;  // row-major, 0 background, 255 ink

  uint8_t at(int y, int x) const { return px[static_cast<size_t>(y) * w + x]; }
  void set(int y, int x, uint8_t v) { px[static_cast<size_t>(y) * w + x] = v; }
};

// Binary PGM (P5, maxval 255). Readers reject anything else.
void write_pgm(const std::string& path, const Image& img);
Image read_pgm(const std::string& path);

}  // namespace fdan
