#pragma once

#include <string>
#include <vector>

#include "evsurf/types.hpp"

namespace evsurf {

/// Dense H x W x 3 image, row-major, values nominally in [0, 1].
struct Image3 {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // height * width * 3

  Image3() = default;
  Image3(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  Vec3 pixel(int x, int y) const {
    return Vec3(at(x, y, 0), at(x, y, 1), at(x, y, 2));
  }
  void set_pixel(int x, int y, const Vec3& rgb) {
    for (int c = 0; c < 3; ++c) at(x, y, c) = rgb[c];
  }
};

/// Single-channel H x W grid (masks, event frames on disk, ...).
struct Image1 {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image1() = default;
  Image1(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// 8-bit RGB PNG; values clamped to [0, 1] and quantised.
void write_png(const std::string& path, const Image3& img);

// Lossless plain-text grids. Header "W H C", then one row of C*W numbers per
// scanline at full double precision. These are the test-oracle image format.
void write_float_grid(const std::string& path, const Image3& img);
void write_float_grid(const std::string& path, const Image1& img);
Image3 read_float_grid3(const std::string& path);
Image1 read_float_grid1(const std::string& path);

}  // namespace evsurf
