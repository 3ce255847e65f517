#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfnerf/vec.h"

namespace gfnerf {

// Row-major interleaved float image. channels is 3 for color, 1 for
// depth/error maps. Metrics always read these, never the 8-bit PNGs.
struct ImageF {
  int width = 0, height = 0, channels = 3;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int w, int h, int c = 3) : width(w), height(h), channels(c), data(size_t(w) * h * c, 0.f) {}

  float& at(int x, int y, int c = 0) { return data[(size_t(y) * width + x) * channels + c]; }
  float at(int x, int y, int c = 0) const { return data[(size_t(y) * width + x) * channels + c]; }

  Rgb rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set_rgb(int x, int y, const Rgb& v) {
    at(x, y, 0) = v.r;
    at(x, y, 1) = v.g;
    at(x, y, 2) = v.b;
  }

  size_t pixel_count() const { return size_t(width) * height; }
};

// 8-bit PNG for inspection (values clamped to [0,1]).
void write_png(const std::string& path, const ImageF& img);

// Lossless float32 sidecar: u32 JSON header length + JSON {width, height,
// channels, dtype} + little-endian row-major payload.
void write_raw(const std::string& path, const ImageF& img);
ImageF read_raw(const std::string& path);

// Box-average downsample by an integer factor that divides both dims.
ImageF downsample_box(const ImageF& img, int factor);
// Nearest-neighbor upsample to exactly (out_w, out_h).
ImageF upsample_nearest(const ImageF& img, int out_w, int out_h);

// Scalar map -> turbo-style false color PNG (for depth / error maps).
void write_colormapped_png(const std::string& path, const std::vector<float>& values, int w, int h);

}  // namespace gfnerf
