#include "gfnerf/image.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "gfnerf/serial.h"
#include "gfnerf/util.h"

namespace gfnerf {

namespace {

uint8_t to_byte(float v) {
  v = std::clamp(v, 0.f, 1.f);
  return uint8_t(std::lround(v * 255.f));
}

struct FileCloser {
  FILE* f;
  ~FileCloser() { if (f) std::fclose(f); }
};

}  // namespace

void write_png(const std::string& path, const ImageF& img) {
  GF_CHECK(img.channels == 3 || img.channels == 1, "write_png expects 1 or 3 channels");
  FILE* f = std::fopen(path.c_str(), "wb");
  GF_CHECK(f != nullptr, "cannot open for write: " + path);
  FileCloser closer{f};

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  GF_CHECK(png != nullptr, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    GF_CHECK(false, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    GF_CHECK(false, "libpng error writing " + path);
  }
  png_init_io(png, f);
  int color_type = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(size_t(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[size_t(x) * img.channels + c] = to_byte(img.at(x, y, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_raw(const std::string& path, const ImageF& img) {
  nlohmann::json header = {
      {"width", img.width}, {"height", img.height}, {"channels", img.channels}, {"dtype", "float32"}};
  std::string htext = header.dump();
  std::vector<uint8_t> bytes;
  uint32_t hlen = uint32_t(htext.size());
  put_pod(bytes, hlen);
  bytes.insert(bytes.end(), htext.begin(), htext.end());
  const uint8_t* p = reinterpret_cast<const uint8_t*>(img.data.data());
  bytes.insert(bytes.end(), p, p + img.data.size() * sizeof(float));
  write_file_bytes(path, bytes.data(), bytes.size());
}

ImageF read_raw(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  size_t cursor = 0;
  uint32_t hlen = get_pod<uint32_t>(bytes, cursor);
  GF_CHECK(cursor + hlen <= bytes.size(), "truncated raw header: " + path);
  nlohmann::json header = nlohmann::json::parse(bytes.begin() + long(cursor), bytes.begin() + long(cursor + hlen));
  cursor += hlen;
  ImageF img(header.at("width").get<int>(), header.at("height").get<int>(),
             header.value("channels", 3));
  GF_CHECK(header.value("dtype", "float32") == std::string("float32"), "unsupported raw dtype");
  size_t need = img.data.size() * sizeof(float);
  GF_CHECK(bytes.size() - cursor == need, "raw payload size mismatch: " + path);
  std::memcpy(img.data.data(), bytes.data() + cursor, need);
  return img;
}

ImageF downsample_box(const ImageF& img, int factor) {
  GF_CHECK(factor >= 1 && img.width % factor == 0 && img.height % factor == 0,
           "downsample factor must divide image dims");
  ImageF out(img.width / factor, img.height / factor, img.channels);
  const float inv = 1.f / float(factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        float acc = 0.f;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += img.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = acc * inv;
      }
    }
  }
  return out;
}

ImageF upsample_nearest(const ImageF& img, int out_w, int out_h) {
  ImageF out(out_w, out_h, img.channels);
  for (int y = 0; y < out_h; ++y) {
    int sy = std::min(img.height - 1, y * img.height / out_h);
    for (int x = 0; x < out_w; ++x) {
      int sx = std::min(img.width - 1, x * img.width / out_w);
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

namespace {

// Coarse turbo-style ramp, linearly interpolated.
const float kRamp[][3] = {
    {0.190f, 0.072f, 0.232f}, {0.275f, 0.408f, 0.882f}, {0.150f, 0.735f, 0.845f},
    {0.385f, 0.920f, 0.450f}, {0.850f, 0.860f, 0.130f}, {0.975f, 0.557f, 0.050f},
    {0.890f, 0.150f, 0.070f}, {0.480f, 0.016f, 0.010f}};

Rgb ramp_color(float v) {
  v = std::clamp(v, 0.f, 1.f);
  const int n = int(sizeof(kRamp) / sizeof(kRamp[0]));
  float pos = v * float(n - 1);
  int i = std::min(n - 2, int(pos));
  float t = pos - float(i);
  return {kRamp[i][0] * (1 - t) + kRamp[i + 1][0] * t, kRamp[i][1] * (1 - t) + kRamp[i + 1][1] * t,
          kRamp[i][2] * (1 - t) + kRamp[i + 1][2] * t};
}

}  // namespace

void write_colormapped_png(const std::string& path, const std::vector<float>& values, int w, int h) {
  GF_CHECK(values.size() == size_t(w) * h, "colormap value count mismatch");
  float lo = values.empty() ? 0.f : values[0], hi = lo;
  for (float v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  float range = hi - lo;
  if (range <= 0.f) range = 1.f;
  ImageF img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.set_rgb(x, y, ramp_color((values[size_t(y) * w + x] - lo) / range));
  write_png(path, img);
}

}  // namespace gfnerf
