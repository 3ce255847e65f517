#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfnerf/image.h"
#include "gfnerf/renderer.h"
#include "gfnerf/util.h"

namespace gfnerf {

// Per-training-image MAE maps between a low-resolution re-render and the
// ground truth, nearest-upscaled to full resolution; the focal stage's
// pixel-sampling weights.
struct ErrorMap {
  int image_id = -1;
  int low_w = 0, low_h = 0;
  std::vector<float> low;  // render-resolution MAE
  int full_w = 0, full_h = 0;
  std::vector<float> full;  // nearest-neighbor upscaled
};

struct ErrorMapSet {
  int downsample = 4;
  std::vector<ErrorMap> maps;

  const ErrorMap* find(int image_id) const {
    for (const auto& m : maps)
      if (m.image_id == image_id) return &m;
    return nullptr;
  }
};

struct PixelEntry {
  int image_id = 0;
  int px = 0, py = 0;
  bool weighted = false;  // origin tag: weighted vs uniform draw
};

struct PixelBatch {
  std::vector<PixelEntry> entries;
};

// O(1) categorical sampling after an O(n) build (Walker/Vose).
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(const std::vector<double>& weights);
  size_t sample(Rng& rng) const;
  size_t size() const { return prob_.size(); }
  double total_weight() const { return total_; }

 private:
  std::vector<double> prob_;
  std::vector<uint32_t> alias_;
  double total_ = 0.0;
};

// Renders each requested image at (W/downsample, H/downsample), takes the
// channel-mean absolute error against the box-downsampled ground truth and
// upscales with nearest neighbor.
ErrorMapSet compute_error_maps(const FieldModel& model, const std::vector<Camera>& cameras,
                               const std::vector<ImageF>& images, const std::vector<int>& image_ids,
                               int downsample);

// Draws n pixels i.i.d. from p_j = e_j / sum_k e_k over every pixel of the
// given images. Falls back to uniform (with a warning) when the error mass
// is zero.
PixelBatch sample_weighted(const ErrorMapSet& errs, const std::vector<int>& image_ids, int n,
                           Rng& rng);

PixelBatch sample_uniform(const std::vector<std::pair<int, std::pair<int, int>>>& image_dims,
                          int batch_size, Rng& rng);
PixelBatch sample_uniform(const std::vector<Camera>& cameras, const std::vector<int>& image_ids,
                          int batch_size, Rng& rng);

// round(weighted_fraction * batch_size) weighted draws, remainder uniform.
PixelBatch sample_hybrid(const ErrorMapSet& errs, const std::vector<Camera>& cameras,
                         const std::vector<int>& image_ids, int batch_size,
                         double weighted_fraction, Rng& rng);

// Prebuilt weighted sampler reused across steps between error-map refreshes.
class WeightedPixelSampler {
 public:
  WeightedPixelSampler() = default;
  WeightedPixelSampler(const ErrorMapSet& errs, const std::vector<int>& image_ids);
  bool valid() const { return table_.size() > 0 && table_.total_weight() > 0; }
  PixelEntry draw(Rng& rng) const;

 private:
  struct Span {
    int image_id;
    int w, h;
    size_t begin;  // flat offset of this image's pixels
  };
  std::vector<Span> spans_;
  AliasTable table_;
};

void save_error_maps(const std::string& dir, const ErrorMapSet& errs);

}  // namespace gfnerf
