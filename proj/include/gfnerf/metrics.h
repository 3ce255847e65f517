#pragma once

#include <string>
#include <vector>

#include "gfnerf/image.h"

namespace gfnerf {

// PSNR in dB over all pixels and channels; identical images report the cap
// value 99.
double psnr(const ImageF& a, const ImageF& b);

// Standard single-scale SSIM on the channel-mean grayscale image: 11x11
// Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, averaged over all
// positions where the window fits. Images smaller than the window fall back
// to global statistics.
double ssim(const ImageF& a, const ImageF& b);

struct ImageMetrics {
  int camera_id = -1;
  int block_id = -1;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ImageMetrics> images;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::string config_hash;
  std::string run_id;

  void finalize();  // recompute aggregates
  std::string to_json() const;
};

}  // namespace gfnerf
