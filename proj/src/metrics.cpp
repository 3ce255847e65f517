#include "gfnerf/metrics.h"

#include <cmath>

#include <json.hpp>

#include "gfnerf/util.h"

namespace gfnerf {

double psnr(const ImageF& a, const ImageF& b) {
  GF_CHECK(a.width == b.width && a.height == b.height && a.channels == b.channels,
           "psnr: image dims differ");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = double(a.data[i]) - double(b.data[i]);
    mse += d * d;
  }
  mse /= double(a.data.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> to_gray(const ImageF& img) {
  std::vector<double> g(img.pixel_count());
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int c = 0; c < img.channels; ++c) acc += img.at(x, y, c);
      g[size_t(y) * img.width + x] = acc / img.channels;
    }
  }
  return g;
}

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWin * kWin);
  const double sigma = 1.5;
  double total = 0.0;
  for (int y = 0; y < kWin; ++y) {
    for (int x = 0; x < kWin; ++x) {
      double dx = x - (kWin - 1) / 2.0, dy = y - (kWin - 1) / 2.0;
      double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[size_t(y) * kWin + x] = v;
      total += v;
    }
  }
  for (double& v : w) v /= total;
  return w;
}

double ssim_term(double mu_a, double mu_b, double var_a, double var_b, double cov) {
  return ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
         ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
}

}  // namespace

double ssim(const ImageF& a, const ImageF& b) {
  GF_CHECK(a.width == b.width && a.height == b.height, "ssim: image dims differ");
  std::vector<double> ga = to_gray(a), gb = to_gray(b);
  const int w = a.width, h = a.height;

  if (w < kWin || h < kWin) {
    // global-statistics fallback for tiny images
    double mu_a = 0, mu_b = 0;
    for (size_t i = 0; i < ga.size(); ++i) {
      mu_a += ga[i];
      mu_b += gb[i];
    }
    mu_a /= double(ga.size());
    mu_b /= double(gb.size());
    double var_a = 0, var_b = 0, cov = 0;
    for (size_t i = 0; i < ga.size(); ++i) {
      var_a += (ga[i] - mu_a) * (ga[i] - mu_a);
      var_b += (gb[i] - mu_b) * (gb[i] - mu_b);
      cov += (ga[i] - mu_a) * (gb[i] - mu_b);
    }
    var_a /= double(ga.size());
    var_b /= double(gb.size());
    cov /= double(ga.size());
    return ssim_term(mu_a, mu_b, var_a, var_b, cov);
  }

  static const std::vector<double> win = gaussian_window();
  double acc = 0.0;
  size_t count = 0;
  for (int y = 0; y + kWin <= h; ++y) {
    for (int x = 0; x + kWin <= w; ++x) {
      double mu_a = 0, mu_b = 0;
      for (int wy = 0; wy < kWin; ++wy)
        for (int wx = 0; wx < kWin; ++wx) {
          double g = win[size_t(wy) * kWin + wx];
          mu_a += g * ga[size_t(y + wy) * w + (x + wx)];
          mu_b += g * gb[size_t(y + wy) * w + (x + wx)];
        }
      double var_a = 0, var_b = 0, cov = 0;
      for (int wy = 0; wy < kWin; ++wy)
        for (int wx = 0; wx < kWin; ++wx) {
          double g = win[size_t(wy) * kWin + wx];
          double da = ga[size_t(y + wy) * w + (x + wx)] - mu_a;
          double db = gb[size_t(y + wy) * w + (x + wx)] - mu_b;
          var_a += g * da * da;
          var_b += g * db * db;
          cov += g * da * db;
        }
      acc += ssim_term(mu_a, mu_b, var_a, var_b, cov);
      ++count;
    }
  }
  return acc / double(count);
}

void MetricReport::finalize() {
  mean_psnr = 0.0;
  mean_ssim = 0.0;
  for (const auto& m : images) {
    mean_psnr += m.psnr;
    mean_ssim += m.ssim;
  }
  if (!images.empty()) {
    mean_psnr /= double(images.size());
    mean_ssim /= double(images.size());
  }
}

std::string MetricReport::to_json() const {
  nlohmann::json doc;
  nlohmann::json imgs = nlohmann::json::array();
  for (const auto& m : images) {
    imgs.push_back({{"camera_id", m.camera_id},
                    {"block_id", m.block_id},
                    {"psnr", m.psnr},
                    {"ssim", m.ssim}});
  }
  doc["images"] = imgs;
  doc["mean_psnr"] = mean_psnr;
  doc["mean_ssim"] = mean_ssim;
  doc["count"] = images.size();
  doc["config_hash"] = config_hash;
  doc["run_id"] = run_id;
  return doc.dump(2) + "\n";
}

}  // namespace gfnerf
