#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "gfnerf/sampler.h"
#include "gfnerf/util.h"

using namespace gfnerf;

namespace {

// Error map set with one synthetic image of the given weights.
ErrorMapSet map_from_weights(const std::vector<float>& w, int width, int height, int id = 0) {
  ErrorMapSet set;
  ErrorMap m;
  m.image_id = id;
  m.low_w = m.full_w = width;
  m.low_h = m.full_h = height;
  m.low = m.full = w;
  set.maps.push_back(std::move(m));
  return set;
}

// chi-square critical value via the Wilson-Hilferty approximation
double chi2_critical(double df, double z) {
  double a = 2.0 / (9.0 * df);
  double c = 1.0 - a + z * std::sqrt(a);
  return df * c * c * c;
}

}  // namespace

TEST_CASE("alias table: exact point mass and two-weight ratios") {
  Rng rng(1);
  AliasTable point({0.0, 0.0, 5.0, 0.0});
  for (int i = 0; i < 1000; ++i) CHECK(point.sample(rng) == 2);

  AliasTable pair({1.0, 3.0});
  int hi = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    if (pair.sample(rng) == 1) ++hi;
  // binomial: p = 0.75
  double sd = std::sqrt(n * 0.75 * 0.25);
  CHECK(std::abs(hi - 0.75 * n) < 3 * sd);
}

TEST_CASE("sample_weighted: flat map passes a chi-square uniformity test") {
  const int w = 32, h = 32;
  ErrorMapSet errs = map_from_weights(std::vector<float>(w * h, 0.5f), w, h);
  Rng rng(2);
  PixelBatch batch = sample_weighted(errs, {0}, 100000, rng);
  std::vector<int> counts(w * h, 0);
  for (const PixelEntry& e : batch.entries) {
    CHECK(e.weighted);
    CHECK(e.px >= 0);
    CHECK(e.px < w);
    CHECK(e.py >= 0);
    CHECK(e.py < h);
    counts[size_t(e.py) * w + e.px]++;
  }
  const double expect = 100000.0 / (w * h);
  double chi2 = 0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < chi2_critical(w * h - 1, 2.326));  // alpha = 0.01
}

TEST_CASE("sample_weighted: single hot pixel takes every draw") {
  std::vector<float> w(64, 0.f);
  w[37] = 2.f;
  ErrorMapSet errs = map_from_weights(w, 8, 8);
  Rng rng(3);
  PixelBatch batch = sample_weighted(errs, {0}, 500, rng);
  for (const PixelEntry& e : batch.entries) {
    CHECK(e.px == 37 % 8);
    CHECK(e.py == 37 / 8);
  }
}

TEST_CASE("sample_weighted: (1,3) weights land near (0.25, 0.75)") {
  ErrorMapSet errs = map_from_weights({1.f, 3.f}, 2, 1);
  Rng rng(4);
  const int n = 100000;
  PixelBatch batch = sample_weighted(errs, {0}, n, rng);
  int hot = 0;
  for (const PixelEntry& e : batch.entries)
    if (e.px == 1) ++hot;
  double sd = std::sqrt(n * 0.75 * 0.25);
  CHECK(std::abs(hot - 0.75 * n) < 3 * sd);
}

TEST_CASE("sample_weighted: zero error mass falls back to uniform") {
  ErrorMapSet errs = map_from_weights(std::vector<float>(16, 0.f), 4, 4);
  Rng rng(5);
  PixelBatch batch = sample_weighted(errs, {0}, 1000, rng);
  CHECK(batch.entries.size() == 1000);
  std::set<int> seen;
  for (const PixelEntry& e : batch.entries) seen.insert(e.py * 4 + e.px);
  CHECK(seen.size() > 10);  // spread over the image
}

TEST_CASE("weighted sampler empirical TV distance on a peaked 32x32 map") {
  // realistic error map: two hot regions over a small floor
  const int w = 32, h = 32;
  std::vector<float> weights(w * h);
  double total = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double d1 = (x - 8) * (x - 8) + (y - 10) * (y - 10);
      double d2 = (x - 24) * (x - 24) + (y - 22) * (y - 22);
      double v = 2.0 * std::exp(-d1 / 8.0) + 1.2 * std::exp(-d2 / 16.0) + 1e-4;
      weights[size_t(y) * w + x] = float(v);
      total += v;
    }
  ErrorMapSet errs = map_from_weights(weights, w, h);
  Rng rng(6);
  const int n = 1000000;
  PixelBatch batch = sample_weighted(errs, {0}, n, rng);
  std::vector<int> counts(w * h, 0);
  for (const PixelEntry& e : batch.entries) counts[size_t(e.py) * w + e.px]++;
  double tv = 0;
  for (int i = 0; i < w * h; ++i)
    tv += std::abs(double(counts[size_t(i)]) / n - double(weights[size_t(i)]) / total);
  tv *= 0.5;
  CHECK(tv < 0.01);
}

TEST_CASE("sample_uniform: one-pixel image, balance across images, determinism") {
  Rng rng(7);
  PixelBatch one = sample_uniform({{3, {1, 1}}}, 100, rng);
  for (const PixelEntry& e : one.entries) {
    CHECK(e.image_id == 3);
    CHECK(e.px == 0);
    CHECK(e.py == 0);
    CHECK(!e.weighted);
  }

  const int n = 100000;
  PixelBatch two = sample_uniform({{0, {16, 16}}, {1, {16, 16}}}, n, rng);
  int first = 0;
  for (const PixelEntry& e : two.entries)
    if (e.image_id == 0) ++first;
  double sd = std::sqrt(n * 0.25);
  CHECK(std::abs(first - n / 2) < 3 * sd);

  Rng a(99), b(99);
  PixelBatch ba = sample_uniform({{0, {8, 8}}, {1, {8, 8}}}, 64, a);
  PixelBatch bb = sample_uniform({{0, {8, 8}}, {1, {8, 8}}}, 64, b);
  for (size_t i = 0; i < ba.entries.size(); ++i) {
    CHECK(ba.entries[i].image_id == bb.entries[i].image_id);
    CHECK(ba.entries[i].px == bb.entries[i].px);
    CHECK(ba.entries[i].py == bb.entries[i].py);
  }
}

TEST_CASE("sample_hybrid: split counts are exact, degenerate fractions work") {
  std::vector<Camera> cams(1);
  cams[0].rotation = Mat3::identity();
  cams[0].position = {0, 0, 0};
  cams[0].fx = cams[0].fy = 8;
  cams[0].cx = cams[0].cy = 4;
  cams[0].width = cams[0].height = 8;

  ErrorMapSet errs = map_from_weights(std::vector<float>(64, 1.f), 8, 8);
  Rng rng(8);

  PixelBatch b0 = sample_hybrid(errs, cams, {0}, 1000, 0.0, rng);
  CHECK(std::count_if(b0.entries.begin(), b0.entries.end(),
                      [](const PixelEntry& e) { return e.weighted; }) == 0);

  PixelBatch b1 = sample_hybrid(errs, cams, {0}, 1000, 1.0, rng);
  CHECK(std::count_if(b1.entries.begin(), b1.entries.end(),
                      [](const PixelEntry& e) { return e.weighted; }) == 1000);

  PixelBatch b3 = sample_hybrid(errs, cams, {0}, 8192, 0.3, rng);
  auto n_weighted = std::count_if(b3.entries.begin(), b3.entries.end(),
                                  [](const PixelEntry& e) { return e.weighted; });
  CHECK(n_weighted == 2458);  // round(0.3 * 8192)
  CHECK(b3.entries.size() == 8192);
}

TEST_CASE("compute_error_maps: perfect fit, max error, and a recomputation check") {
  // minimal renderable model over an all-pruned octree: every ray renders
  // exactly the background color
  SpaceOctree tree = SpaceOctree::build({{-1, -1, -1}, {1, 1, 1}}, 1, 1);
  tree.refine();  // prune everything: renders are pure background
  EncoderConfig ec;
  ec.levels = 2;
  ec.feats_per_level = 2;
  ec.base_resolution = 2;
  ec.max_resolution = 4;
  ec.table_len = 1u << 8;
  HashEncoder enc = init_global(ec, 1);
  DecoderInit di;
  di.feature_dim = 4;
  di.hidden = 4;
  di.hidden_layers = 1;
  di.geo_feats = 3;
  RadianceDecoder dec = make_decoder(di);

  FieldModel model;
  model.octree = &tree;
  model.global_enc = &enc;
  model.decoder = &dec;
  model.background = {0.25f, 0.5f, 0.75f};

  Camera cam;
  cam.rotation = Mat3::identity();
  cam.position = {0, 0, -3};
  cam.fx = cam.fy = 10;
  cam.cx = cam.cy = 8;
  cam.width = cam.height = 16;
  std::vector<Camera> cams{cam, cam};

  // image 0 equals the render exactly; image 1 is all-black (max error)
  ImageF match(16, 16, 3), anti(16, 16, 3);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) match.set_rgb(x, y, model.background);
  std::vector<ImageF> images{match, anti};

  ErrorMapSet errs = compute_error_maps(model, cams, images, {0, 1}, 4);
  REQUIRE(errs.maps.size() == 2);
  for (float v : errs.maps[0].full) CHECK(v == doctest::Approx(0.f));
  const float expect_mae = (0.25f + 0.5f + 0.75f) / 3.f;
  for (float v : errs.maps[1].full) CHECK(v == doctest::Approx(expect_mae).epsilon(1e-6));

  // random ground truth: matches an independent per-pixel recomputation
  Rng rng(10);
  ImageF noisy(16, 16, 3);
  for (float& v : noisy.data) v = rng.uniformf(0.f, 1.f);
  std::vector<ImageF> images2{noisy};
  ErrorMapSet errs2 = compute_error_maps(model, cams, images2, {0}, 4);
  ImageF gt_low = downsample_box(noisy, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      float mae = 0;
      for (int c = 0; c < 3; ++c) mae += std::abs(model.background[c] - gt_low.at(x, y, c));
      mae /= 3.f;
      CHECK(errs2.maps[0].low[size_t(y) * 4 + x] == doctest::Approx(mae).epsilon(1e-5));
    }
  // nearest-neighbor upscale: every full-res pixel equals its source cell
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      CHECK(errs2.maps[0].full[size_t(y) * 16 + x] ==
            errs2.maps[0].low[size_t(y / 4) * 4 + x / 4]);
}
