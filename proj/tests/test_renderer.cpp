#include <doctest.h>

#include <cmath>

#include "gfnerf/renderer.h"
#include "gfnerf/util.h"

using namespace gfnerf;

namespace {

struct RandomRayInputs {
  std::vector<double> sigmas, colors, deltas, ts;
};

RandomRayInputs random_ray(Rng& rng, size_t n) {
  RandomRayInputs in;
  double t = 0.1;
  for (size_t i = 0; i < n; ++i) {
    in.sigmas.push_back(rng.uniform(0.0, 4.0));
    for (int c = 0; c < 3; ++c) in.colors.push_back(rng.uniform());
    double dt = rng.uniform(0.01, 0.2);
    in.deltas.push_back(dt);
    t += dt;
    in.ts.push_back(t);
  }
  return in;
}

}  // namespace

TEST_CASE("composite: zero density renders pure background") {
  std::vector<double> sig(8, 0.0), col(24, 0.3), dt(8, 0.1), ts(8);
  for (int i = 0; i < 8; ++i) ts[size_t(i)] = 0.1 * (i + 1);
  double bg[3] = {0.9, 0.5, 0.2};
  auto out = composite<double>(sig, col, dt, ts, bg);
  CHECK(out.color[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(out.color[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.color[2] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(out.opacity == doctest::Approx(0.0));
}

TEST_CASE("composite: near-opaque single sample returns its color") {
  std::vector<double> sig{50.0}, col{0.2, 0.4, 0.8}, dt{1.0}, ts{1.0};
  double bg[3] = {1, 1, 1};
  auto out = composite<double>(sig, col, dt, ts, bg);
  CHECK(std::abs(out.color[0] - 0.2) < 1e-9);
  CHECK(std::abs(out.color[1] - 0.4) < 1e-9);
  CHECK(std::abs(out.color[2] - 0.8) < 1e-9);
  CHECK(out.opacity == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("composite: empty sample list gives background, depth of t_far") {
  double bg[3] = {0.1, 0.2, 0.3};
  auto out = composite<double>({}, {}, {}, {}, bg, 7.5);
  CHECK(out.color[0] == doctest::Approx(0.1));
  CHECK(out.depth == doctest::Approx(7.5));
  CHECK(out.opacity == doctest::Approx(0.0));
}

TEST_CASE("composite: constant slab opacity matches 1 - exp(-sigma*s) exactly") {
  // sigma0 over N uniform steps spanning s: telescoping makes this exact
  const double sigma0 = 2.7, s = 1.3;
  const int n = 64;
  std::vector<double> sig(n, sigma0), col(3 * n, 0.5), dt(n, s / n), ts(n);
  for (int i = 0; i < n; ++i) ts[size_t(i)] = (i + 0.5) * s / n;
  double bg[3] = {1, 1, 1};
  auto out = composite<double>(sig, col, dt, ts, bg);
  CHECK(out.opacity == doctest::Approx(1.0 - std::exp(-sigma0 * s)).epsilon(1e-12));
}

TEST_CASE("composite: telescoping identity over random rays") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    auto in = random_ray(rng, 1 + rng.below(24));
    double bg[3] = {1, 1, 1};
    auto out = composite<double>(in.sigmas, in.colors, in.deltas, in.ts, bg);
    double optical = 0.0;
    for (size_t i = 0; i < in.sigmas.size(); ++i) optical += in.sigmas[i] * in.deltas[i];
    CHECK(std::abs(out.opacity - (1.0 - std::exp(-optical))) < 1e-6);
    double wsum = 0.0;
    for (double w : out.weights) {
      CHECK(w >= 0.0);
      wsum += w;
    }
    CHECK(std::abs(wsum - out.opacity) < 1e-12);
  }
}

TEST_CASE("composite: channel permutation equivariance") {
  Rng rng(5);
  auto in = random_ray(rng, 12);
  double bg[3] = {0.2, 0.6, 0.9};
  auto base = composite<double>(in.sigmas, in.colors, in.deltas, in.ts, bg);
  // rotate channels r<-g, g<-b, b<-r
  std::vector<double> rot(in.colors.size());
  for (size_t i = 0; i < in.sigmas.size(); ++i)
    for (int c = 0; c < 3; ++c) rot[3 * i + c] = in.colors[3 * i + (c + 1) % 3];
  double bg_rot[3] = {bg[1], bg[2], bg[0]};
  auto out = composite<double>(in.sigmas, rot, in.deltas, in.ts, bg_rot);
  for (int c = 0; c < 3; ++c) CHECK(out.color[c] == doctest::Approx(base.color[(c + 1) % 3]));
}

TEST_CASE("composite: opacity monotone in any single sigma") {
  Rng rng(17);
  auto in = random_ray(rng, 10);
  double bg[3] = {1, 1, 1};
  auto base = composite<double>(in.sigmas, in.colors, in.deltas, in.ts, bg);
  for (size_t i = 0; i < in.sigmas.size(); ++i) {
    auto bumped = in;
    bumped.sigmas[i] += 0.5;
    auto out = composite<double>(bumped.sigmas, bumped.colors, bumped.deltas, bumped.ts, bg);
    CHECK(out.opacity >= base.opacity - 1e-15);
  }
}

TEST_CASE("composite_backward: single sample matches the hand-derived formula") {
  // dC/dsigma_1 = delta * exp(-delta*sigma) * (c1 - bg) . d_color
  const double sigma = 0.8, delta = 0.35;
  std::vector<double> sig{sigma}, col{0.3, 0.9, 0.1}, dt{delta}, ts{0.5};
  double bg[3] = {1.0, 0.4, 0.2};
  double d_color[3] = {0.7, -0.2, 1.3};
  auto fwd = composite<double>(sig, col, dt, ts, bg);
  std::vector<double> d_sig(1), d_col(3);
  composite_backward<double>(sig, col, dt, fwd, bg, d_color, d_sig, d_col);
  double expect = 0.0;
  for (int c = 0; c < 3; ++c)
    expect += delta * std::exp(-delta * sigma) * (col[size_t(c)] - bg[c]) * d_color[c];
  CHECK(d_sig[0] == doctest::Approx(expect).epsilon(1e-12));
  for (int c = 0; c < 3; ++c)
    CHECK(d_col[size_t(c)] == doctest::Approx(fwd.weights[0] * d_color[c]).epsilon(1e-12));
}

TEST_CASE("composite_backward: zero upstream gradient zeroes everything") {
  Rng rng(3);
  auto in = random_ray(rng, 9);
  double bg[3] = {1, 1, 1};
  double d_color[3] = {0, 0, 0};
  auto fwd = composite<double>(in.sigmas, in.colors, in.deltas, in.ts, bg);
  std::vector<double> d_sig(9, 1.0), d_col(27, 1.0);
  composite_backward<double>(in.sigmas, in.colors, in.deltas, fwd, bg, d_color, d_sig, d_col);
  for (double v : d_sig) CHECK(v == 0.0);
  for (double v : d_col) CHECK(v == 0.0);
}

TEST_CASE("composite_backward: finite differences on a 16-sample ray") {
  Rng rng(23);
  auto in = random_ray(rng, 16);
  double bg[3] = {0.95, 0.9, 1.0};
  double d_color[3] = {0.6, -1.1, 0.4};
  auto fwd = composite<double>(in.sigmas, in.colors, in.deltas, in.ts, bg);
  std::vector<double> d_sig(16), d_col(48);
  composite_backward<double>(in.sigmas, in.colors, in.deltas, fwd, bg, d_color, d_sig, d_col);

  auto objective = [&](const RandomRayInputs& v) {
    auto out = composite<double>(v.sigmas, v.colors, v.deltas, v.ts, bg);
    return out.color[0] * d_color[0] + out.color[1] * d_color[1] + out.color[2] * d_color[2];
  };
  const double h = 1e-4;
  for (size_t i = 0; i < in.sigmas.size(); ++i) {
    auto plus = in, minus = in;
    plus.sigmas[i] += h;
    minus.sigmas[i] -= h;
    double fd = (objective(plus) - objective(minus)) / (2 * h);
    CHECK(std::abs(fd - d_sig[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
  for (size_t i = 0; i < in.colors.size(); ++i) {
    auto plus = in, minus = in;
    plus.colors[i] += h;
    minus.colors[i] -= h;
    double fd = (objective(plus) - objective(minus)) / (2 * h);
    CHECK(std::abs(fd - d_col[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("render_image: untrained zero-table model is near-uniform") {
  SpaceOctree tree = SpaceOctree::build({{-1, -1, -1}, {1, 1, 1}}, 2, 9);
  EncoderConfig ec;
  ec.levels = 4;
  ec.feats_per_level = 2;
  ec.base_resolution = 4;
  ec.max_resolution = 16;
  ec.table_len = 1u << 10;
  HashEncoder g = init_global(ec, 3);
  HashEncoder zero = init_focal(ec, g, 0);  // exactly zero table
  DecoderInit di;
  di.feature_dim = 8;
  di.hidden = 16;
  di.hidden_layers = 2;
  di.geo_feats = 7;
  di.seed = 5;
  RadianceDecoder dec = make_decoder(di);

  FieldModel model;
  model.octree = &tree;
  model.global_enc = &zero;
  model.decoder = &dec;
  model.background = {1, 1, 1};

  Camera cam;
  cam.rotation = Mat3::identity();
  cam.position = {0, 0, -3};
  cam.fx = cam.fy = 40;
  cam.cx = cam.cy = 16;
  cam.width = cam.height = 32;

  RenderedView view = render_image(model, cam, 1);
  // zero features -> constant (sigma, rgb) everywhere; pixel variation comes
  // only from per-ray path lengths through the box
  float lo = 1.f, hi = 0.f;
  for (float v : view.color.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi - lo < 0.12f);
}
