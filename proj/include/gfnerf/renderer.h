#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "gfnerf/decoder.h"
#include "gfnerf/encoder.h"
#include "gfnerf/image.h"
#include "gfnerf/octree.h"

namespace gfnerf {

// Front-to-back compositing state. weights are retained for the backward
// pass; t_final is the transmittance left after the last sample.
template <typename T>
struct RenderOutputT {
  T color[3] = {T(0), T(0), T(0)};
  T depth = T(0);
  T opacity = T(0);
  T t_final = T(1);
  std::vector<T> weights;
};

using RenderOutput = RenderOutputT<float>;

// w_i = T_i (1 - exp(-delta_i sigma_i)), T_i = exp(-sum_{j<i} delta_j
// sigma_j); color = sum w_i c_i + T_final * background. Optical depth is
// accumulated (log-transmittance) so T underflows gracefully. depth is the
// weight-averaged t normalized by max(opacity, 1e-6); an empty sample list
// renders pure background with depth t_far.
template <typename T>
RenderOutputT<T> composite(std::span<const T> sigmas, std::span<const T> colors,
                           std::span<const T> deltas, std::span<const T> ts, const T* background,
                           T t_far = T(0)) {
  const size_t n = sigmas.size();
  GF_CHECK(colors.size() == 3 * n && deltas.size() == n && ts.size() == n,
           "composite input lengths disagree");
  RenderOutputT<T> out;
  out.weights.assign(n, T(0));
  T optical_depth = T(0);
  T depth_acc = T(0);
  for (size_t i = 0; i < n; ++i) {
    const T trans = std::exp(-optical_depth);
    const T alpha = -std::expm1(-deltas[i] * sigmas[i]);
    const T w = trans * alpha;
    out.weights[i] = w;
    out.color[0] += w * colors[3 * i + 0];
    out.color[1] += w * colors[3 * i + 1];
    out.color[2] += w * colors[3 * i + 2];
    depth_acc += w * ts[i];
    out.opacity += w;
    optical_depth += deltas[i] * sigmas[i];
  }
  out.t_final = std::exp(-optical_depth);
  for (int c = 0; c < 3; ++c) out.color[c] += out.t_final * background[c];
  out.depth = n == 0 ? t_far : depth_acc / std::max(out.opacity, T(1e-6));
  return out;
}

// Exact adjoint of composite for the color output. The sigma gradient has
// the own-sample term delta_i T_i exp(-delta_i sigma_i) c_i and the suffix
// term -delta_i (sum_{j>i} w_j c_j + T_final * background).
template <typename T>
void composite_backward(std::span<const T> sigmas, std::span<const T> colors,
                        std::span<const T> deltas, const RenderOutputT<T>& fwd,
                        const T* background, const T* d_color, std::span<T> d_sigmas,
                        std::span<T> d_colors) {
  const size_t n = sigmas.size();
  GF_CHECK(d_sigmas.size() == n && d_colors.size() == 3 * n, "composite grad lengths disagree");
  // suffix_c[i] = sum_{j>i} w_j c_j + T_final * bg, computed right to left
  T suffix[3] = {fwd.t_final * background[0], fwd.t_final * background[1],
                 fwd.t_final * background[2]};
  T optical_depth = T(0);
  // rebuild prefix transmittances front to back first
  std::vector<T> trans(n);
  for (size_t i = 0; i < n; ++i) {
    trans[i] = std::exp(-optical_depth);
    optical_depth += deltas[i] * sigmas[i];
  }
  for (size_t i = n; i-- > 0;) {
    for (int c = 0; c < 3; ++c) d_colors[3 * i + c] = fwd.weights[i] * d_color[c];
    const T own = trans[i] * std::exp(-deltas[i] * sigmas[i]);
    T acc = T(0);
    for (int c = 0; c < 3; ++c) acc += d_color[c] * (own * colors[3 * i + c] - suffix[c]);
    d_sigmas[i] = deltas[i] * acc;
    for (int c = 0; c < 3; ++c) suffix[c] += fwd.weights[i] * colors[3 * i + c];
  }
}

// A renderable field: frozen-or-not octree, global encoder, optional focal
// encoder, shared decoder. guided=false ignores the global table (the
// from-scratch ablation).
struct FieldModel {
  const SpaceOctree* octree = nullptr;
  const HashEncoder* global_enc = nullptr;
  const HashEncoder* focal_enc = nullptr;  // may be null (global-only)
  const RadianceDecoder* decoder = nullptr;
  bool guided = true;

  double step_scale = 1.0;
  int max_points_per_ray = 1024;
  Rgb background{1.f, 1.f, 1.f};
  // Stop evaluating samples once accumulated optical depth passes this
  // (transmittance < ~6e-6); disabled when <= 0.
  double early_stop_optical_depth = 12.0;
};

struct RayEval {
  Rgb color;
  float depth = 0.f;
  float opacity = 0.f;
  int n_samples = 0;
};

// Forward-only evaluation of one ray (shared by render_image and eval).
RayEval eval_ray(const FieldModel& model, const Ray& ray, std::vector<RaySample>& scratch);

struct RenderedView {
  ImageF color;
  ImageF depth;  // single channel
};

// Full-frame render at (width/downsample, height/downsample).
RenderedView render_image(const FieldModel& model, const Camera& camera, int downsample = 1);

}  // namespace gfnerf
