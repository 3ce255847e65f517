#pragma once

#include <span>
#include <string>

#include "gfnerf/mlp.h"
#include "gfnerf/vec.h"

namespace gfnerf {

constexpr int kShDim = 16;  // degree-3 real spherical harmonics

// Evaluates the SH basis at a unit direction; renormalizes if |d| drifts
// more than 1e-6 from 1.
template <typename T>
void sh_encoding(double dx, double dy, double dz, T* out);
void dir_encoding(const Vec3& d, std::span<float> out);

// Two tiny MLPs shared by every block: density_mlp maps the fused feature
// vector to [raw_sigma | geo_feature], color_mlp maps [geo_feature | SH(d)]
// to RGB. sigma = softplus(raw), rgb = sigmoid. Weights train only in the
// global stage; a frozen decoder still passes feature gradients through.
template <typename T>
struct RadianceDecoderT {
  Mlp<T> density_mlp;
  Mlp<T> color_mlp;
  int geo_feats = 15;
  bool frozen = false;

  template <typename U>
  RadianceDecoderT<U> cast() const {
    RadianceDecoderT<U> out;
    out.density_mlp = density_mlp.template cast<U>();
    out.color_mlp = color_mlp.template cast<U>();
    out.geo_feats = geo_feats;
    out.frozen = frozen;
    return out;
  }
};

using RadianceDecoder = RadianceDecoderT<float>;

struct DecoderInit {
  int feature_dim = 16;
  int hidden = 32;
  int hidden_layers = 2;
  int geo_feats = 15;
  uint64_t seed = 0;
};

RadianceDecoder make_decoder(const DecoderInit& init);

template <typename T>
struct DecodeResult {
  T sigma = T(0);
  T rgb[3] = {T(0), T(0), T(0)};
};

template <typename T>
struct DecodeWorkspace {
  MlpWorkspace<T> density_ws;
  MlpWorkspace<T> color_ws;
  std::vector<T> color_in;
  std::vector<T> d_color_in, d_head;  // backward scratch
  T raw_sigma = T(0);
  T pre_rgb[3] = {T(0), T(0), T(0)};
};

template <typename T>
DecodeResult<T> decode(const RadianceDecoderT<T>& dec, std::span<const T> feature, const Vec3& dir,
                       DecodeWorkspace<T>& ws);

// Returns d(loss)/d(feature) in d_feature; accumulates weight gradients into
// *grads unless the decoder is frozen (grads may also be null).
template <typename T>
void decode_backward(const RadianceDecoderT<T>& dec, DecodeWorkspace<T>& ws, T d_sigma,
                     const T* d_rgb, RadianceDecoderT<T>* grads, std::span<T> d_feature);

// Checkpoint: "GFN-DEC1" blob, float32 payload of weights then biases per
// layer, density MLP first.
void save_decoder(const std::string& path, const RadianceDecoder& dec);
RadianceDecoder load_decoder(const std::string& path);

RadianceDecoder zero_like(const RadianceDecoder& dec);
template <typename T>
RadianceDecoderT<T> zero_like_t(const RadianceDecoderT<T>& dec) {
  RadianceDecoderT<T> z = dec;
  for (auto* mlp : {&z.density_mlp, &z.color_mlp})
    for (auto& l : mlp->layers) {
      std::fill(l.w.begin(), l.w.end(), T(0));
      std::fill(l.b.begin(), l.b.end(), T(0));
    }
  return z;
}

// --- template implementations ---

template <typename T>
void sh_encoding(double dx, double dy, double dz, T* out) {
  double n = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (std::abs(n - 1.0) > 1e-6) {
    dx /= n;
    dy /= n;
    dz /= n;
  }
  const double x = dx, y = dy, z = dz;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[0] = T(0.28209479177387814);
  out[1] = T(0.4886025119029199 * y);
  out[2] = T(0.4886025119029199 * z);
  out[3] = T(0.4886025119029199 * x);
  out[4] = T(1.0925484305920792 * x * y);
  out[5] = T(1.0925484305920792 * y * z);
  out[6] = T(0.31539156525252005 * (3.0 * zz - 1.0));
  out[7] = T(1.0925484305920792 * x * z);
  out[8] = T(0.5462742152960396 * (xx - yy));
  out[9] = T(0.5900435899266435 * y * (3.0 * xx - yy));
  out[10] = T(2.890611442640554 * x * y * z);
  out[11] = T(0.4570457994644658 * y * (5.0 * zz - 1.0));
  out[12] = T(0.3731763325901154 * z * (5.0 * zz - 3.0));
  out[13] = T(0.4570457994644658 * x * (5.0 * zz - 1.0));
  out[14] = T(1.445305721320277 * z * (xx - yy));
  out[15] = T(0.5900435899266435 * x * (xx - 3.0 * yy));
}

template <typename T>
DecodeResult<T> decode(const RadianceDecoderT<T>& dec, std::span<const T> feature, const Vec3& dir,
                       DecodeWorkspace<T>& ws) {
  auto h = mlp_forward(dec.density_mlp, feature, ws.density_ws);
  ws.raw_sigma = h[0];
  ws.color_in.resize(size_t(dec.geo_feats) + kShDim);
  for (int i = 0; i < dec.geo_feats; ++i) ws.color_in[size_t(i)] = h[size_t(i) + 1];
  sh_encoding<T>(dir.x, dir.y, dir.z, ws.color_in.data() + dec.geo_feats);
  auto c = mlp_forward(dec.color_mlp, std::span<const T>(ws.color_in), ws.color_ws);

  DecodeResult<T> out;
  // softplus with the standard overflow guard
  out.sigma = ws.raw_sigma > T(20) ? ws.raw_sigma : std::log(T(1) + std::exp(ws.raw_sigma));
  for (int i = 0; i < 3; ++i) {
    ws.pre_rgb[i] = c[size_t(i)];
    out.rgb[i] = T(1) / (T(1) + std::exp(-c[size_t(i)]));
  }
  return out;
}

template <typename T>
void decode_backward(const RadianceDecoderT<T>& dec, DecodeWorkspace<T>& ws, T d_sigma,
                     const T* d_rgb, RadianceDecoderT<T>* grads, std::span<T> d_feature) {
  RadianceDecoderT<T>* g = dec.frozen ? nullptr : grads;
  // rgb head: sigmoid'
  T d_pre_rgb[3];
  for (int i = 0; i < 3; ++i) {
    T s = T(1) / (T(1) + std::exp(-ws.pre_rgb[i]));
    d_pre_rgb[i] = d_rgb[i] * s * (T(1) - s);
  }
  ws.d_color_in.assign(ws.color_in.size(), T(0));
  mlp_backward(dec.color_mlp, ws.color_ws, std::span<const T>(d_pre_rgb, 3),
               g ? &g->color_mlp : nullptr, std::span<T>(ws.d_color_in));

  // density head: softplus' = sigmoid(raw)
  ws.d_head.assign(size_t(dec.density_mlp.output_dim()), T(0));
  T sp = ws.raw_sigma > T(20) ? T(1) : T(1) / (T(1) + std::exp(-ws.raw_sigma));
  ws.d_head[0] = d_sigma * sp;
  for (int i = 0; i < dec.geo_feats; ++i) ws.d_head[size_t(i) + 1] += ws.d_color_in[size_t(i)];
  mlp_backward(dec.density_mlp, ws.density_ws, std::span<const T>(ws.d_head),
               g ? &g->density_mlp : nullptr, d_feature);
}

}  // namespace gfnerf
