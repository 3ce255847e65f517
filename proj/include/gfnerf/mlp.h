#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gfnerf/util.h"

namespace gfnerf {

enum class Activation : uint8_t { kNone = 0, kRelu = 1 };

// Small dense network. Templated on scalar so gradient tests can run the
// identical computation in double precision.
template <typename T>
struct Mlp {
  struct Layer {
    int in = 0, out = 0;
    std::vector<T> w;  // out x in, row-major
    std::vector<T> b;
    Activation act = Activation::kNone;
  };
  std::vector<Layer> layers;

  int input_dim() const { return layers.front().in; }
  int output_dim() const { return layers.back().out; }

  void add_layer(int in, int out, Activation act) {
    Layer l;
    l.in = in;
    l.out = out;
    l.w.assign(size_t(out) * in, T(0));
    l.b.assign(size_t(out), T(0));
    l.act = act;
    if (!layers.empty()) GF_CHECK(layers.back().out == in, "mlp layer dims incompatible");
    layers.push_back(std::move(l));
  }

  size_t param_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }

  template <typename U>
  Mlp<U> cast() const {
    Mlp<U> out;
    for (const auto& l : layers) {
      out.add_layer(l.in, l.out, l.act);
      auto& o = out.layers.back();
      for (size_t i = 0; i < l.w.size(); ++i) o.w[i] = U(l.w[i]);
      for (size_t i = 0; i < l.b.size(); ++i) o.b[i] = U(l.b[i]);
    }
    return out;
  }
};

namespace detail {

// Dot product with four explicit accumulators: fixed association order (so
// results are reproducible) that the compiler can keep in SIMD lanes.
template <typename T>
inline T dot4(const T* a, const T* b, int n) {
  T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  T tail = T(0);
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((s0 + s1) + (s2 + s3)) + tail;
}

}  // namespace detail

// Forward activations retained for the backward pass. acts[0] is the input,
// acts[i+1] the post-activation output of layer i. Buffers are reused
// across calls; nothing allocates after the first forward.
template <typename T>
struct MlpWorkspace {
  std::vector<std::vector<T>> acts;
  std::vector<std::vector<T>> pre;  // pre-activation values per layer
  std::vector<T> bwd_cur, bwd_next;

  void prepare(const Mlp<T>& mlp) {
    const size_t n_layers = mlp.layers.size();
    if (acts.size() != n_layers + 1) acts.resize(n_layers + 1);
    if (pre.size() != n_layers) pre.resize(n_layers);
    acts[0].resize(size_t(mlp.input_dim()));
    for (size_t li = 0; li < n_layers; ++li) {
      pre[li].resize(size_t(mlp.layers[li].out));
      acts[li + 1].resize(size_t(mlp.layers[li].out));
    }
  }
};

template <typename T>
std::span<const T> mlp_forward(const Mlp<T>& mlp, std::span<const T> x, MlpWorkspace<T>& ws) {
  GF_CHECK(x.size() == size_t(mlp.input_dim()), "mlp input size mismatch");
  const size_t n_layers = mlp.layers.size();
  ws.prepare(mlp);
  std::copy(x.begin(), x.end(), ws.acts[0].begin());
  for (size_t li = 0; li < n_layers; ++li) {
    const auto& l = mlp.layers[li];
    const T* in = ws.acts[li].data();
    T* pre = ws.pre[li].data();
    T* out = ws.acts[li + 1].data();
    const T* w = l.w.data();
    for (int r = 0; r < l.out; ++r) {
      T acc = l.b[size_t(r)] + detail::dot4(w + size_t(r) * l.in, in, l.in);
      pre[r] = acc;
      out[r] = l.act == Activation::kRelu ? (acc > T(0) ? acc : T(0)) : acc;
    }
  }
  return ws.acts[n_layers];
}

// dy is the gradient at the network output. Weight/bias gradients are
// accumulated into `grads` (same topology) unless it is null; the gradient
// with respect to the input is written to dx.
template <typename T>
void mlp_backward(const Mlp<T>& mlp, MlpWorkspace<T>& ws, std::span<const T> dy, Mlp<T>* grads,
                  std::span<T> dx) {
  const size_t n_layers = mlp.layers.size();
  GF_CHECK(dy.size() == size_t(mlp.output_dim()), "mlp dy size mismatch");
  std::vector<T>& cur = ws.bwd_cur;
  std::vector<T>& next = ws.bwd_next;
  cur.resize(dy.size());
  std::copy(dy.begin(), dy.end(), cur.begin());
  for (size_t li = n_layers; li-- > 0;) {
    const auto& l = mlp.layers[li];
    if (l.act == Activation::kRelu) {
      const T* pre = ws.pre[li].data();
      for (int r = 0; r < l.out; ++r)
        if (pre[r] <= T(0)) cur[size_t(r)] = T(0);
    }
    const T* in = ws.acts[li].data();
    next.assign(size_t(l.in), T(0));
    T* nx = next.data();
    if (grads) {
      auto& gl = grads->layers[li];
      for (int r = 0; r < l.out; ++r) {
        const T g = cur[size_t(r)];
        gl.b[size_t(r)] += g;
        T* gw = gl.w.data() + size_t(r) * l.in;
        const T* wr = l.w.data() + size_t(r) * l.in;
        for (int c = 0; c < l.in; ++c) {
          gw[c] += g * in[c];
          nx[c] += g * wr[c];
        }
      }
    } else {
      for (int r = 0; r < l.out; ++r) {
        const T g = cur[size_t(r)];
        const T* wr = l.w.data() + size_t(r) * l.in;
        for (int c = 0; c < l.in; ++c) nx[c] += g * wr[c];
      }
    }
    cur.swap(next);
  }
  GF_CHECK(dx.size() == cur.size(), "mlp dx size mismatch");
  std::copy(cur.begin(), cur.end(), dx.begin());
}

}  // namespace gfnerf
