#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gfnerf {

// Geometry runs in double precision; trainable-parameter math is float.
struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double  operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) { return v / norm(v); }
inline Vec3 cwise_min(const Vec3& a, const Vec3& b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline Vec3 cwise_max(const Vec3& a, const Vec3& b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

// 3x3 row-major matrix, used for camera rotations (world <- camera).
struct Mat3 {
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
    Mat3 r;
    r.m[0] = r0.x; r.m[1] = r0.y; r.m[2] = r0.z;
    r.m[3] = r1.x; r.m[4] = r1.y; r.m[5] = r1.z;
    r.m[6] = r2.x; r.m[7] = r2.y; r.m[8] = r2.z;
    return r;
  }
  static Mat3 from_cols(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
    Mat3 r;
    r.m[0] = c0.x; r.m[1] = c1.x; r.m[2] = c2.x;
    r.m[3] = c0.y; r.m[4] = c1.y; r.m[5] = c2.y;
    r.m[6] = c0.z; r.m[7] = c1.z; r.m[8] = c2.z;
    return r;
  }

  double  operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i * 3 + j] = m[j * 3 + i];
    return r;
  }
};

inline double orthonormality_error(const Mat3& r) {
  // max |(R^T R - I)_ij|
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r.m[k * 3 + i] * r.m[k * 3 + j];
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

struct Aabb {
  Vec3 min, max;

  bool valid() const { return min.x < max.x && min.y < max.y && min.z < max.z; }
  Vec3 center() const { return (min + max) * 0.5; }
  Vec3 extent() const { return max - min; }
  double diagonal() const { return norm(max - min); }
  double volume() const { Vec3 e = extent(); return e.x * e.y * e.z; }
  bool contains(const Vec3& p, double slack = 0.0) const {
    return p.x >= min.x - slack && p.x <= max.x + slack && p.y >= min.y - slack &&
           p.y <= max.y + slack && p.z >= min.z - slack && p.z <= max.z + slack;
  }
};

// Linear RGB color in [0,1], the unit every image and radiance value uses.
struct Rgb {
  float r = 0.f, g = 0.f, b = 0.f;

  float  operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }
  float& operator[](int i) { return i == 0 ? r : (i == 1 ? g : b); }
  Rgb operator+(const Rgb& o) const { return {r + o.r, g + o.g, b + o.b}; }
  Rgb operator-(const Rgb& o) const { return {r - o.r, g - o.g, b - o.b}; }
  Rgb operator*(float s) const { return {r * s, g * s, b * s}; }
  Rgb& operator+=(const Rgb& o) { r += o.r; g += o.g; b += o.b; return *this; }
};

}  // namespace gfnerf
