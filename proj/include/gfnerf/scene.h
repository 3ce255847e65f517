#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gfnerf/camera.h"
#include "gfnerf/image.h"
#include "gfnerf/vec.h"

namespace gfnerf {

// Analytic ground truth: a sum of truncated Gaussian density blobs.
struct Blob {
  Vec3 center;
  double radius = 0.1;        // support is hard-truncated at 2*radius
  double peak_density = 1.0;  // sigma at the center
  Rgb albedo;
};

struct BlobScene {
  std::vector<Blob> blobs;
  Rgb background{1.f, 1.f, 1.f};
  Aabb bounds;

  void validate() const;
};

struct FieldSample {
  double sigma = 0.0;
  Rgb albedo;
};

// sigma(x) = sum_b peak_b * exp(-|x-c_b|^2 / (2*(r_b/2)^2)), zero beyond
// 2*r_b; albedo is the density-weighted mix (background where sigma = 0).
FieldSample oracle_field(const BlobScene& scene, const Vec3& x);

// Dense uniform marching through any density/albedo field: per pixel,
// composites (sigma, albedo) samples and adds background weighted by the
// leftover transmittance. Reference implementation for validation.
// alpha_out, when given, receives the per-pixel accumulated opacity
// (1 - final transmittance) as a single-channel image.
using FieldFn = std::function<FieldSample(const Vec3&)>;
ImageF render_field(const FieldFn& field, const Camera& cam, const Aabb& bounds, int steps_per_ray,
                    const Rgb& background, ImageF* alpha_out = nullptr);

ImageF render_reference(const BlobScene& scene, const Camera& cam, int steps_per_ray,
                        ImageF* alpha_out = nullptr);

void save_scene(const std::string& path, const BlobScene& scene);
BlobScene load_scene(const std::string& path);

// Synthetic dataset layouts. "two-district" puts two separated blob
// clusters in the box with cameras orbiting each plus a few shared
// boundary views; it exists to exercise block partitioning and
// cross-block consistency checks.
struct SceneGenParams {
  std::string layout = "two-district";  // or "single"
  int blobs_per_district = 22;
  int train_per_district = 16;
  int test_per_district = 3;
  int boundary_test_cameras = 3;  // two-district only
  int image_size = 64;
  int reference_steps = 512;
  uint64_t seed = 1;
};

struct GeneratedScene {
  BlobScene scene;
  std::vector<Camera> cameras;
};

GeneratedScene make_scene(const SceneGenParams& params);

}  // namespace gfnerf
