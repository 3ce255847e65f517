#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gfnerf/vec.h"

namespace gfnerf {

enum class Split { kTrain, kTest };

// Pinhole camera. rotation maps camera-frame vectors into world frame.
struct Camera {
  Mat3 rotation;
  Vec3 position;
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
  Split split = Split::kTrain;

  void validate() const;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
  double t_near = 0.0;
  double t_far = 0.0;

  Vec3 point_at(double t) const { return origin + direction * t; }
};

// Pixel-center convention: the ray for integer pixel (px,py) passes through
// (px+0.5, py+0.5). Unclipped variant leaves t in [0, +inf).
Ray generate_ray(const Camera& cam, double px, double py);
Ray generate_ray(const Camera& cam, double px, double py, const Aabb& scene_bounds);

// Slab test. Returns (t_enter, t_exit) with t_enter <= t_exit, intersected
// with [t_min_limit, +inf); nullopt on miss.
std::optional<std::pair<double, double>> ray_aabb_intersect(const Vec3& origin, const Vec3& dir,
                                                            const Aabb& box,
                                                            double t_min_limit = 0.0);

std::string split_name(Split s);
Split split_from_name(const std::string& name);

// Camera sets are stored as a bare JSON array of per-camera objects.
std::vector<Camera> load_cameras(const std::string& path);
void save_cameras(const std::string& path, const std::vector<Camera>& cams);

}  // namespace gfnerf
