#include "gfnerf/camera.h"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gfnerf/serial.h"
#include "gfnerf/util.h"

namespace gfnerf {

void Camera::validate() const {
  GF_CHECK(orthonormality_error(rotation) <= 1e-6, "camera rotation not orthonormal");
  GF_CHECK(fx > 0 && fy > 0, "focal lengths must be positive");
  GF_CHECK(width > 0 && height > 0, "image dims must be positive");
  GF_CHECK(cx > 0 && cx < width && cy > 0 && cy < height, "principal point out of bounds");
  GF_CHECK(position.finite(), "camera position not finite");
}

Ray generate_ray(const Camera& cam, double px, double py) {
  GF_CHECK(std::isfinite(px) && std::isfinite(py), "non-finite pixel coordinates");
  GF_CHECK(px >= 0 && px < cam.width && py >= 0 && py < cam.height, "pixel out of bounds");
  Vec3 cam_dir{(px + 0.5 - cam.cx) / cam.fx, (py + 0.5 - cam.cy) / cam.fy, 1.0};
  Ray ray;
  ray.origin = cam.position;
  ray.direction = normalized(cam.rotation * cam_dir);
  ray.t_near = 0.0;
  ray.t_far = std::numeric_limits<double>::infinity();
  return ray;
}

Ray generate_ray(const Camera& cam, double px, double py, const Aabb& scene_bounds) {
  Ray ray = generate_ray(cam, px, py);
  auto hit = ray_aabb_intersect(ray.origin, ray.direction, scene_bounds);
  if (hit) {
    ray.t_near = hit->first;
    ray.t_far = hit->second;
  } else {
    ray.t_near = ray.t_far = 0.0;  // degenerate: ray misses the scene
  }
  return ray;
}

std::optional<std::pair<double, double>> ray_aabb_intersect(const Vec3& origin, const Vec3& dir,
                                                            const Aabb& box, double t_min_limit) {
  double t0 = t_min_limit;
  double t1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    double o = origin[k], d = dir[k];
    if (d == 0.0) {
      if (o < box.min[k] || o > box.max[k]) return std::nullopt;
      continue;
    }
    double inv = 1.0 / d;
    double ta = (box.min[k] - o) * inv;
    double tb = (box.max[k] - o) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

std::string split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw std::runtime_error("gfnerf: unknown split tag '" + name + "'");
}

std::vector<Camera> load_cameras(const std::string& path) {
  nlohmann::json doc = nlohmann::json::parse(read_file_text(path));
  GF_CHECK(doc.is_array(), "camera file must be a JSON array: " + path);
  std::vector<Camera> cams;
  cams.reserve(doc.size());
  for (const auto& e : doc) {
    Camera c;
    const auto& r = e.at("rotation");
    GF_CHECK(r.size() == 9, "rotation must have 9 entries");
    for (int i = 0; i < 9; ++i) c.rotation.m[i] = r[i].get<double>();
    const auto& p = e.at("position");
    c.position = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
    c.fx = e.at("fx").get<double>();
    c.fy = e.at("fy").get<double>();
    c.cx = e.at("cx").get<double>();
    c.cy = e.at("cy").get<double>();
    c.width = e.at("width").get<int>();
    c.height = e.at("height").get<int>();
    c.split = split_from_name(e.at("split").get<std::string>());
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

void save_cameras(const std::string& path, const std::vector<Camera>& cams) {
  nlohmann::json doc = nlohmann::json::array();
  for (const Camera& c : cams) {
    nlohmann::json e;
    e["rotation"] = std::vector<double>(c.rotation.m, c.rotation.m + 9);
    e["position"] = {c.position.x, c.position.y, c.position.z};
    e["fx"] = c.fx;
    e["fy"] = c.fy;
    e["cx"] = c.cx;
    e["cy"] = c.cy;
    e["width"] = c.width;
    e["height"] = c.height;
    e["split"] = split_name(c.split);
    doc.push_back(e);
  }
  write_file_text(path, doc.dump(2) + "\n");
}

}  // namespace gfnerf
