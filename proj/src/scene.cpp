#include "gfnerf/scene.h"

#include <cmath>

#include <json.hpp>

#include "gfnerf/serial.h"
#include "gfnerf/util.h"

namespace gfnerf {

void BlobScene::validate() const {
  GF_CHECK(!blobs.empty(), "scene needs at least one blob");
  GF_CHECK(bounds.valid(), "scene bounds degenerate");
  for (const Blob& b : blobs) {
    GF_CHECK(bounds.contains(b.center), "blob center outside bounds");
    GF_CHECK(std::isfinite(b.peak_density) && b.peak_density >= 0, "peak_density invalid");
    GF_CHECK(b.radius > 0, "blob radius must be positive");
  }
}

FieldSample oracle_field(const BlobScene& scene, const Vec3& x) {
  FieldSample out;
  out.albedo = scene.background;
  if (!scene.bounds.contains(x)) return out;
  double sigma = 0.0;
  Rgb mix{0.f, 0.f, 0.f};
  for (const Blob& b : scene.blobs) {
    Vec3 d = x - b.center;
    double r2 = dot(d, d);
    double cutoff = 2.0 * b.radius;
    if (r2 >= cutoff * cutoff) continue;
    double s = b.radius * 0.5;  // Gaussian sigma = radius/2
    double contrib = b.peak_density * std::exp(-r2 / (2.0 * s * s));
    sigma += contrib;
    mix += b.albedo * float(contrib);
  }
  out.sigma = sigma;
  out.albedo = sigma > 0.0 ? mix * float(1.0 / sigma) : scene.background;
  return out;
}

ImageF render_field(const FieldFn& field, const Camera& cam, const Aabb& bounds, int steps_per_ray,
                    const Rgb& background, ImageF* alpha_out) {
  GF_CHECK(steps_per_ray >= 256, "reference rendering needs >= 256 steps per ray");
  ImageF img(cam.width, cam.height, 3);
  if (alpha_out) *alpha_out = ImageF(cam.width, cam.height, 1);
  run_sharded(size_t(cam.height), 16, default_thread_count(), [&](int, size_t y0, size_t y1) {
    for (size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        Ray ray = generate_ray(cam, double(x), double(y), bounds);
        if (ray.t_far <= ray.t_near) {
          img.set_rgb(x, int(y), background);
          continue;
        }
        const double delta = (ray.t_far - ray.t_near) / steps_per_ray;
        double optical_depth = 0.0;
        double transmittance = 1.0;
        double color[3] = {0, 0, 0};
        for (int i = 0; i < steps_per_ray; ++i) {
          double t = ray.t_near + (i + 0.5) * delta;
          FieldSample s = field(ray.point_at(t));
          double alpha = 1.0 - std::exp(-delta * s.sigma);
          double w = transmittance * alpha;
          color[0] += w * s.albedo.r;
          color[1] += w * s.albedo.g;
          color[2] += w * s.albedo.b;
          optical_depth += delta * s.sigma;
          transmittance = std::exp(-optical_depth);
        }
        color[0] += transmittance * background.r;
        color[1] += transmittance * background.g;
        color[2] += transmittance * background.b;
        img.set_rgb(x, int(y), {float(color[0]), float(color[1]), float(color[2])});
        if (alpha_out) alpha_out->at(x, int(y)) = float(1.0 - transmittance);
      }
    }
  });
  return img;
}

ImageF render_reference(const BlobScene& scene, const Camera& cam, int steps_per_ray,
                        ImageF* alpha_out) {
  auto field = [&scene](const Vec3& p) { return oracle_field(scene, p); };
  return render_field(field, cam, scene.bounds, steps_per_ray, scene.background, alpha_out);
}

void save_scene(const std::string& path, const BlobScene& scene) {
  nlohmann::json doc;
  doc["bounds"] = {{"min", {scene.bounds.min.x, scene.bounds.min.y, scene.bounds.min.z}},
                   {"max", {scene.bounds.max.x, scene.bounds.max.y, scene.bounds.max.z}}};
  doc["background"] = {scene.background.r, scene.background.g, scene.background.b};
  nlohmann::json blobs = nlohmann::json::array();
  for (const Blob& b : scene.blobs) {
    blobs.push_back({{"center", {b.center.x, b.center.y, b.center.z}},
                     {"radius", b.radius},
                     {"peak_density", b.peak_density},
                     {"albedo", {b.albedo.r, b.albedo.g, b.albedo.b}}});
  }
  doc["blobs"] = blobs;
  write_file_text(path, doc.dump(2) + "\n");
}

BlobScene load_scene(const std::string& path) {
  nlohmann::json doc = nlohmann::json::parse(read_file_text(path));
  BlobScene scene;
  const auto& bm = doc.at("bounds").at("min");
  const auto& bx = doc.at("bounds").at("max");
  scene.bounds.min = {bm[0].get<double>(), bm[1].get<double>(), bm[2].get<double>()};
  scene.bounds.max = {bx[0].get<double>(), bx[1].get<double>(), bx[2].get<double>()};
  const auto& bg = doc.at("background");
  scene.background = {bg[0].get<float>(), bg[1].get<float>(), bg[2].get<float>()};
  for (const auto& e : doc.at("blobs")) {
    Blob b;
    const auto& c = e.at("center");
    b.center = {c[0].get<double>(), c[1].get<double>(), c[2].get<double>()};
    b.radius = e.at("radius").get<double>();
    b.peak_density = e.at("peak_density").get<double>();
    const auto& a = e.at("albedo");
    b.albedo = {a[0].get<float>(), a[1].get<float>(), a[2].get<float>()};
    scene.blobs.push_back(b);
  }
  scene.validate();
  return scene;
}

namespace {

Camera look_at_camera(const Vec3& position, const Vec3& target, int image_size, Split split) {
  Vec3 forward = normalized(target - position);
  Vec3 world_up{0, 1, 0};
  if (std::abs(dot(forward, world_up)) > 0.999) world_up = {1, 0, 0};
  Vec3 right = normalized(cross(world_up, forward));
  Vec3 up = cross(forward, right);
  Camera cam;
  cam.rotation = Mat3::from_cols(right, up, forward);
  cam.position = position;
  cam.width = cam.height = image_size;
  // ~50 degree horizontal field of view
  cam.fx = cam.fy = 0.5 * image_size / std::tan(25.0 * M_PI / 180.0);
  cam.cx = cam.cy = image_size * 0.5;
  cam.split = split;
  cam.validate();
  return cam;
}

Rgb random_albedo(Rng& rng) {
  // saturated-ish colors so hash collisions visibly blur details
  float h = float(rng.uniform(0.0, 6.0));
  float v = float(rng.uniform(0.45, 1.0));
  float s = float(rng.uniform(0.55, 1.0));
  float c = v * s;
  float xx = c * (1.f - std::abs(std::fmod(h, 2.f) - 1.f));
  float m = v - c;
  float rgb[3] = {0, 0, 0};
  switch (int(h) % 6) {
    case 0: rgb[0] = c; rgb[1] = xx; break;
    case 1: rgb[0] = xx; rgb[1] = c; break;
    case 2: rgb[1] = c; rgb[2] = xx; break;
    case 3: rgb[1] = xx; rgb[2] = c; break;
    case 4: rgb[0] = xx; rgb[2] = c; break;
    default: rgb[0] = c; rgb[2] = xx; break;
  }
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

void add_district_blobs(BlobScene& scene, const Vec3& center, int count, Rng& rng) {
  for (int i = 0; i < count; ++i) {
    Blob b;
    for (;;) {
      Vec3 offset{rng.normal() * 0.20, rng.normal() * 0.20, rng.normal() * 0.20};
      if (norm(offset) <= 0.40) {
        b.center = center + offset;
        break;
      }
    }
    b.radius = rng.uniform(0.05, 0.14);
    b.peak_density = rng.uniform(3.0, 9.0);
    b.albedo = random_albedo(rng);
    scene.blobs.push_back(b);
  }
}

void add_orbit_cameras(std::vector<Camera>& cams, const Vec3& target, int count, double radius,
                       double phase, int image_size, Split split, Rng& rng) {
  for (int i = 0; i < count; ++i) {
    double az = phase + 2.0 * M_PI * i / count;
    double el = (20.0 + 25.0 * rng.uniform()) * M_PI / 180.0;
    if (i % 2 == 1) el = -el * 0.4;  // some low views
    Vec3 pos = target + Vec3{radius * std::cos(az) * std::cos(el), radius * std::sin(el),
                             radius * std::sin(az) * std::cos(el)};
    cams.push_back(look_at_camera(pos, target, image_size, split));
  }
}

}  // namespace

GeneratedScene make_scene(const SceneGenParams& params) {
  GF_CHECK(params.layout == "two-district" || params.layout == "single",
           "unknown scene layout: " + params.layout);
  Rng rng(params.seed);
  GeneratedScene out;
  out.scene.bounds = {{-1, -1, -1}, {1, 1, 1}};
  out.scene.background = {1.f, 1.f, 1.f};

  if (params.layout == "single") {
    Vec3 center{0, 0, 0};
    add_district_blobs(out.scene, center, params.blobs_per_district, rng);
    add_orbit_cameras(out.cameras, center, params.train_per_district, 1.55, 0.0,
                      params.image_size, Split::kTrain, rng);
    add_orbit_cameras(out.cameras, center, params.test_per_district, 1.55, 0.37,
                      params.image_size, Split::kTest, rng);
  } else {
    Vec3 a{-0.55, 0, 0}, b{0.55, 0, 0};
    add_district_blobs(out.scene, a, params.blobs_per_district, rng);
    add_district_blobs(out.scene, b, params.blobs_per_district, rng);
    add_orbit_cameras(out.cameras, a, params.train_per_district, 1.35, 0.0, params.image_size,
                      Split::kTrain, rng);
    add_orbit_cameras(out.cameras, b, params.train_per_district, 1.35, 0.11, params.image_size,
                      Split::kTrain, rng);
    add_orbit_cameras(out.cameras, a, params.test_per_district, 1.35, 0.47, params.image_size,
                      Split::kTest, rng);
    add_orbit_cameras(out.cameras, b, params.test_per_district, 1.35, 0.61, params.image_size,
                      Split::kTest, rng);
    // Boundary test views near the plane x = 0 see both districts; used for
    // cross-block consistency measurements.
    for (int i = 0; i < params.boundary_test_cameras; ++i) {
      double az = M_PI * 0.5 + (i - (params.boundary_test_cameras - 1) * 0.5) * 0.35;
      Vec3 pos{0.0, 0.55 + 0.15 * i, 0.0};
      pos.x += 0.02 * std::cos(az);
      pos.z += 1.75 * std::sin(az) * (i % 2 == 0 ? 1.0 : -1.0);
      out.cameras.push_back(look_at_camera(pos, {0, 0, 0}, params.image_size, Split::kTest));
    }
  }
  out.scene.validate();
  return out;
}

}  // namespace gfnerf
