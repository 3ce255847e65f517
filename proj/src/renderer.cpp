#include "gfnerf/renderer.h"

#include "gfnerf/util.h"

namespace gfnerf {

RayEval eval_ray(const FieldModel& model, const Ray& ray, std::vector<RaySample>& scratch) {
  RayEval out;
  out.color = model.background;
  out.depth = float(ray.t_far);
  if (ray.t_far <= ray.t_near) return out;

  scratch.clear();
  model.octree->sample_ray(ray, model.step_scale, model.max_points_per_ray, scratch);
  if (scratch.empty()) return out;

  const HashEncoder& enc0 = model.guided ? *model.global_enc : *model.focal_enc;
  const int fd = enc0.config.feature_dim();
  thread_local FeatureVec feature;
  thread_local EncodeCorners corners;
  thread_local DecodeWorkspace<float> dws;
  feature.resize(size_t(fd));

  float color[3] = {0, 0, 0};
  float depth_acc = 0.f, opacity = 0.f;
  float optical_depth = 0.f;
  size_t used = 0;
  for (const RaySample& s : scratch) {
    if (model.early_stop_optical_depth > 0 && optical_depth > float(model.early_stop_optical_depth))
      break;
    ++used;
    const OctreeNode& node = model.octree->node(s.node_id);
    compute_corners(enc0.config, node, s.position, corners);
    if (model.guided && model.focal_enc)
      encode_fused_with_corners(*model.global_enc, *model.focal_enc, corners, feature);
    else
      encode_with_corners(enc0, corners, feature);
    DecodeResult<float> dres = decode<float>(*model.decoder, feature, ray.direction, dws);
    const float trans = std::exp(-optical_depth);
    const float alpha = float(-std::expm1(-s.delta * dres.sigma));
    const float w = trans * alpha;
    color[0] += w * dres.rgb[0];
    color[1] += w * dres.rgb[1];
    color[2] += w * dres.rgb[2];
    depth_acc += w * float(s.t);
    opacity += w;
    optical_depth += float(s.delta) * dres.sigma;
  }
  const float t_final = std::exp(-optical_depth);
  out.color = {color[0] + t_final * model.background.r, color[1] + t_final * model.background.g,
               color[2] + t_final * model.background.b};
  out.opacity = opacity;
  out.depth = opacity > 0.f ? depth_acc / std::max(opacity, 1e-6f) : float(ray.t_far);
  out.n_samples = int(used);
  return out;
}

RenderedView render_image(const FieldModel& model, const Camera& camera, int downsample) {
  GF_CHECK(downsample >= 1 && camera.width % downsample == 0 && camera.height % downsample == 0,
           "downsample must divide the image dimensions");
  const int w = camera.width / downsample, h = camera.height / downsample;
  RenderedView view{ImageF(w, h, 3), ImageF(w, h, 1)};
  const Aabb& bounds = model.octree->root_aabb();
  run_sharded(size_t(h), 16, default_thread_count(), [&](int, size_t y0, size_t y1) {
    std::vector<RaySample> scratch;
    for (size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < w; ++x) {
        // center of the downsample x downsample pixel block
        double px = (x + 0.5) * downsample - 0.5;
        double py = (double(y) + 0.5) * downsample - 0.5;
        Ray ray = generate_ray(camera, px, py, bounds);
        RayEval e = eval_ray(model, ray, scratch);
        view.color.set_rgb(x, int(y), e.color);
        view.depth.at(x, int(y)) = e.depth;
      }
    }
  });
  return view;
}

}  // namespace gfnerf
