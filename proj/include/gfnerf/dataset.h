#pragma once

#include <string>
#include <vector>

#include "gfnerf/camera.h"
#include "gfnerf/image.h"
#include "gfnerf/scene.h"

namespace gfnerf {

// A generated dataset directory:
//   scene.json    analytic ground-truth description (oracle only)
//   bounds.json   scene bounding box used as the octree root
//   cameras.json  camera array with train/test split tags
//   images/cam_XXXX.png + .raw   reference renders per camera
//   images/cam_XXXX_alpha.raw    per-pixel ground-truth opacity; enables
//                                random-background training augmentation
struct Dataset {
  std::vector<Camera> cameras;
  std::vector<ImageF> images;  // indexed like cameras
  std::vector<ImageF> alphas;  // single channel; empty when absent
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  Aabb bounds;
  bool has_alpha = false;

  const ImageF& image(int id) const { return images[size_t(id)]; }
  const ImageF& alpha(int id) const { return alphas[size_t(id)]; }
};

std::string image_basename(int camera_id);

void write_dataset(const std::string& dir, const GeneratedScene& gen, int reference_steps);
Dataset load_dataset(const std::string& dir);

}  // namespace gfnerf
