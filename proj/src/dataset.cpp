#include "gfnerf/dataset.h"

#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "gfnerf/serial.h"
#include "gfnerf/util.h"

namespace gfnerf {

std::string image_basename(int camera_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "cam_%04d", camera_id);
  return buf;
}

void write_dataset(const std::string& dir, const GeneratedScene& gen, int reference_steps) {
  namespace fs = std::filesystem;
  fs::create_directories(dir + "/images");
  save_scene(dir + "/scene.json", gen.scene);
  save_cameras(dir + "/cameras.json", gen.cameras);
  nlohmann::json bounds = {
      {"min", {gen.scene.bounds.min.x, gen.scene.bounds.min.y, gen.scene.bounds.min.z}},
      {"max", {gen.scene.bounds.max.x, gen.scene.bounds.max.y, gen.scene.bounds.max.z}}};
  write_file_text(dir + "/bounds.json", bounds.dump(2) + "\n");

  for (size_t i = 0; i < gen.cameras.size(); ++i) {
    ImageF alpha;
    ImageF img = render_reference(gen.scene, gen.cameras[i], reference_steps, &alpha);
    const std::string base = dir + "/images/" + image_basename(int(i));
    write_raw(base + ".raw", img);
    write_png(base + ".png", img);
    write_raw(base + "_alpha.raw", alpha);
  }
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.cameras = load_cameras(dir + "/cameras.json");
  nlohmann::json bounds = nlohmann::json::parse(read_file_text(dir + "/bounds.json"));
  const auto& bm = bounds.at("min");
  const auto& bx = bounds.at("max");
  ds.bounds.min = {bm[0].get<double>(), bm[1].get<double>(), bm[2].get<double>()};
  ds.bounds.max = {bx[0].get<double>(), bx[1].get<double>(), bx[2].get<double>()};
  GF_CHECK(ds.bounds.valid(), "invalid dataset bounds");

  ds.images.reserve(ds.cameras.size());
  ds.has_alpha = true;
  for (size_t i = 0; i < ds.cameras.size(); ++i) {
    ImageF img = read_raw(dir + "/images/" + image_basename(int(i)) + ".raw");
    GF_CHECK(img.width == ds.cameras[i].width && img.height == ds.cameras[i].height,
             "image dims disagree with camera " + std::to_string(i));
    ds.images.push_back(std::move(img));
    const std::string alpha_path = dir + "/images/" + image_basename(int(i)) + "_alpha.raw";
    if (ds.has_alpha && std::filesystem::exists(alpha_path)) {
      ds.alphas.push_back(read_raw(alpha_path));
    } else {
      ds.has_alpha = false;
      ds.alphas.clear();
    }
    if (ds.cameras[i].split == Split::kTrain) ds.train_ids.push_back(int(i));
    else ds.test_ids.push_back(int(i));
  }
  GF_CHECK(!ds.train_ids.empty(), "dataset has no training cameras");
  return ds;
}

}  // namespace gfnerf
