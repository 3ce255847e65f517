// gfnerf command line: scene generation, two-stage training, rendering,
// evaluation and error-map inspection.

#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "gfnerf/dataset.h"
#include "gfnerf/sampler.h"
#include "gfnerf/serial.h"
#include "gfnerf/trainer.h"

using namespace gfnerf;

namespace {

struct CommonOpts {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "flat key=value config file");
  cmd->add_option("--seed", opts.seed, "RNG seed")->each([&](const std::string&) {
    opts.seed_set = true;
  });
  cmd->add_flag("--deterministic", opts.deterministic,
                "force bit-reproducible runs (serial RNG stream, sharded gradient merge)");
}

TrainConfig resolve_config(const CommonOpts& opts) {
  TrainConfig cfg;
  if (!opts.config_path.empty()) cfg = TrainConfig::from_key_value_file(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  if (opts.deterministic) cfg.deterministic = true;
  return cfg;
}

int cmd_gen_scene(const std::string& out_dir, const SceneGenParams& params) {
  GeneratedScene gen = make_scene(params);
  write_dataset(out_dir, gen, params.reference_steps);
  std::fprintf(stderr, "wrote %zu cameras, %zu blobs -> %s\n", gen.cameras.size(),
               gen.scene.blobs.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GF-NeRF two-stage radiance field trainer"};
  app.require_subcommand(1);

  // gen-scene
  auto* gen = app.add_subcommand("gen-scene", "generate a synthetic blob dataset");
  std::string gen_out = "data";
  SceneGenParams gen_params;
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--layout", gen_params.layout, "two-district | single");
  gen->add_option("--blobs", gen_params.blobs_per_district, "blobs per district");
  gen->add_option("--train-cameras", gen_params.train_per_district, "train cameras per district");
  gen->add_option("--test-cameras", gen_params.test_per_district, "test cameras per district");
  gen->add_option("--boundary-cameras", gen_params.boundary_test_cameras,
                  "shared boundary test cameras (two-district)");
  gen->add_option("--size", gen_params.image_size, "image width/height");
  gen->add_option("--reference-steps", gen_params.reference_steps,
                  "steps per ray for the reference renderer");
  gen->add_option("--seed", gen_params.seed, "scene RNG seed");

  // train-global
  auto* tg = app.add_subcommand("train-global", "global stage over the whole dataset");
  std::string tg_data, tg_run;
  CommonOpts tg_opts;
  tg->add_option("--data", tg_data, "dataset directory")->required();
  tg->add_option("--run", tg_run, "run (checkpoint) directory")->required();
  add_common(tg, tg_opts);

  // train-focal
  auto* tf = app.add_subcommand("train-focal", "focal stage for one block or all blocks");
  std::string tf_data, tf_run;
  int tf_block = -1;
  bool tf_all = false;
  tf->add_option("--data", tf_data, "dataset directory")->required();
  tf->add_option("--run", tf_run, "run directory holding the global checkpoint")->required();
  tf->add_option("--block", tf_block, "block id to train");
  tf->add_flag("--all", tf_all, "train every block sequentially");

  // render
  auto* rd = app.add_subcommand("render", "render one camera from a trained run");
  std::string rd_data, rd_run, rd_out = "render_out";
  int rd_camera = 0;
  bool rd_global_only = false;
  rd->add_option("--data", rd_data, "dataset directory")->required();
  rd->add_option("--run", rd_run, "run directory")->required();
  rd->add_option("--camera", rd_camera, "camera id (index in cameras.json)")->required();
  rd->add_option("--out", rd_out, "output path prefix");
  rd->add_flag("--global-only", rd_global_only, "ignore focal encoders");

  // eval
  auto* ev = app.add_subcommand("eval", "render all test cameras and write metrics.json");
  std::string ev_data, ev_run;
  bool ev_global_only = false;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--run", ev_run, "run directory")->required();
  ev->add_flag("--global-only", ev_global_only, "evaluate the global stage only");

  // probe-field (diagnostics)
  auto* pf = app.add_subcommand("probe-field",
                                "print density-field and occupancy statistics per octree leaf");
  std::string pf_data, pf_run;
  pf->add_option("--data", pf_data)->required();
  pf->add_option("--run", pf_run)->required();

  // error-maps
  auto* em = app.add_subcommand("error-maps", "dump per-image error maps as PNG + raw");
  std::string em_data, em_run, em_out;
  em->add_option("--data", em_data, "dataset directory")->required();
  em->add_option("--run", em_run, "run directory")->required();
  em->add_option("--out", em_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_scene(gen_out, gen_params);

    if (tg->parsed()) {
      Dataset ds = load_dataset(tg_data);
      TrainConfig cfg = resolve_config(tg_opts);
      train_global(ds, cfg, tg_run);
      return 0;
    }

    if (tf->parsed()) {
      GF_CHECK(tf_all || tf_block >= 0, "pass --block <id> or --all");
      Dataset ds = load_dataset(tf_data);
      if (tf_all) {
        LoadedRun run = load_run(tf_run, false);
        for (int b = 0; b < run.assignment.k; ++b) train_focal(ds, tf_run, b);
      } else {
        train_focal(ds, tf_run, tf_block);
      }
      return 0;
    }

    if (rd->parsed()) {
      Dataset ds = load_dataset(rd_data);
      LoadedRun run = load_run(rd_run, false);
      GF_CHECK(rd_camera >= 0 && rd_camera < int(ds.cameras.size()), "camera id out of range");
      const Camera& cam = ds.cameras[size_t(rd_camera)];
      int block = rd_global_only ? -1 : nearest_block(run.assignment, cam.position);
      if (block >= 0 && !run.focal_present[size_t(block)]) block = -1;
      RenderedView view = render_image(run.model(block), cam, 1);
      write_png(rd_out + ".png", view.color);
      write_raw(rd_out + ".raw", view.color);
      write_raw(rd_out + "_depth.raw", view.depth);
      write_colormapped_png(rd_out + "_depth.png", view.depth.data, view.depth.width,
                            view.depth.height);
      std::fprintf(stderr, "rendered camera %d (block %d) -> %s.png\n", rd_camera, block,
                   rd_out.c_str());
      return 0;
    }

    if (ev->parsed()) {
      Dataset ds = load_dataset(ev_data);
      MetricReport report = evaluate(ds, ev_run, ev_global_only);
      std::fprintf(stderr, "mean PSNR %.3f dB, mean SSIM %.4f over %zu test views\n",
                   report.mean_psnr, report.mean_ssim, report.images.size());
      return 0;
    }

    if (pf->parsed()) {
      Dataset ds = load_dataset(pf_data);
      LoadedRun run = load_run(pf_run, false);
      BlobScene scene = load_scene(pf_data + "/scene.json");
      FeatureVec feat(size_t(run.cfg.encoder_config().feature_dim()));
      DecodeWorkspace<float> ws;
      struct Bucket {
        std::vector<float> max_sigma, ema;
        int live = 0, dead = 0;
      } inside, outside;
      for (size_t i = 0; i < run.octree.node_count(); ++i) {
        const OctreeNode& n = run.octree.node(int32_t(i));
        if (!n.is_leaf) continue;
        bool hit = false;
        for (const Blob& b : scene.blobs) {
          Vec3 cl = cwise_max(n.aabb.min, cwise_min(b.center, n.aabb.max));
          if (norm(cl - b.center) <= 2.0 * b.radius) { hit = true; break; }
        }
        Bucket& bucket = hit ? inside : outside;
        (n.dead ? bucket.dead : bucket.live)++;
        bucket.ema.push_back(n.occupancy_ema);
        float mx = 0.f;
        for (int gz = 0; gz < 3; ++gz)
          for (int gy = 0; gy < 3; ++gy)
            for (int gx = 0; gx < 3; ++gx) {
              Vec3 p{n.aabb.min.x + (gx + 0.5) / 3.0 * n.aabb.extent().x,
                     n.aabb.min.y + (gy + 0.5) / 3.0 * n.aabb.extent().y,
                     n.aabb.min.z + (gz + 0.5) / 3.0 * n.aabb.extent().z};
              encode(run.global_enc, p, n, feat);
              auto d = decode<float>(run.decoder, feat, {0, 0, 1}, ws);
              mx = std::max(mx, d.sigma);
            }
        bucket.max_sigma.push_back(mx);
      }
      auto pct = [](std::vector<float>& v, double q) {
        if (v.empty()) return 0.f;
        std::sort(v.begin(), v.end());
        return v[size_t(q * (v.size() - 1))];
      };
      for (auto& [name, b] : {std::pair<const char*, Bucket&>{"outside", outside},
                              {"inside", inside}}) {
        std::printf("%s: %d live, %d dead\n", name, b.live, b.dead);
        std::printf("  field max-sigma p50 %.4f p90 %.4f p99 %.4f max %.4f\n",
                    pct(b.max_sigma, 0.5), pct(b.max_sigma, 0.9), pct(b.max_sigma, 0.99),
                    pct(b.max_sigma, 1.0));
        std::printf("  ema        p50 %.4f p90 %.4f p99 %.4f max %.4f\n", pct(b.ema, 0.5),
                    pct(b.ema, 0.9), pct(b.ema, 0.99), pct(b.ema, 1.0));
      }
      return 0;
    }

    if (em->parsed()) {
      Dataset ds = load_dataset(em_data);
      LoadedRun run = load_run(em_run, false);
      ErrorMapSet errs = compute_error_maps(run.model(-1), ds.cameras, ds.images, ds.train_ids,
                                            run.cfg.error_map_downsample);
      save_error_maps(em_out, errs);
      std::fprintf(stderr, "wrote %zu error maps -> %s\n", errs.maps.size(), em_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
