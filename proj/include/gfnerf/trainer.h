#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfnerf/dataset.h"
#include "gfnerf/decoder.h"
#include "gfnerf/encoder.h"
#include "gfnerf/metrics.h"
#include "gfnerf/octree.h"
#include "gfnerf/partition.h"
#include "gfnerf/renderer.h"
#include "gfnerf/sampler.h"

namespace gfnerf {

struct TrainConfig {
  int global_steps = 5000;
  int focal_steps_per_block = 3000;
  int batch_rays = 1024;
  int max_points_per_ray = 1024;
  double lr_global_start = 1e-2, lr_global_end = 1e-4;
  double lr_focal_start = 5e-3, lr_focal_end = 5e-5;
  double charbonnier_epsilon = 1e-6;
  double weighted_fraction = 0.3;
  int k_blocks = 2;
  int refine_every = 512;
  // First refine fires on the refine_every cadence only after this many
  // steps; the occupancy field of the first few hundred steps is a
  // transient. Subdivision additionally stops after subdivide_until_step:
  // splitting a node re-anchors its hash functions (features there start
  // over), which is cheap early and destructive late. Pruning continues on
  // the cadence for the whole global stage.
  int refine_warmup_steps = 512;
  int subdivide_until_step = 2048;
  int error_map_downsample = 4;
  int error_map_refresh = 10000;

  int levels = 8;
  int feats_per_level = 2;
  int base_resolution = 16;
  int max_resolution = 256;
  int log2_table_len = 15;

  int mlp_hidden = 32;
  int mlp_hidden_layers = 2;
  int geo_feats = 15;

  // Linear learning-rate ramp over the first steps of each stage; the
  // full-rate exponential schedule takes over afterwards. Without it the
  // density head outruns the (initially zero-ish) hash features and the
  // field collapses to transparent before geometry can form.
  int lr_warmup_steps = 256;

  int octree_initial_depth = 3;
  int octree_max_depth = 5;
  double prune_threshold = 0.01;
  double subdivide_threshold = 2.0;
  double step_scale = 1.0;
  double early_stop_optical_depth = 12.0;
  // Sparsity prior: adds density_decay * sum(sigma_i * delta_i) per ray to
  // the loss. The color term cannot see background-colored or occluded
  // density (hash collisions keep sprinkling some everywhere), so without a
  // consistent downward pull the octree's occupancy never drops below the
  // prune threshold in genuinely empty space.
  double density_decay = 2e-4;

  Rgb background{1.f, 1.f, 1.f};
  // Composite each training ray onto a random background color (the ground
  // truth is recomposited with its alpha onto the same color). A constant
  // background leaves background-colored density invisible to the loss, so
  // phantom fog accumulates in empty space and the octree never prunes it.
  // Needs the dataset's alpha sidecars; evaluation always uses `background`.
  bool random_background = true;
  bool global_guided = true;  // ablation flag: false trains focal encoders from scratch
  uint64_t seed = 1;
  bool deterministic = false;
  int threads = 0;      // 0 = hardware concurrency
  int grad_shards = 4;  // fixed shard count keeps gradient sums bit-stable

  EncoderConfig encoder_config() const;
  DecoderInit decoder_init() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  // Flat "key = value" text file, '#' comments.
  static TrainConfig from_key_value_file(const std::string& path);
  std::string hash() const;
  int thread_count() const;
};

// Charbonnier loss sqrt((c_out-c_gt)^2 + eps) averaged over channels, with
// its exact gradient wrt c_out.
struct LossGrad {
  double loss = 0.0;
  double grad[3] = {0, 0, 0};
};
LossGrad charbonnier_loss(const Rgb& c_out, const Rgb& c_gt, double epsilon);

// Exponential decay: start * (end/start)^(step/total).
double lr_at(int step, int total, double start, double end);

// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-15) with bias correction.
// A tensor step with any non-finite gradient is skipped and counted.
struct AdamState {
  std::vector<float> m, v;
  int64_t t = 0;
  int64_t skipped = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;

  explicit AdamState(size_t n = 0) : m(n, 0.f), v(n, 0.f) {}
  void reset() {
    std::fill(m.begin(), m.end(), 0.f);
    std::fill(v.begin(), v.end(), 0.f);
    t = 0;
    skipped = 0;
  }
};
void adam_step(AdamState& state, std::span<float> params, std::span<const float> grads, double lr);

// Run-directory artifact names (the checkpoint contract).
struct RunPaths {
  std::string dir;
  std::string octree() const { return dir + "/octree.bin"; }
  std::string encoder_global() const { return dir + "/encoder_global.bin"; }
  std::string decoder() const { return dir + "/decoder.bin"; }
  std::string encoder_focal(int block) const {
    return dir + "/encoder_focal_" + std::to_string(block) + ".bin";
  }
  std::string blocks() const { return dir + "/blocks.json"; }
  std::string config() const { return dir + "/config.json"; }
  std::string metrics() const { return dir + "/metrics.json"; }
  std::string renders() const { return dir + "/renders"; }
};

struct GlobalTrainResult {
  std::vector<double> losses;
  SpaceOctree::RefineStats total_refine;
};

// Global stage: uniform pixel batches over all training images, octree
// occupancy updates with periodic refinement, Adam on the global table and
// decoder weights. Writes octree.bin / encoder_global.bin / decoder.bin /
// blocks.json / config.json into run_dir.
GlobalTrainResult train_global(const Dataset& ds, const TrainConfig& cfg,
                               const std::string& run_dir);

struct FocalTrainResult {
  std::vector<double> losses;
};

// Focal stage for one block: octree, global encoder and decoder are loaded
// frozen; a zero-initialized focal encoder learns the residual under hybrid
// error-weighted pixel sampling restricted to the block's images. Fresh
// Adam state. Writes encoder_focal_<id>.bin.
FocalTrainResult train_focal(const Dataset& ds, const std::string& run_dir, int block_id);

// Renders every test camera through its nearest block and reports
// PSNR/SSIM. global_only ignores focal encoders.
MetricReport evaluate(const Dataset& ds, const std::string& run_dir, bool global_only = false,
                      bool write_outputs = true);

// Loaded read-only model state shared by eval/render/error-map paths.
struct LoadedRun {
  TrainConfig cfg;
  SpaceOctree octree;
  HashEncoder global_enc;
  RadianceDecoder decoder;
  BlockAssignment assignment;
  std::vector<int> block_camera_ids;
  std::vector<HashEncoder> focal_encs;  // indexed by block, may be empty
  std::vector<bool> focal_present;

  FieldModel model(int block_id /* -1 = global only */) const;
};
LoadedRun load_run(const std::string& run_dir, bool need_focal);

}  // namespace gfnerf
