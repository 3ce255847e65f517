#include "gfnerf/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <unordered_map>

#include <json.hpp>

#include "gfnerf/serial.h"
#include "gfnerf/util.h"

namespace gfnerf {

EncoderConfig TrainConfig::encoder_config() const {
  EncoderConfig e;
  e.levels = levels;
  e.feats_per_level = feats_per_level;
  e.base_resolution = base_resolution;
  e.max_resolution = max_resolution;
  e.table_len = 1u << log2_table_len;
  return e;
}

DecoderInit TrainConfig::decoder_init() const {
  DecoderInit d;
  d.feature_dim = levels * feats_per_level;
  d.hidden = mlp_hidden;
  d.hidden_layers = mlp_hidden_layers;
  d.geo_feats = geo_feats;
  d.seed = seed;
  return d;
}

int TrainConfig::thread_count() const {
  return threads > 0 ? threads : default_thread_count();
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["global_steps"] = global_steps;
  j["focal_steps_per_block"] = focal_steps_per_block;
  j["batch_rays"] = batch_rays;
  j["max_points_per_ray"] = max_points_per_ray;
  j["lr_global_start"] = lr_global_start;
  j["lr_global_end"] = lr_global_end;
  j["lr_focal_start"] = lr_focal_start;
  j["lr_focal_end"] = lr_focal_end;
  j["charbonnier_epsilon"] = charbonnier_epsilon;
  j["weighted_fraction"] = weighted_fraction;
  j["k_blocks"] = k_blocks;
  j["refine_every"] = refine_every;
  j["refine_warmup_steps"] = refine_warmup_steps;
  j["subdivide_until_step"] = subdivide_until_step;
  j["error_map_downsample"] = error_map_downsample;
  j["error_map_refresh"] = error_map_refresh;
  j["levels"] = levels;
  j["feats_per_level"] = feats_per_level;
  j["base_resolution"] = base_resolution;
  j["max_resolution"] = max_resolution;
  j["log2_table_len"] = log2_table_len;
  j["mlp_hidden"] = mlp_hidden;
  j["mlp_hidden_layers"] = mlp_hidden_layers;
  j["geo_feats"] = geo_feats;
  j["lr_warmup_steps"] = lr_warmup_steps;
  j["octree_initial_depth"] = octree_initial_depth;
  j["octree_max_depth"] = octree_max_depth;
  j["prune_threshold"] = prune_threshold;
  j["subdivide_threshold"] = subdivide_threshold;
  j["step_scale"] = step_scale;
  j["early_stop_optical_depth"] = early_stop_optical_depth;
  j["density_decay"] = density_decay;
  j["background"] = {background.r, background.g, background.b};
  j["random_background"] = random_background;
  j["global_guided"] = global_guided;
  j["seed"] = seed;
  j["deterministic"] = deterministic;
  j["threads"] = threads;
  j["grad_shards"] = grad_shards;
  return j.dump(2) + "\n";
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TrainConfig c;
  c.global_steps = j.value("global_steps", c.global_steps);
  c.focal_steps_per_block = j.value("focal_steps_per_block", c.focal_steps_per_block);
  c.batch_rays = j.value("batch_rays", c.batch_rays);
  c.max_points_per_ray = j.value("max_points_per_ray", c.max_points_per_ray);
  c.lr_global_start = j.value("lr_global_start", c.lr_global_start);
  c.lr_global_end = j.value("lr_global_end", c.lr_global_end);
  c.lr_focal_start = j.value("lr_focal_start", c.lr_focal_start);
  c.lr_focal_end = j.value("lr_focal_end", c.lr_focal_end);
  c.charbonnier_epsilon = j.value("charbonnier_epsilon", c.charbonnier_epsilon);
  c.weighted_fraction = j.value("weighted_fraction", c.weighted_fraction);
  c.k_blocks = j.value("k_blocks", c.k_blocks);
  c.refine_every = j.value("refine_every", c.refine_every);
  c.refine_warmup_steps = j.value("refine_warmup_steps", c.refine_warmup_steps);
  c.subdivide_until_step = j.value("subdivide_until_step", c.subdivide_until_step);
  c.error_map_downsample = j.value("error_map_downsample", c.error_map_downsample);
  c.error_map_refresh = j.value("error_map_refresh", c.error_map_refresh);
  c.levels = j.value("levels", c.levels);
  c.feats_per_level = j.value("feats_per_level", c.feats_per_level);
  c.base_resolution = j.value("base_resolution", c.base_resolution);
  c.max_resolution = j.value("max_resolution", c.max_resolution);
  c.log2_table_len = j.value("log2_table_len", c.log2_table_len);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.mlp_hidden_layers = j.value("mlp_hidden_layers", c.mlp_hidden_layers);
  c.geo_feats = j.value("geo_feats", c.geo_feats);
  c.lr_warmup_steps = j.value("lr_warmup_steps", c.lr_warmup_steps);
  c.octree_initial_depth = j.value("octree_initial_depth", c.octree_initial_depth);
  c.octree_max_depth = j.value("octree_max_depth", c.octree_max_depth);
  c.prune_threshold = j.value("prune_threshold", c.prune_threshold);
  c.subdivide_threshold = j.value("subdivide_threshold", c.subdivide_threshold);
  c.step_scale = j.value("step_scale", c.step_scale);
  c.early_stop_optical_depth = j.value("early_stop_optical_depth", c.early_stop_optical_depth);
  c.density_decay = j.value("density_decay", c.density_decay);
  if (j.contains("background")) {
    c.background = {j["background"][0].get<float>(), j["background"][1].get<float>(),
                    j["background"][2].get<float>()};
  }
  c.random_background = j.value("random_background", c.random_background);
  c.global_guided = j.value("global_guided", c.global_guided);
  c.seed = j.value("seed", c.seed);
  c.deterministic = j.value("deterministic", c.deterministic);
  c.threads = j.value("threads", c.threads);
  c.grad_shards = j.value("grad_shards", c.grad_shards);
  return c;
}

TrainConfig TrainConfig::from_key_value_file(const std::string& path) {
  std::string text = read_file_text(path);
  nlohmann::json j = nlohmann::json::object();
  size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    GF_CHECK(eq != std::string::npos,
             "config line " + std::to_string(line_no) + " is not 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "background") {
      // three space-separated floats
      nlohmann::json arr = nlohmann::json::array();
      size_t p = 0;
      while (p < value.size()) {
        size_t sp = value.find(' ', p);
        if (sp == std::string::npos) sp = value.size();
        arr.push_back(std::stod(value.substr(p, sp - p)));
        p = sp + 1;
      }
      GF_CHECK(arr.size() == 3, "background needs 3 values");
      j[key] = arr;
    } else if (value == "true" || value == "false") {
      j[key] = (value == "true");
    } else if (value.find_first_of(".eE") != std::string::npos) {
      j[key] = std::stod(value);
    } else {
      j[key] = std::stoll(value);
    }
  }
  // reject unknown keys: round-trip through the known-field serializer
  TrainConfig cfg = from_json(j.dump());
  nlohmann::json known = nlohmann::json::parse(cfg.to_json());
  for (auto& [key, val] : j.items())
    GF_CHECK(known.contains(key), "unknown config key: " + key);
  return cfg;
}

std::string TrainConfig::hash() const {
  std::string text = to_json();
  return hex64(fnv1a64(text.data(), text.size()));
}

LossGrad charbonnier_loss(const Rgb& c_out, const Rgb& c_gt, double epsilon) {
  GF_CHECK(epsilon > 0, "charbonnier epsilon must be positive");
  LossGrad out;
  for (int c = 0; c < 3; ++c) {
    double d = double(c_out[c]) - double(c_gt[c]);
    double s = std::sqrt(d * d + epsilon);
    out.loss += s / 3.0;
    out.grad[c] = d / s / 3.0;
  }
  return out;
}

double lr_at(int step, int total, double start, double end) {
  GF_CHECK(step >= 0 && step <= total && total > 0, "lr_at step out of range");
  return start * std::pow(end / start, double(step) / double(total));
}

void adam_step(AdamState& state, std::span<float> params, std::span<const float> grads,
               double lr) {
  GF_CHECK(params.size() == grads.size() && params.size() == state.m.size(),
           "adam shapes disagree");
  for (float g : grads) {
    if (!std::isfinite(g)) {
      ++state.skipped;
      return;
    }
  }
  ++state.t;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, double(state.t));
  const double bc2 = 1.0 - std::pow(b2, double(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    double m = b1 * state.m[i] + (1.0 - b1) * g;
    double v = b2 * state.v[i] + (1.0 - b2) * g * g;
    state.m[i] = float(m);
    state.v[i] = float(v);
    double m_hat = m / bc1;
    double v_hat = v / bc2;
    params[i] = float(double(params[i]) - lr * m_hat / (std::sqrt(v_hat) + state.eps));
  }
}

namespace {

// ---- training internals ----

struct DecoderGradState {
  RadianceDecoder grads;          // same topology, accumulates
  std::vector<AdamState> states;  // one per (w, b) tensor in traversal order

  void init(const RadianceDecoder& dec) {
    grads = zero_like(dec);
    states.clear();
    for (const auto* mlp : {&dec.density_mlp, &dec.color_mlp}) {
      for (const auto& l : mlp->layers) {
        states.emplace_back(l.w.size());
        states.emplace_back(l.b.size());
      }
    }
  }
  void zero() {
    for (auto* mlp : {&grads.density_mlp, &grads.color_mlp})
      for (auto& l : mlp->layers) {
        std::fill(l.w.begin(), l.w.end(), 0.f);
        std::fill(l.b.begin(), l.b.end(), 0.f);
      }
  }
  void apply(RadianceDecoder& dec, double lr) {
    size_t si = 0;
    auto mlps = {std::make_pair(&dec.density_mlp, &grads.density_mlp),
                 std::make_pair(&dec.color_mlp, &grads.color_mlp)};
    for (auto [mlp, gmlp] : mlps) {
      for (size_t li = 0; li < mlp->layers.size(); ++li) {
        adam_step(states[si++], mlp->layers[li].w, gmlp->layers[li].w, lr);
        adam_step(states[si++], mlp->layers[li].b, gmlp->layers[li].b, lr);
      }
    }
  }
};

struct ShardCtx {
  std::vector<float> table_grad;
  RadianceDecoder dec_grads;
  bool want_dec_grads = false;
  std::unordered_map<int32_t, float> leaf_max;
  double loss_sum = 0.0;
  int64_t sample_count = 0;

  // pools reused across rays/samples
  std::vector<RaySample> scratch;
  std::vector<EncodeCorners> corners_pool;
  std::vector<DecodeWorkspace<float>> ws_pool;
  std::vector<float> sigmas, colors, deltas, ts, trans;
  std::vector<float> d_sigmas, d_colors;
  FeatureVec feature, d_feature;
};

struct TrainPhase {
  const Dataset* ds = nullptr;
  const TrainConfig* cfg = nullptr;
  SpaceOctree* tree = nullptr;
  const HashEncoder* global_enc = nullptr;  // frozen in focal phase
  HashEncoder* trainable_enc = nullptr;     // global table or focal table
  RadianceDecoder* decoder = nullptr;
  bool fused = false;          // encode through global + focal sum
  bool train_decoder = false;  // global stage only
  bool update_occupancy = false;

  std::vector<ShardCtx> shards;
  std::vector<float> master_grad;
  AdamState table_adam;
  DecoderGradState dec_adam;

  void init() {
    shards.resize(size_t(cfg->grad_shards));
    for (auto& s : shards) {
      s.table_grad.assign(trainable_enc->table.size(), 0.f);
      s.want_dec_grads = train_decoder;
      if (train_decoder) s.dec_grads = zero_like(*decoder);
    }
    master_grad.assign(trainable_enc->table.size(), 0.f);
    table_adam = AdamState(trainable_enc->table.size());
    if (train_decoder) dec_adam.init(*decoder);
  }

  // Returns mean loss over the batch.
  double step(const std::vector<Ray>& rays, const std::vector<Rgb>& gts,
              const std::vector<Rgb>& bgs);
  void process_ray(ShardCtx& ctx, const Ray& ray, const Rgb& gt, const Rgb& bg, double inv_rays);
};

void TrainPhase::process_ray(ShardCtx& ctx, const Ray& ray, const Rgb& gt, const Rgb& bg_color,
                             double inv_rays) {
  const double eps_loss = cfg->charbonnier_epsilon;
  ctx.scratch.clear();
  if (ray.t_far > ray.t_near)
    tree->sample_ray(ray, cfg->step_scale, cfg->max_points_per_ray, ctx.scratch);

  const int fd = trainable_enc->config.feature_dim();
  ctx.feature.resize(size_t(fd));
  ctx.d_feature.resize(size_t(fd));

  // forward with early termination once the ray is saturated
  const size_t n_raw = ctx.scratch.size();
  if (ctx.corners_pool.size() < n_raw) ctx.corners_pool.resize(n_raw);
  if (ctx.ws_pool.size() < n_raw) ctx.ws_pool.resize(n_raw);
  ctx.sigmas.clear();
  ctx.colors.clear();
  ctx.deltas.clear();
  ctx.ts.clear();
  ctx.trans.clear();
  float optical_depth = 0.f;
  size_t used = 0;
  for (size_t i = 0; i < n_raw; ++i) {
    if (cfg->early_stop_optical_depth > 0 &&
        optical_depth > float(cfg->early_stop_optical_depth))
      break;
    const RaySample& s = ctx.scratch[i];
    const OctreeNode& node = tree->node(s.node_id);
    compute_corners(trainable_enc->config, node, s.position, ctx.corners_pool[i]);
    if (fused)
      encode_fused_with_corners(*global_enc, *trainable_enc, ctx.corners_pool[i], ctx.feature);
    else
      encode_with_corners(*trainable_enc, ctx.corners_pool[i], ctx.feature);
    ctx.trans.push_back(std::exp(-optical_depth));
    DecodeResult<float> d = decode<float>(*decoder, ctx.feature, ray.direction, ctx.ws_pool[i]);
    ctx.sigmas.push_back(d.sigma);
    ctx.colors.push_back(d.rgb[0]);
    ctx.colors.push_back(d.rgb[1]);
    ctx.colors.push_back(d.rgb[2]);
    ctx.deltas.push_back(float(s.delta));
    ctx.ts.push_back(float(s.t));
    optical_depth += float(s.delta) * d.sigma;
    ++used;
  }
  ctx.sample_count += int64_t(used);

  const float bg[3] = {bg_color.r, bg_color.g, bg_color.b};
  RenderOutput out = composite<float>(ctx.sigmas, ctx.colors, ctx.deltas, ctx.ts, bg,
                                      float(ray.t_far));
  LossGrad lg = charbonnier_loss({out.color[0], out.color[1], out.color[2]}, gt, eps_loss);
  double optical = 0.0;
  for (size_t i = 0; i < used; ++i) optical += double(ctx.sigmas[i]) * double(ctx.deltas[i]);
  ctx.loss_sum += lg.loss + cfg->density_decay * optical;
  if (used == 0) return;

  const float d_color[3] = {float(lg.grad[0] * inv_rays), float(lg.grad[1] * inv_rays),
                            float(lg.grad[2] * inv_rays)};
  ctx.d_sigmas.assign(used, 0.f);
  ctx.d_colors.assign(used * 3, 0.f);
  composite_backward<float>(ctx.sigmas, ctx.colors, ctx.deltas, out, bg, d_color,
                            std::span<float>(ctx.d_sigmas), std::span<float>(ctx.d_colors));
  if (cfg->density_decay > 0) {
    const float lambda = float(cfg->density_decay * inv_rays);
    for (size_t i = 0; i < used; ++i) ctx.d_sigmas[i] += lambda * ctx.deltas[i];
  }

  for (size_t i = 0; i < used; ++i) {
    decode_backward<float>(*decoder, ctx.ws_pool[i], ctx.d_sigmas[i], ctx.d_colors.data() + 3 * i,
                           ctx.want_dec_grads ? &ctx.dec_grads : nullptr,
                           std::span<float>(ctx.d_feature));
    encode_backward_with_corners(*trainable_enc, ctx.corners_pool[i], ctx.d_feature,
                                 std::span<float>(ctx.table_grad));
  }

  if (update_occupancy) {
    // transmittance-weighted density: occluded hash-collision noise has
    // T ~ 0 and stops inflating the occupancy of leaves nothing sees
    for (size_t i = 0; i < used; ++i) {
      int32_t id = ctx.scratch[i].node_id;
      float weighted = ctx.trans[i] * ctx.sigmas[i];
      auto [it, inserted] = ctx.leaf_max.try_emplace(id, weighted);
      if (!inserted) it->second = std::max(it->second, weighted);
    }
  }
}

double TrainPhase::step(const std::vector<Ray>& rays, const std::vector<Rgb>& gts,
                        const std::vector<Rgb>& bgs) {
  const double inv_rays = 1.0 / double(rays.size());
  for (auto& s : shards) {
    std::fill(s.table_grad.begin(), s.table_grad.end(), 0.f);
    if (s.want_dec_grads)
      for (auto* mlp : {&s.dec_grads.density_mlp, &s.dec_grads.color_mlp})
        for (auto& l : mlp->layers) {
          std::fill(l.w.begin(), l.w.end(), 0.f);
          std::fill(l.b.begin(), l.b.end(), 0.f);
        }
    s.leaf_max.clear();
    s.loss_sum = 0.0;
  }

  run_sharded(rays.size(), cfg->grad_shards, cfg->thread_count(),
              [&](int shard, size_t b, size_t e) {
                for (size_t i = b; i < e; ++i)
                  process_ray(shards[size_t(shard)], rays[i], gts[i], bgs[i], inv_rays);
              });

  // serial, shard-ordered merges keep results independent of scheduling
  double loss = 0.0;
  for (auto& s : shards) loss += s.loss_sum;
  loss *= inv_rays;

  std::fill(master_grad.begin(), master_grad.end(), 0.f);
  for (auto& s : shards)
    for (size_t i = 0; i < master_grad.size(); ++i) master_grad[i] += s.table_grad[i];

  if (train_decoder) {
    dec_adam.zero();
    for (auto& s : shards) {
      auto pairs = {std::make_pair(&dec_adam.grads.density_mlp, &s.dec_grads.density_mlp),
                    std::make_pair(&dec_adam.grads.color_mlp, &s.dec_grads.color_mlp)};
      for (auto [dst, src] : pairs)
        for (size_t li = 0; li < dst->layers.size(); ++li) {
          for (size_t i = 0; i < dst->layers[li].w.size(); ++i)
            dst->layers[li].w[i] += src->layers[li].w[i];
          for (size_t i = 0; i < dst->layers[li].b.size(); ++i)
            dst->layers[li].b[i] += src->layers[li].b[i];
        }
    }
  }

  if (update_occupancy) {
    std::unordered_map<int32_t, float> merged;
    for (auto& s : shards)
      for (auto& [id, v] : s.leaf_max) {
        auto [it, inserted] = merged.try_emplace(id, v);
        if (!inserted) it->second = std::max(it->second, v);
      }
    std::vector<std::pair<int32_t, float>> flat(merged.begin(), merged.end());
    tree->record_leaf_density(flat);
  }
  return loss;
}

struct BatchRays {
  std::vector<Ray> rays;
  std::vector<Rgb> gts;
  std::vector<Rgb> bgs;
};

// Builds rays and per-ray training targets. With random_background, each
// ray gets its own background color and the stored ground truth (composited
// on cfg.background) is recomposited onto it using the alpha sidecar.
BatchRays make_rays(const Dataset& ds, const TrainConfig& cfg, const PixelBatch& batch,
                    Rng& rng) {
  const bool randomize = cfg.random_background && ds.has_alpha;
  BatchRays out;
  out.rays.reserve(batch.entries.size());
  out.gts.reserve(batch.entries.size());
  out.bgs.reserve(batch.entries.size());
  for (const PixelEntry& e : batch.entries) {
    out.rays.push_back(generate_ray(ds.cameras[size_t(e.image_id)], double(e.px), double(e.py),
                                    ds.bounds));
    Rgb gt = ds.image(e.image_id).rgb(e.px, e.py);
    Rgb bg = cfg.background;
    if (randomize) {
      bg = {rng.uniformf(0.f, 1.f), rng.uniformf(0.f, 1.f), rng.uniformf(0.f, 1.f)};
      float trans = 1.f - ds.alpha(e.image_id).at(e.px, e.py);
      for (int c = 0; c < 3; ++c) {
        float content = gt[c] - trans * cfg.background[c];
        gt[c] = std::max(0.f, content) + trans * bg[c];
      }
    }
    out.gts.push_back(gt);
    out.bgs.push_back(bg);
  }
  return out;
}

void check_loss_finite(double loss, int& consecutive_bad) {
  if (!std::isfinite(loss)) {
    if (++consecutive_bad >= 3)
      throw std::runtime_error("gfnerf: loss non-finite for 3 consecutive steps, aborting");
  } else {
    consecutive_bad = 0;
  }
}

}  // namespace

GlobalTrainResult train_global(const Dataset& ds, const TrainConfig& cfg,
                               const std::string& run_dir) {
  GF_CHECK(!ds.train_ids.empty(), "dataset has no training images");
  std::filesystem::create_directories(run_dir);
  RunPaths paths{run_dir};

  SpaceOctree tree = SpaceOctree::build(ds.bounds, cfg.octree_initial_depth, cfg.seed);
  tree.max_depth = cfg.octree_max_depth;
  tree.prune_threshold = float(cfg.prune_threshold);
  tree.subdivide_threshold = float(cfg.subdivide_threshold);

  HashEncoder enc = init_global(cfg.encoder_config(), cfg.seed + 0x9001);
  RadianceDecoder dec = make_decoder(cfg.decoder_init());

  TrainPhase phase;
  phase.ds = &ds;
  phase.cfg = &cfg;
  phase.tree = &tree;
  phase.trainable_enc = &enc;
  phase.decoder = &dec;
  phase.fused = false;
  phase.train_decoder = true;
  phase.update_occupancy = true;
  phase.init();

  Rng batch_rng(cfg.seed + 0xBA7C4);
  GlobalTrainResult result;
  int consecutive_bad = 0;
  for (int step = 0; step < cfg.global_steps; ++step) {
    PixelBatch batch = sample_uniform(ds.cameras, ds.train_ids, cfg.batch_rays, batch_rng);
    BatchRays br = make_rays(ds, cfg, batch, batch_rng);
    double loss = phase.step(br.rays, br.gts, br.bgs);
    check_loss_finite(loss, consecutive_bad);
    result.losses.push_back(loss);

    double lr = lr_at(step, cfg.global_steps, cfg.lr_global_start, cfg.lr_global_end);
    if (cfg.lr_warmup_steps > 0 && step < cfg.lr_warmup_steps)
      lr *= double(step + 1) / double(cfg.lr_warmup_steps);
    adam_step(phase.table_adam, enc.table, phase.master_grad, lr);
    phase.dec_adam.apply(dec, lr);

    if ((step + 1) % cfg.refine_every == 0 && step + 1 > cfg.refine_warmup_steps) {
      auto stats = tree.refine(step + 1 <= cfg.subdivide_until_step);
      result.total_refine.pruned += stats.pruned;
      result.total_refine.subdivided += stats.subdivided;
      std::fprintf(stderr, "[global %5d] refine: pruned %d, subdivided %d (leaves %zu live/%zu)\n",
                   step + 1, stats.pruned, stats.subdivided, tree.live_leaf_count(),
                   tree.leaf_count());
    }
    if ((step + 1) % 250 == 0 || step + 1 == cfg.global_steps) {
      int64_t samples = 0;
      for (auto& s : phase.shards) samples += s.sample_count;
      std::fprintf(stderr, "[global %5d/%d] loss %.5f lr %.2e avg-samples/ray %.1f\n", step + 1,
                   cfg.global_steps, loss, lr,
                   double(samples) / double((step + 1) * cfg.batch_rays));
    }
  }

  tree.save(paths.octree());
  save_encoder(paths.encoder_global(), enc);
  save_decoder(paths.decoder(), dec);
  write_file_text(paths.config(), cfg.to_json());

  // camera partition for the focal stage
  std::vector<Vec3> positions;
  for (int id : ds.train_ids) positions.push_back(ds.cameras[size_t(id)].position);
  BlockAssignment assignment = balanced_cluster(positions, cfg.k_blocks, cfg.seed);
  save_blocks(paths.blocks(), assignment, ds.train_ids);
  return result;
}

LoadedRun load_run(const std::string& run_dir, bool need_focal) {
  RunPaths paths{run_dir};
  LoadedRun run;
  run.cfg = TrainConfig::from_json(read_file_text(paths.config()));
  run.octree = SpaceOctree::load(paths.octree());
  run.octree.freeze();
  run.global_enc = load_encoder(paths.encoder_global());
  run.global_enc.frozen = true;
  run.decoder = load_decoder(paths.decoder());
  run.decoder.frozen = true;
  run.assignment = load_blocks(paths.blocks(), &run.block_camera_ids);
  run.focal_present.assign(size_t(run.assignment.k), false);
  run.focal_encs.resize(size_t(run.assignment.k));
  for (int b = 0; b < run.assignment.k; ++b) {
    const std::string p = paths.encoder_focal(b);
    if (std::filesystem::exists(p)) {
      run.focal_encs[size_t(b)] = load_encoder(p);
      run.focal_present[size_t(b)] = true;
    }
    if (need_focal)
      GF_CHECK(run.focal_present[size_t(b)],
               "missing focal checkpoint for block " + std::to_string(b) + ": " + p);
  }
  return run;
}

FieldModel LoadedRun::model(int block_id) const {
  FieldModel m;
  m.octree = &octree;
  m.global_enc = &global_enc;
  m.decoder = &decoder;
  m.step_scale = cfg.step_scale;
  m.max_points_per_ray = cfg.max_points_per_ray;
  m.background = cfg.background;
  m.early_stop_optical_depth = cfg.early_stop_optical_depth;
  if (block_id >= 0 && focal_present[size_t(block_id)]) {
    m.focal_enc = &focal_encs[size_t(block_id)];
    m.guided = cfg.global_guided;
  } else {
    m.focal_enc = nullptr;
    m.guided = true;
  }
  return m;
}

FocalTrainResult train_focal(const Dataset& ds, const std::string& run_dir, int block_id) {
  RunPaths paths{run_dir};
  LoadedRun run = load_run(run_dir, /*need_focal=*/false);
  const TrainConfig& cfg = run.cfg;
  GF_CHECK(block_id >= 0 && block_id < run.assignment.k,
           "block id " + std::to_string(block_id) + " out of range");

  // the frozen trio: octree, global encoder, decoder
  SpaceOctree& tree = run.octree;
  HashEncoder& global_enc = run.global_enc;
  RadianceDecoder& dec = run.decoder;

  HashEncoder focal = cfg.global_guided
                          ? init_focal(cfg.encoder_config(), global_enc, block_id)
                          : init_global(cfg.encoder_config(), cfg.seed + 31337 + uint64_t(block_id));
  if (!cfg.global_guided) {
    focal.role = "focal";
    focal.block_id = block_id;
  }

  // block's training images
  std::vector<int> block_images;
  for (size_t i = 0; i < run.block_camera_ids.size(); ++i)
    if (run.assignment.block_of[i] == block_id)
      block_images.push_back(run.block_camera_ids[i]);
  GF_CHECK(!block_images.empty(), "block has no images");

  // error maps from the global model (the fused model at focal step 0)
  FieldModel global_model = run.model(-1);
  ErrorMapSet errs =
      compute_error_maps(global_model, ds.cameras, ds.images, block_images,
                         cfg.error_map_downsample);
  WeightedPixelSampler weighted(errs, block_images);

  TrainPhase phase;
  phase.ds = &ds;
  phase.cfg = &cfg;
  phase.tree = &tree;
  phase.global_enc = &global_enc;
  phase.trainable_enc = &focal;
  phase.decoder = &dec;
  phase.fused = cfg.global_guided;
  phase.train_decoder = false;
  phase.update_occupancy = false;  // octree is frozen in the focal stage
  phase.init();

  const int n_weighted = int(std::llround(cfg.weighted_fraction * cfg.batch_rays));
  Rng batch_rng(cfg.seed + 0xF0CA1 + uint64_t(block_id) * 7919);
  FocalTrainResult result;
  int consecutive_bad = 0;
  for (int step = 0; step < cfg.focal_steps_per_block; ++step) {
    if (cfg.error_map_refresh > 0 && step > 0 && step % cfg.error_map_refresh == 0) {
      FieldModel current;
      current = global_model;
      current.focal_enc = &focal;
      current.guided = cfg.global_guided;
      errs = compute_error_maps(current, ds.cameras, ds.images, block_images,
                                cfg.error_map_downsample);
      weighted = WeightedPixelSampler(errs, block_images);
    }
    PixelBatch batch;
    if (n_weighted > 0 && weighted.valid()) {
      for (int i = 0; i < n_weighted; ++i) batch.entries.push_back(weighted.draw(batch_rng));
    } else if (n_weighted > 0) {
      PixelBatch fb = sample_uniform(ds.cameras, block_images, n_weighted, batch_rng);
      batch.entries = fb.entries;
    }
    if (cfg.batch_rays - n_weighted > 0) {
      PixelBatch uni =
          sample_uniform(ds.cameras, block_images, cfg.batch_rays - n_weighted, batch_rng);
      batch.entries.insert(batch.entries.end(), uni.entries.begin(), uni.entries.end());
    }

    BatchRays br = make_rays(ds, cfg, batch, batch_rng);
    double loss = phase.step(br.rays, br.gts, br.bgs);
    check_loss_finite(loss, consecutive_bad);
    result.losses.push_back(loss);

    double lr = lr_at(step, cfg.focal_steps_per_block, cfg.lr_focal_start, cfg.lr_focal_end);
    if (cfg.lr_warmup_steps > 0 && step < cfg.lr_warmup_steps)
      lr *= double(step + 1) / double(cfg.lr_warmup_steps);
    adam_step(phase.table_adam, focal.table, phase.master_grad, lr);

    if ((step + 1) % 250 == 0 || step + 1 == cfg.focal_steps_per_block) {
      std::fprintf(stderr, "[focal b%d %5d/%d] loss %.5f lr %.2e\n", block_id, step + 1,
                   cfg.focal_steps_per_block, loss, lr);
    }
  }

  save_encoder(paths.encoder_focal(block_id), focal);
  return result;
}

MetricReport evaluate(const Dataset& ds, const std::string& run_dir, bool global_only,
                      bool write_outputs) {
  RunPaths paths{run_dir};
  LoadedRun run = load_run(run_dir, /*need_focal=*/!global_only);
  MetricReport report;
  report.config_hash = run.cfg.hash();
  report.run_id = hex64(fnv1a64(report.config_hash.data(), report.config_hash.size()) ^
                        run.cfg.seed);

  if (write_outputs) std::filesystem::create_directories(paths.renders());
  for (int cam_id : ds.test_ids) {
    const Camera& cam = ds.cameras[size_t(cam_id)];
    int block = global_only ? -1 : nearest_block(run.assignment, cam.position);
    FieldModel model = run.model(block);
    RenderedView view = render_image(model, cam, 1);
    ImageMetrics m;
    m.camera_id = cam_id;
    m.block_id = block;
    m.psnr = psnr(view.color, ds.image(cam_id));
    m.ssim = ssim(view.color, ds.image(cam_id));
    report.images.push_back(m);
    if (write_outputs) {
      const std::string base = paths.renders() + "/" + image_basename(cam_id);
      write_png(base + ".png", view.color);
      write_raw(base + ".raw", view.color);
      write_raw(base + "_depth.raw", view.depth);
      write_colormapped_png(base + "_depth.png", view.depth.data, view.depth.width,
                            view.depth.height);
    }
  }
  report.finalize();
  if (write_outputs) write_file_text(paths.metrics(), report.to_json());
  return report;
}

}  // namespace gfnerf
