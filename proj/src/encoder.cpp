#include "gfnerf/encoder.h"

#include <cmath>

#include <json.hpp>

#include "gfnerf/serial.h"
#include "gfnerf/util.h"

namespace gfnerf {

int EncoderConfig::resolution(int level) const {
  if (levels <= 1) return base_resolution;
  double growth = std::exp((std::log(double(max_resolution)) - std::log(double(base_resolution))) /
                           double(levels - 1));
  return int(std::lround(double(base_resolution) * std::pow(growth, double(level))));
}

namespace {

void validate_config(const EncoderConfig& c) {
  GF_CHECK(c.table_len > 0 && (c.table_len & (c.table_len - 1)) == 0,
           "hash table length must be a power of two");
  GF_CHECK(c.levels >= 1 && c.feats_per_level >= 1, "bad encoder dims");
  GF_CHECK(c.base_resolution >= 1 && c.max_resolution >= c.base_resolution,
           "bad encoder resolutions");
}

}  // namespace

HashEncoder init_global(const EncoderConfig& config, uint64_t seed) {
  validate_config(config);
  HashEncoder enc;
  enc.config = config;
  enc.role = "global";
  enc.table.resize(size_t(config.table_len) * config.feature_dim());
  enc.grad.assign(enc.table.size(), 0.f);
  Rng rng(seed);
  for (float& v : enc.table) v = rng.uniformf(-1e-4f, 1e-4f);
  return enc;
}

HashEncoder init_focal(const EncoderConfig& config, const HashEncoder& global_ref, int block_id) {
  validate_config(config);
  GF_CHECK(config == global_ref.config, "focal encoder dims must match the global encoder");
  HashEncoder enc;
  enc.config = config;
  enc.role = "focal";
  enc.block_id = block_id;
  enc.table.assign(size_t(config.table_len) * config.feature_dim(), 0.f);
  enc.grad.assign(enc.table.size(), 0.f);
  return enc;
}

void compute_corners(const EncoderConfig& config, const OctreeNode& node, const Vec3& x,
                     EncodeCorners& out) {
  out.resize(config.levels);
  const Vec3 z = SpaceOctree::warp_point(node, x);
  for (int level = 0; level < config.levels; ++level) {
    const int res = config.resolution(level);
    double pos[3] = {z.x * res, z.y * res, z.z * res};
    uint32_t base[3];
    double frac[3];
    for (int k = 0; k < 3; ++k) {
      double f = std::floor(pos[k]);
      int cell = std::min(int(f), res - 1);
      base[k] = uint32_t(std::max(cell, 0));
      frac[k] = pos[k] - base[k];
    }
    for (int corner = 0; corner < 8; ++corner) {
      uint32_t g0 = base[0] + (corner & 1);
      uint32_t g1 = base[1] + ((corner >> 1) & 1);
      uint32_t g2 = base[2] + ((corner >> 2) & 1);
      double w = ((corner & 1) ? frac[0] : 1.0 - frac[0]) *
                 (((corner >> 1) & 1) ? frac[1] : 1.0 - frac[1]) *
                 (((corner >> 2) & 1) ? frac[2] : 1.0 - frac[2]);
      size_t slot = size_t(level) * 8 + corner;
      out.rows[slot] = SpaceOctree::hash_index(node, g0, g1, g2, level, config.table_len);
      out.weights[slot] = w;
    }
  }
}

void encode_with_corners(const HashEncoder& enc, const EncodeCorners& corners,
                         std::span<float> out) {
  const int fd = enc.config.feature_dim();
  const int fpl = enc.config.feats_per_level;
  std::fill(out.begin(), out.end(), 0.f);
  for (int level = 0; level < enc.config.levels; ++level) {
    float* dst = out.data() + size_t(level) * fpl;
    for (int corner = 0; corner < 8; ++corner) {
      size_t slot = size_t(level) * 8 + corner;
      const float w = float(corners.weights[slot]);
      const float* row = enc.table.data() + size_t(corners.rows[slot]) * fd + size_t(level) * fpl;
      for (int f = 0; f < fpl; ++f) dst[f] += w * row[f];
    }
  }
}

void encode_fused_with_corners(const HashEncoder& global_enc, const HashEncoder& focal_enc,
                               const EncodeCorners& corners, std::span<float> out) {
  const int fd = global_enc.config.feature_dim();
  const int fpl = global_enc.config.feats_per_level;
  std::fill(out.begin(), out.end(), 0.f);
  for (int level = 0; level < global_enc.config.levels; ++level) {
    float* dst = out.data() + size_t(level) * fpl;
    for (int corner = 0; corner < 8; ++corner) {
      size_t slot = size_t(level) * 8 + corner;
      const float w = float(corners.weights[slot]);
      const size_t off = size_t(corners.rows[slot]) * fd + size_t(level) * fpl;
      const float* grow = global_enc.table.data() + off;
      const float* frow = focal_enc.table.data() + off;
      for (int f = 0; f < fpl; ++f) dst[f] += w * (grow[f] + frow[f]);
    }
  }
}

void encode_backward_with_corners(const HashEncoder& enc, const EncodeCorners& corners,
                                  std::span<const float> upstream_grad, std::span<float> grad_out) {
  const int fd = enc.config.feature_dim();
  const int fpl = enc.config.feats_per_level;
  for (int level = 0; level < enc.config.levels; ++level) {
    const float* up = upstream_grad.data() + size_t(level) * fpl;
    for (int corner = 0; corner < 8; ++corner) {
      size_t slot = size_t(level) * 8 + corner;
      const float w = float(corners.weights[slot]);
      float* row = grad_out.data() + size_t(corners.rows[slot]) * fd + size_t(level) * fpl;
      for (int f = 0; f < fpl; ++f) row[f] += w * up[f];
    }
  }
}

void encode(const HashEncoder& enc, const Vec3& x, const OctreeNode& node, std::span<float> out) {
  GF_CHECK(out.size() == size_t(enc.config.feature_dim()), "feature span size mismatch");
  EncodeCorners corners;
  compute_corners(enc.config, node, x, corners);
  encode_with_corners(enc, corners, out);
}

FeatureVec encode(const HashEncoder& enc, const Vec3& x, const OctreeNode& node) {
  FeatureVec out(size_t(enc.config.feature_dim()));
  encode(enc, x, node, out);
  return out;
}

void encode_fused(const HashEncoder& global_enc, const HashEncoder& focal_enc, const Vec3& x,
                  const OctreeNode& node, std::span<float> out) {
  GF_CHECK(global_enc.config == focal_enc.config, "fused encoders must share dims");
  GF_CHECK(out.size() == size_t(global_enc.config.feature_dim()), "feature span size mismatch");
  EncodeCorners corners;
  compute_corners(global_enc.config, node, x, corners);
  encode_fused_with_corners(global_enc, focal_enc, corners, out);
}

FeatureVec encode_fused(const HashEncoder& global_enc, const HashEncoder& focal_enc, const Vec3& x,
                        const OctreeNode& node) {
  FeatureVec out(size_t(global_enc.config.feature_dim()));
  encode_fused(global_enc, focal_enc, x, node, out);
  return out;
}

void encode_backward(HashEncoder& enc, const Vec3& x, const OctreeNode& node,
                     std::span<const float> upstream_grad, std::span<float> grad_out) {
  if (enc.frozen) return;  // freeze contract: silently inert
  GF_CHECK(upstream_grad.size() == size_t(enc.config.feature_dim()), "upstream grad size mismatch");
  EncodeCorners corners;
  compute_corners(enc.config, node, x, corners);
  std::span<float> target = grad_out.empty() ? std::span<float>(enc.grad) : grad_out;
  GF_CHECK(target.size() == enc.table.size(), "grad buffer size mismatch");
  encode_backward_with_corners(enc, corners, upstream_grad, target);
}

void save_encoder(const std::string& path, const HashEncoder& enc) {
  nlohmann::json header = {{"levels", enc.config.levels},
                           {"feats_per_level", enc.config.feats_per_level},
                           {"base_resolution", enc.config.base_resolution},
                           {"max_resolution", enc.config.max_resolution},
                           {"table_len", enc.config.table_len},
                           {"frozen", enc.frozen},
                           {"role", enc.role},
                           {"block_id", enc.block_id}};
  std::vector<uint8_t> payload(enc.table.size() * sizeof(float));
  std::memcpy(payload.data(), enc.table.data(), payload.size());
  write_blob(path, CheckpointBlob{"GFN-ENC1", header.dump(), std::move(payload)});
}

HashEncoder load_encoder(const std::string& path) {
  CheckpointBlob blob = read_blob(path, "GFN-ENC1");
  nlohmann::json header = nlohmann::json::parse(blob.header);
  HashEncoder enc;
  enc.config.levels = header.at("levels").get<int>();
  enc.config.feats_per_level = header.at("feats_per_level").get<int>();
  enc.config.base_resolution = header.at("base_resolution").get<int>();
  enc.config.max_resolution = header.at("max_resolution").get<int>();
  enc.config.table_len = header.at("table_len").get<uint32_t>();
  enc.frozen = header.at("frozen").get<bool>();
  enc.role = header.at("role").get<std::string>();
  enc.block_id = header.at("block_id").get<int>();
  validate_config(enc.config);
  size_t n = size_t(enc.config.table_len) * enc.config.feature_dim();
  GF_CHECK(blob.payload.size() == n * sizeof(float), "encoder payload size mismatch");
  enc.table.resize(n);
  std::memcpy(enc.table.data(), blob.payload.data(), blob.payload.size());
  enc.grad.assign(n, 0.f);
  return enc;
}

}  // namespace gfnerf
