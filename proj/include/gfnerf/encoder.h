#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gfnerf/octree.h"
#include "gfnerf/vec.h"

namespace gfnerf {

struct EncoderConfig {
  int levels = 8;
  int feats_per_level = 2;
  int base_resolution = 16;
  int max_resolution = 256;
  uint32_t table_len = 1u << 15;  // L, power of two

  int feature_dim() const { return levels * feats_per_level; }
  // Geometric progression from base to max resolution.
  int resolution(int level) const;
  bool operator==(const EncoderConfig&) const = default;
};

using FeatureVec = std::vector<float>;

// Trainable multi-resolution feature table addressed through the octree's
// per-node hash functions. One global instance plus one focal instance per
// block; focal tables start at zero so fused output equals the global
// output at focal step 0.
struct HashEncoder {
  EncoderConfig config;
  std::vector<float> table;  // L rows x feature_dim columns, row-major
  std::vector<float> grad;   // same shape
  bool frozen = false;
  std::string role = "global";  // "global" | "focal"
  int block_id = -1;

  size_t param_count() const { return table.size(); }
  void clear_grad() { std::fill(grad.begin(), grad.end(), 0.f); }
};

HashEncoder init_global(const EncoderConfig& config, uint64_t seed);
HashEncoder init_focal(const EncoderConfig& config, const HashEncoder& global_ref, int block_id);

// Hash corner lookup shared by forward and backward: for each level, the 8
// lattice corners around the warped point and their trilinear weights.
// Weights are kept in double so each level's 8 weights sum to 1 to ~1e-16;
// table entries themselves stay float32.
struct EncodeCorners {
  // per level, 8 entries
  std::vector<uint32_t> rows;
  std::vector<double> weights;
  void resize(int levels) {
    rows.resize(size_t(levels) * 8);
    weights.resize(size_t(levels) * 8);
  }
};

void compute_corners(const EncoderConfig& config, const OctreeNode& node, const Vec3& x,
                     EncodeCorners& out);

// out must have config.feature_dim() entries.
void encode(const HashEncoder& enc, const Vec3& x, const OctreeNode& node, std::span<float> out);
FeatureVec encode(const HashEncoder& enc, const Vec3& x, const OctreeNode& node);

// Elementwise sum of the two tables' lookups (same node, same hash rows).
void encode_fused(const HashEncoder& global_enc, const HashEncoder& focal_enc, const Vec3& x,
                  const OctreeNode& node, std::span<float> out);
FeatureVec encode_fused(const HashEncoder& global_enc, const HashEncoder& focal_enc, const Vec3& x,
                        const OctreeNode& node);

// Accumulates upstream_grad * trilinear weight into the corner rows.
// Interpolation is linear in the table, so this is the exact adjoint.
// No-op when the encoder is frozen. grad_out, when given, receives the
// accumulation instead of enc.grad (per-shard buffers in the trainer).
void encode_backward(HashEncoder& enc, const Vec3& x, const OctreeNode& node,
                     std::span<const float> upstream_grad, std::span<float> grad_out = {});

// Variants on precomputed corners (hot path in the trainer).
void encode_with_corners(const HashEncoder& enc, const EncodeCorners& corners,
                         std::span<float> out);
void encode_fused_with_corners(const HashEncoder& global_enc, const HashEncoder& focal_enc,
                               const EncodeCorners& corners, std::span<float> out);
void encode_backward_with_corners(const HashEncoder& enc, const EncodeCorners& corners,
                                  std::span<const float> upstream_grad, std::span<float> grad_out);

// Checkpoint: "GFN-ENC1" blob, float32 table payload.
void save_encoder(const std::string& path, const HashEncoder& enc);
HashEncoder load_encoder(const std::string& path);

}  // namespace gfnerf
