#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfnerf/camera.h"
#include "gfnerf/vec.h"

namespace gfnerf {

// Per-node hash parameters: three multiplier primes and three offset
// primes, unique per node, all odd and > 2^31.
struct NodePrimes {
  uint64_t pi[3] = {0, 0, 0};
  uint64_t b[3] = {0, 0, 0};
};

struct OctreeNode {
  Aabb aabb;
  int32_t children[8] = {-1, -1, -1, -1, -1, -1, -1, -1};
  bool is_leaf = true;
  bool dead = false;  // pruned; still owns its volume but is never sampled
  float occupancy_ema = 0.f;
  NodePrimes primes;
  int32_t node_id = -1;
  uint8_t depth = 0;
};

struct RaySample {
  Vec3 position;
  double t = 0.0;
  double delta = 0.0;
  int32_t node_id = -1;
};

// Flat multi-ray sample batch; ray r owns samples [offsets[r], offsets[r+1]).
struct RaySampleBatch {
  std::vector<RaySample> samples;
  std::vector<uint32_t> offsets{0};

  size_t ray_count() const { return offsets.size() - 1; }
  std::pair<uint32_t, uint32_t> ray_range(size_t r) const { return {offsets[r], offsets[r + 1]}; }
};

class SpaceOctree {
 public:
  SpaceOctree() = default;  // empty; assign from build() or load()

  // Uniform subdivision of the root box to initial_depth levels; primes are
  // assigned from the fixed prime table through a seed-shuffled stream so
  // the same seed always yields the same per-node hash functions.
  static SpaceOctree build(const Aabb& root_aabb, int initial_depth, uint64_t seed);

  const OctreeNode& node(int32_t id) const { return nodes_[size_t(id)]; }
  size_t node_count() const { return nodes_.size(); }
  const Aabb& root_aabb() const { return nodes_[0].aabb; }
  bool frozen() const { return frozen_; }
  uint64_t seed() const { return seed_; }

  int max_depth = 6;
  float prune_threshold = 0.01f;
  float subdivide_threshold = 1.0f;

  // Leaf (live or dead) containing p; -1 if p is outside the root box.
  int32_t find_leaf(const Vec3& p) const;

  // Warp into the node's unit cube (Eq. 3 contract via affine normalization).
  static Vec3 warp_point(const OctreeNode& node, const Vec3& x);

  // Anchored hash: per-axis g_k*pi_k + b_k in wrapping 64-bit arithmetic,
  // XOR-folded over axes, XORed with a per-level salt, reduced mod L.
  static uint32_t hash_index(const OctreeNode& node, uint32_t g0, uint32_t g1, uint32_t g2,
                             int level, uint32_t table_len);

  // Marches the ray through live leaves front to back, placing samples at
  // spacing step_scale * leaf_diagonal / 16 inside each crossed live leaf.
  // Appends to `out`; returns the number of samples added.
  size_t sample_ray(const Ray& ray, double step_scale, int max_points,
                    std::vector<RaySample>& out) const;

  // Batch convenience over sample_ray.
  RaySampleBatch sample_rays(const std::vector<Ray>& rays, double step_scale, int max_points) const;

  // occupancy_ema <- max(decay * ema, max sigma seen in the leaf this round)
  void record_density(const RaySampleBatch& batch, const std::vector<float>& sigmas);
  void record_density(const std::vector<RaySample>& samples, const std::vector<float>& sigmas);
  // Same update from a precomputed per-leaf max-density map.
  void record_leaf_density(const std::vector<std::pair<int32_t, float>>& leaf_max_sigma);

  struct RefineStats {
    int pruned = 0;
    int subdivided = 0;
  };
  // Prunes leaves below prune_threshold and, when allow_subdivide, splits
  // live leaves above subdivide_threshold (children inherit the parent ema
  // and get fresh primes). Subdividing re-anchors a region's hash functions,
  // so the trainer only allows it early, while relearning is cheap.
  RefineStats refine(bool allow_subdivide = true);

  void freeze() { frozen_ = true; }

  size_t live_leaf_count() const;
  size_t leaf_count() const;

  // Checkpoint: "GFN-OCT1" blob, JSON header + fixed-width node records.
  void save(const std::string& path) const;
  static SpaceOctree load(const std::string& path);

  // FNV over the serialized structure; used by freeze/round-trip tests.
  uint64_t structure_hash() const;

  static constexpr double kOccupancyDecay = 0.95;

 private:
  NodePrimes draw_primes();
  void subdivide_node(int32_t id);
  std::vector<uint8_t> serialize_nodes() const;

  std::vector<OctreeNode> nodes_;
  std::vector<uint32_t> prime_order_;  // seeded shuffle of prime_table indices
  uint64_t prime_cursor_ = 0;
  uint64_t seed_ = 0;
  bool frozen_ = false;
  mutable bool warned_frozen_ = false;
};

}  // namespace gfnerf
