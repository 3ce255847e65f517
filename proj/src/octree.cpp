#include "gfnerf/octree.h"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "gfnerf/primes.h"
#include "gfnerf/serial.h"
#include "gfnerf/util.h"

namespace gfnerf {

namespace {

Aabb child_box(const Aabb& parent, int octant) {
  Vec3 c = parent.center();
  Aabb box;
  box.min.x = (octant & 1) ? c.x : parent.min.x;
  box.max.x = (octant & 1) ? parent.max.x : c.x;
  box.min.y = (octant & 2) ? c.y : parent.min.y;
  box.max.y = (octant & 2) ? parent.max.y : c.y;
  box.min.z = (octant & 4) ? c.z : parent.min.z;
  box.max.z = (octant & 4) ? parent.max.z : c.z;
  return box;
}

}  // namespace

SpaceOctree SpaceOctree::build(const Aabb& root_aabb, int initial_depth, uint64_t seed) {
  GF_CHECK(root_aabb.valid(), "degenerate root aabb");
  GF_CHECK(initial_depth >= 1, "initial_depth must be >= 1");
  SpaceOctree tree;
  tree.seed_ = seed;
  tree.prime_order_.resize(prime_table().size());
  std::iota(tree.prime_order_.begin(), tree.prime_order_.end(), 0u);
  Rng rng(seed);
  for (size_t i = tree.prime_order_.size() - 1; i > 0; --i) {
    size_t j = rng.below(i + 1);
    std::swap(tree.prime_order_[i], tree.prime_order_[j]);
  }

  OctreeNode root;
  root.aabb = root_aabb;
  root.node_id = 0;
  root.depth = 0;
  root.primes = tree.draw_primes();
  tree.nodes_.push_back(root);

  // breadth-first uniform subdivision
  size_t level_begin = 0, level_end = 1;
  for (int d = 0; d < initial_depth; ++d) {
    for (size_t i = level_begin; i < level_end; ++i) tree.subdivide_node(int32_t(i));
    level_begin = level_end;
    level_end = tree.nodes_.size();
  }
  return tree;
}

NodePrimes SpaceOctree::draw_primes() {
  const auto& table = prime_table();
  NodePrimes p;
  for (int k = 0; k < 3; ++k) {
    p.pi[k] = table[prime_order_[prime_cursor_++ % prime_order_.size()]];
    p.b[k] = table[prime_order_[prime_cursor_++ % prime_order_.size()]];
  }
  return p;
}

void SpaceOctree::subdivide_node(int32_t id) {
  nodes_[size_t(id)].is_leaf = false;
  for (int oct = 0; oct < 8; ++oct) {
    OctreeNode child;
    child.aabb = child_box(nodes_[size_t(id)].aabb, oct);
    child.node_id = int32_t(nodes_.size());
    child.depth = uint8_t(nodes_[size_t(id)].depth + 1);
    child.occupancy_ema = nodes_[size_t(id)].occupancy_ema;
    child.primes = draw_primes();
    nodes_[size_t(id)].children[oct] = child.node_id;
    nodes_.push_back(child);
  }
}

int32_t SpaceOctree::find_leaf(const Vec3& p) const {
  if (!nodes_[0].aabb.contains(p)) return -1;
  int32_t id = 0;
  while (!nodes_[size_t(id)].is_leaf) {
    const OctreeNode& n = nodes_[size_t(id)];
    Vec3 c = n.aabb.center();
    int oct = (p.x >= c.x ? 1 : 0) | (p.y >= c.y ? 2 : 0) | (p.z >= c.z ? 4 : 0);
    id = n.children[oct];
  }
  return id;
}

Vec3 SpaceOctree::warp_point(const OctreeNode& node, const Vec3& x) {
  Vec3 e = node.aabb.extent();
  Vec3 z{(x.x - node.aabb.min.x) / e.x, (x.y - node.aabb.min.y) / e.y,
         (x.z - node.aabb.min.z) / e.z};
  assert(z.x > -1e-6 && z.x < 1.0 + 1e-6 && z.y > -1e-6 && z.y < 1.0 + 1e-6 && z.z > -1e-6 &&
         z.z < 1.0 + 1e-6);
  z.x = std::clamp(z.x, 0.0, 1.0);
  z.y = std::clamp(z.y, 0.0, 1.0);
  z.z = std::clamp(z.z, 0.0, 1.0);
  return z;
}

uint32_t SpaceOctree::hash_index(const OctreeNode& node, uint32_t g0, uint32_t g1, uint32_t g2,
                                 int level, uint32_t table_len) {
  uint64_t h0 = uint64_t(g0) * node.primes.pi[0] + node.primes.b[0];
  uint64_t h1 = uint64_t(g1) * node.primes.pi[1] + node.primes.b[1];
  uint64_t h2 = uint64_t(g2) * node.primes.pi[2] + node.primes.b[2];
  uint64_t h = (h0 ^ h1 ^ h2) ^ level_salt(level);
  return uint32_t(h & uint64_t(table_len - 1));
}

size_t SpaceOctree::sample_ray(const Ray& ray, double step_scale, int max_points,
                               std::vector<RaySample>& out) const {
  const size_t start = out.size();
  auto span = ray_aabb_intersect(ray.origin, ray.direction, nodes_[0].aabb, ray.t_near);
  if (!span) return 0;
  const double t_end = std::min(span->second, ray.t_far);
  const double eps = 1e-9 * nodes_[0].aabb.diagonal();
  double t = span->first + eps;
  double prev_t = std::numeric_limits<double>::quiet_NaN();
  int guard = 0;

  while (t < t_end && ++guard < 100000) {
    int32_t leaf_id = find_leaf(ray.point_at(t));
    if (leaf_id < 0) break;
    const OctreeNode& leaf = nodes_[size_t(leaf_id)];
    auto leaf_span = ray_aabb_intersect(ray.origin, ray.direction, leaf.aabb, ray.t_near);
    if (!leaf_span) {  // grazing contact; nudge forward
      t += eps;
      continue;
    }
    double t_exit = std::min(leaf_span->second, t_end);
    if (!leaf.dead) {
      const double spacing = step_scale * leaf.aabb.diagonal() / 16.0;
      double s = std::max(leaf_span->first, t - eps) + 0.5 * spacing;
      while (s < t_exit) {
        if (out.size() - start >= size_t(max_points)) return out.size() - start;
        RaySample sample;
        sample.position = ray.point_at(s);
        sample.t = s;
        sample.delta = std::isnan(prev_t) ? spacing : s - prev_t;
        sample.node_id = leaf_id;
        out.push_back(sample);
        prev_t = s;
        s += spacing;
      }
    }
    t = std::max(t_exit + eps, t + eps);
  }
  return out.size() - start;
}

RaySampleBatch SpaceOctree::sample_rays(const std::vector<Ray>& rays, double step_scale,
                                        int max_points) const {
  RaySampleBatch batch;
  for (const Ray& ray : rays) {
    sample_ray(ray, step_scale, max_points, batch.samples);
    batch.offsets.push_back(uint32_t(batch.samples.size()));
  }
  return batch;
}

void SpaceOctree::record_density(const RaySampleBatch& batch, const std::vector<float>& sigmas) {
  GF_CHECK(batch.samples.size() == sigmas.size(), "sample/sigma count mismatch");
  record_density(batch.samples, sigmas);
}

void SpaceOctree::record_density(const std::vector<RaySample>& samples,
                                 const std::vector<float>& sigmas) {
  GF_CHECK(samples.size() == sigmas.size(), "sample/sigma count mismatch");
  std::unordered_map<int32_t, float> leaf_max;
  for (size_t i = 0; i < samples.size(); ++i) {
    auto [it, inserted] = leaf_max.try_emplace(samples[i].node_id, sigmas[i]);
    if (!inserted) it->second = std::max(it->second, sigmas[i]);
  }
  std::vector<std::pair<int32_t, float>> flat(leaf_max.begin(), leaf_max.end());
  record_leaf_density(flat);
}

void SpaceOctree::record_leaf_density(const std::vector<std::pair<int32_t, float>>& leaf_max_sigma) {
  if (frozen_) {
    if (!warned_frozen_) {
      std::fprintf(stderr, "gfnerf: record_density ignored, octree is frozen\n");
      warned_frozen_ = true;
    }
    return;
  }
  for (const auto& [id, sigma] : leaf_max_sigma) {
    OctreeNode& n = nodes_[size_t(id)];
    n.occupancy_ema = std::max(float(kOccupancyDecay) * n.occupancy_ema, sigma);
  }
}

SpaceOctree::RefineStats SpaceOctree::refine(bool allow_subdivide) {
  RefineStats stats;
  if (frozen_) {
    if (!warned_frozen_) {
      std::fprintf(stderr, "gfnerf: refine ignored, octree is frozen\n");
      warned_frozen_ = true;
    }
    return stats;
  }
  const size_t count_before = nodes_.size();
  for (size_t i = 0; i < count_before; ++i) {
    OctreeNode& n = nodes_[i];
    if (!n.is_leaf || n.dead) continue;
    if (n.occupancy_ema < prune_threshold) {
      n.dead = true;
      ++stats.pruned;
    } else if (allow_subdivide && n.occupancy_ema > subdivide_threshold &&
               int(n.depth) < max_depth) {
      subdivide_node(n.node_id);
      ++stats.subdivided;
    }
  }
  return stats;
}

size_t SpaceOctree::live_leaf_count() const {
  size_t n = 0;
  for (const auto& node : nodes_)
    if (node.is_leaf && !node.dead) ++n;
  return n;
}

size_t SpaceOctree::leaf_count() const {
  size_t n = 0;
  for (const auto& node : nodes_)
    if (node.is_leaf) ++n;
  return n;
}

std::vector<uint8_t> SpaceOctree::serialize_nodes() const {
  std::vector<uint8_t> payload;
  payload.reserve(nodes_.size() * 133);
  for (const OctreeNode& n : nodes_) {
    for (int k = 0; k < 3; ++k) put_pod(payload, n.aabb.min[k]);
    for (int k = 0; k < 3; ++k) put_pod(payload, n.aabb.max[k]);
    for (int c = 0; c < 8; ++c) put_pod(payload, n.children[c]);
    uint8_t flags = uint8_t((n.is_leaf ? 1 : 0) | (n.dead ? 2 : 0));
    put_pod(payload, flags);
    put_pod(payload, n.occupancy_ema);
    for (int k = 0; k < 3; ++k) put_pod(payload, n.primes.pi[k]);
    for (int k = 0; k < 3; ++k) put_pod(payload, n.primes.b[k]);
  }
  return payload;
}

void SpaceOctree::save(const std::string& path) const {
  nlohmann::json header = {{"node_count", nodes_.size()},
                           {"max_depth", max_depth},
                           {"prune_threshold", prune_threshold},
                           {"subdivide_threshold", subdivide_threshold},
                           {"frozen", frozen_},
                           {"seed", seed_},
                           {"prime_cursor", prime_cursor_}};
  write_blob(path, CheckpointBlob{"GFN-OCT1", header.dump(), serialize_nodes()});
}

SpaceOctree SpaceOctree::load(const std::string& path) {
  CheckpointBlob blob = read_blob(path, "GFN-OCT1");
  nlohmann::json header = nlohmann::json::parse(blob.header);
  SpaceOctree tree;
  tree.seed_ = header.at("seed").get<uint64_t>();
  tree.max_depth = header.at("max_depth").get<int>();
  tree.prune_threshold = header.at("prune_threshold").get<float>();
  tree.subdivide_threshold = header.at("subdivide_threshold").get<float>();
  tree.frozen_ = header.at("frozen").get<bool>();
  tree.prime_cursor_ = header.at("prime_cursor").get<uint64_t>();
  size_t count = header.at("node_count").get<size_t>();

  tree.prime_order_.resize(prime_table().size());
  std::iota(tree.prime_order_.begin(), tree.prime_order_.end(), 0u);
  Rng rng(tree.seed_);
  for (size_t i = tree.prime_order_.size() - 1; i > 0; --i) {
    size_t j = rng.below(i + 1);
    std::swap(tree.prime_order_[i], tree.prime_order_[j]);
  }

  size_t cursor = 0;
  tree.nodes_.resize(count);
  for (size_t i = 0; i < count; ++i) {
    OctreeNode& n = tree.nodes_[i];
    for (int k = 0; k < 3; ++k) n.aabb.min[k] = get_pod<double>(blob.payload, cursor);
    for (int k = 0; k < 3; ++k) n.aabb.max[k] = get_pod<double>(blob.payload, cursor);
    for (int c = 0; c < 8; ++c) n.children[c] = get_pod<int32_t>(blob.payload, cursor);
    uint8_t flags = get_pod<uint8_t>(blob.payload, cursor);
    n.is_leaf = (flags & 1) != 0;
    n.dead = (flags & 2) != 0;
    n.occupancy_ema = get_pod<float>(blob.payload, cursor);
    for (int k = 0; k < 3; ++k) n.primes.pi[k] = get_pod<uint64_t>(blob.payload, cursor);
    for (int k = 0; k < 3; ++k) n.primes.b[k] = get_pod<uint64_t>(blob.payload, cursor);
    n.node_id = int32_t(i);
  }
  GF_CHECK(cursor == blob.payload.size(), "octree payload size mismatch");
  // depths recomputed from box edge ratios (halving is exact in binary fp)
  for (size_t i = 0; i < count; ++i) {
    double ratio = tree.nodes_[0].aabb.extent().x / tree.nodes_[i].aabb.extent().x;
    tree.nodes_[i].depth = uint8_t(std::lround(std::log2(ratio)));
  }
  return tree;
}

uint64_t SpaceOctree::structure_hash() const {
  std::vector<uint8_t> bytes = serialize_nodes();
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace gfnerf
