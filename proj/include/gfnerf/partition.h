#pragma once

#include <string>
#include <vector>

#include "gfnerf/vec.h"

namespace gfnerf {

// Balanced camera blocks: sizes differ by at most one, each block owns a
// focal encoder, renders pick the block whose center is nearest.
struct BlockAssignment {
  int k = 0;
  std::vector<int> block_of;            // per input position
  std::vector<Vec3> centers;            // mean member position per block
  std::vector<std::vector<int>> members;

  void validate() const;
};

// Capacity-constrained k-means: k-means++ seeding, then per round a greedy
// matching (points ordered by how much they prefer their nearest center,
// assigned to the nearest center with spare capacity) followed by a
// rebalancing pass and centroid update. Deterministic for a fixed seed.
BlockAssignment balanced_cluster(const std::vector<Vec3>& positions, int k, uint64_t seed);

// argmin over block centers; ties broken toward the lowest block id.
int nearest_block(const BlockAssignment& assignment, const Vec3& query);

void save_blocks(const std::string& path, const BlockAssignment& assignment,
                 const std::vector<int>& camera_ids);
// camera_ids receives the dataset camera id of each clustered position.
BlockAssignment load_blocks(const std::string& path, std::vector<int>* camera_ids = nullptr);

}  // namespace gfnerf
