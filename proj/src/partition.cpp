#include "gfnerf/partition.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "gfnerf/serial.h"
#include "gfnerf/util.h"

namespace gfnerf {

namespace {

double sqdist(const Vec3& a, const Vec3& b) {
  Vec3 d = a - b;
  return dot(d, d);
}

std::vector<Vec3> kmeanspp_init(const std::vector<Vec3>& pts, int k, Rng& rng) {
  std::vector<Vec3> centers;
  centers.push_back(pts[rng.below(pts.size())]);
  std::vector<double> d2(pts.size());
  while (int(centers.size()) < k) {
    double total = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& c : centers) best = std::min(best, sqdist(pts[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // all remaining points coincide with some center; pick round-robin
      centers.push_back(pts[centers.size() % pts.size()]);
      continue;
    }
    double r = rng.uniform() * total;
    size_t pick = 0;
    double acc = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) {
      acc += d2[i];
      if (acc >= r) {
        pick = i;
        break;
      }
    }
    centers.push_back(pts[pick]);
  }
  return centers;
}

std::vector<int> assign_with_capacity(const std::vector<Vec3>& pts,
                                      const std::vector<Vec3>& centers, int capacity) {
  const size_t m = pts.size();
  const int k = int(centers.size());
  // order points by the gap between their best and second-best center:
  // points that strongly prefer one center claim their spot first
  std::vector<std::pair<double, size_t>> order(m);
  for (size_t i = 0; i < m; ++i) {
    double best = std::numeric_limits<double>::infinity(), second = best;
    for (const Vec3& c : centers) {
      double d = sqdist(pts[i], c);
      if (d < best) {
        second = best;
        best = d;
      } else if (d < second) {
        second = d;
      }
    }
    order[i] = {-(second - best), i};  // largest gap first
  }
  std::sort(order.begin(), order.end());

  std::vector<int> assign(m, -1);
  std::vector<int> load(size_t(k), 0);
  for (auto& [neg_gap, i] : order) {
    int best_c = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (load[size_t(c)] >= capacity) continue;
      double d = sqdist(pts[i], centers[size_t(c)]);
      if (d < best_d) {
        best_d = d;
        best_c = c;
      }
    }
    assign[i] = best_c;
    ++load[size_t(best_c)];
  }
  return assign;
}

// Moves members from oversized to undersized blocks until sizes differ by
// at most one, always picking the cheapest move.
void rebalance(const std::vector<Vec3>& pts, const std::vector<Vec3>& centers,
               std::vector<int>& assign, int k) {
  std::vector<int> load(size_t(k), 0);
  for (int a : assign) ++load[size_t(a)];
  for (;;) {
    int hi = int(std::max_element(load.begin(), load.end()) - load.begin());
    int lo = int(std::min_element(load.begin(), load.end()) - load.begin());
    if (load[size_t(hi)] - load[size_t(lo)] <= 1) return;
    size_t best_i = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < pts.size(); ++i) {
      if (assign[i] != hi) continue;
      double cost = sqdist(pts[i], centers[size_t(lo)]) - sqdist(pts[i], centers[size_t(hi)]);
      if (cost < best_cost) {
        best_cost = cost;
        best_i = i;
      }
    }
    assign[best_i] = lo;
    --load[size_t(hi)];
    ++load[size_t(lo)];
  }
}

}  // namespace

void BlockAssignment::validate() const {
  GF_CHECK(k >= 1, "k must be >= 1");
  size_t min_sz = SIZE_MAX, max_sz = 0;
  for (const auto& m : members) {
    min_sz = std::min(min_sz, m.size());
    max_sz = std::max(max_sz, m.size());
  }
  GF_CHECK(max_sz - min_sz <= 1, "blocks are not balanced");
  for (const Vec3& c : centers) GF_CHECK(c.finite(), "block center not finite");
}

BlockAssignment balanced_cluster(const std::vector<Vec3>& positions, int k, uint64_t seed) {
  const size_t m = positions.size();
  GF_CHECK(k >= 1, "k must be >= 1");
  GF_CHECK(size_t(k) <= m, "k exceeds the number of cameras");
  Rng rng(seed ^ 0xB10C5ull);

  std::vector<Vec3> centers = kmeanspp_init(positions, k, rng);
  const int capacity = int((m + size_t(k) - 1) / size_t(k));
  std::vector<int> assign;
  std::vector<int> prev;
  for (int round = 0; round < 100; ++round) {
    assign = assign_with_capacity(positions, centers, capacity);
    rebalance(positions, centers, assign, k);
    // centroid update
    std::vector<Vec3> sums(static_cast<size_t>(k));
    std::vector<int> counts(size_t(k), 0);
    for (size_t i = 0; i < m; ++i) {
      sums[size_t(assign[i])] += positions[i];
      ++counts[size_t(assign[i])];
    }
    for (int c = 0; c < k; ++c)
      if (counts[size_t(c)] > 0) centers[size_t(c)] = sums[size_t(c)] / double(counts[size_t(c)]);
    if (assign == prev) break;
    prev = assign;
  }

  BlockAssignment out;
  out.k = k;
  out.block_of = assign;
  out.centers = centers;
  out.members.assign(size_t(k), {});
  for (size_t i = 0; i < m; ++i) out.members[size_t(assign[i])].push_back(int(i));
  // final centers = exact member means
  for (int c = 0; c < k; ++c) {
    Vec3 s;
    for (int i : out.members[size_t(c)]) s += positions[size_t(i)];
    if (!out.members[size_t(c)].empty()) out.centers[size_t(c)] = s / double(out.members[size_t(c)].size());
  }
  out.validate();
  return out;
}

int nearest_block(const BlockAssignment& assignment, const Vec3& query) {
  GF_CHECK(assignment.k >= 1, "empty assignment");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < assignment.k; ++c) {
    double d = sqdist(query, assignment.centers[size_t(c)]);
    if (d < best_d) {  // strict: ties keep the lowest id
      best_d = d;
      best = c;
    }
  }
  return best;
}

void save_blocks(const std::string& path, const BlockAssignment& assignment,
                 const std::vector<int>& camera_ids) {
  GF_CHECK(camera_ids.size() == assignment.block_of.size(), "camera id count mismatch");
  nlohmann::json doc;
  doc["k"] = assignment.k;
  doc["camera_ids"] = camera_ids;
  doc["block_of"] = assignment.block_of;
  nlohmann::json centers = nlohmann::json::array();
  for (const Vec3& c : assignment.centers) centers.push_back({c.x, c.y, c.z});
  doc["centers"] = centers;
  write_file_text(path, doc.dump(2) + "\n");
}

BlockAssignment load_blocks(const std::string& path, std::vector<int>* camera_ids) {
  nlohmann::json doc = nlohmann::json::parse(read_file_text(path));
  BlockAssignment out;
  out.k = doc.at("k").get<int>();
  out.block_of = doc.at("block_of").get<std::vector<int>>();
  for (const auto& c : doc.at("centers")) {
    out.centers.push_back({c[0].get<double>(), c[1].get<double>(), c[2].get<double>()});
  }
  out.members.assign(size_t(out.k), {});
  for (size_t i = 0; i < out.block_of.size(); ++i)
    out.members[size_t(out.block_of[i])].push_back(int(i));
  if (camera_ids) *camera_ids = doc.at("camera_ids").get<std::vector<int>>();
  out.validate();
  return out;
}

}  // namespace gfnerf
