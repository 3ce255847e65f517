#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "gfnerf/partition.h"
#include "gfnerf/util.h"

using namespace gfnerf;

namespace {

std::vector<Vec3> two_far_clusters(Rng& rng, int per_cluster) {
  std::vector<Vec3> pts;
  for (int i = 0; i < per_cluster; ++i)
    pts.push_back({-10 + rng.normal() * 0.5, rng.normal() * 0.5, rng.normal() * 0.5});
  for (int i = 0; i < per_cluster; ++i)
    pts.push_back({10 + rng.normal() * 0.5, rng.normal() * 0.5, rng.normal() * 0.5});
  return pts;
}

double kmeans_cost(const std::vector<Vec3>& pts, const std::vector<int>& assign, int k) {
  std::vector<Vec3> sums(static_cast<size_t>(k));
  std::vector<int> counts(size_t(k), 0);
  for (size_t i = 0; i < pts.size(); ++i) {
    sums[size_t(assign[i])] += pts[i];
    counts[size_t(assign[i])]++;
  }
  double cost = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    Vec3 c = sums[size_t(assign[i])] / double(counts[size_t(assign[i])]);
    Vec3 d = pts[i] - c;
    cost += dot(d, d);
  }
  return cost;
}

}  // namespace

TEST_CASE("balanced_cluster: k = 1 and k = m degenerate cases") {
  Rng rng(1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 7; ++i) pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), 0});

  BlockAssignment one = balanced_cluster(pts, 1, 5);
  CHECK(one.k == 1);
  Vec3 mean;
  for (const Vec3& p : pts) mean += p;
  mean = mean / 7.0;
  CHECK(one.centers[0].x == doctest::Approx(mean.x));
  CHECK(one.centers[0].y == doctest::Approx(mean.y));

  BlockAssignment all = balanced_cluster(pts, 7, 5);
  CHECK(all.k == 7);
  for (const auto& m : all.members) CHECK(m.size() == 1);
  // every camera's block center is its own position
  for (size_t i = 0; i < pts.size(); ++i) {
    const Vec3& c = all.centers[size_t(all.block_of[i])];
    CHECK(norm(c - pts[i]) < 1e-12);
  }
}

TEST_CASE("balanced_cluster rejects k > m") {
  std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS(balanced_cluster(pts, 3, 1));
}

TEST_CASE("balanced_cluster: recovers two well-separated clusters exactly") {
  Rng rng(2);
  std::vector<Vec3> pts = two_far_clusters(rng, 10);
  BlockAssignment got = balanced_cluster(pts, 2, 7);

  // the ground-truth split: first 10 vs last 10
  int b0 = got.block_of[0];
  for (int i = 0; i < 10; ++i) CHECK(got.block_of[size_t(i)] == b0);
  for (int i = 10; i < 20; ++i) CHECK(got.block_of[size_t(i)] == 1 - b0);

  // exhaustive check over all balanced 2-partitions of 20 points:
  // C(20,10) = 184756 subsets; ours must reach the minimum k-means cost
  double got_cost = kmeans_cost(pts, got.block_of, 2);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(20, 0);
  std::fill(pick.begin(), pick.begin() + 10, 1);
  std::sort(pick.begin(), pick.end());
  do {
    best = std::min(best, kmeans_cost(pts, pick, 2));
  } while (std::next_permutation(pick.begin(), pick.end()));
  CHECK(got_cost == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("balanced_cluster: balance holds when k does not divide m") {
  Rng rng(3);
  std::vector<Vec3> pts;
  for (int i = 0; i < 17; ++i)
    pts.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-1, 1)});
  for (int k : {2, 3, 4, 5}) {
    BlockAssignment a = balanced_cluster(pts, k, 11);
    size_t mn = SIZE_MAX, mx = 0;
    for (const auto& m : a.members) {
      mn = std::min(mn, m.size());
      mx = std::max(mx, m.size());
    }
    CHECK(mx - mn <= 1);
  }
}

TEST_CASE("balanced_cluster: deterministic for a fixed seed") {
  Rng rng(4);
  std::vector<Vec3> pts;
  for (int i = 0; i < 23; ++i)
    pts.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)});
  BlockAssignment a = balanced_cluster(pts, 4, 99);
  BlockAssignment b = balanced_cluster(pts, 4, 99);
  CHECK(a.block_of == b.block_of);
}

TEST_CASE("nearest_block: center query, tie rule, and a scan oracle") {
  BlockAssignment a;
  a.k = 3;
  a.centers = {{0, 0, 0}, {4, 0, 0}, {2, 0, 0}};
  a.members = {{0}, {1}, {2}};
  a.block_of = {0, 1, 2};

  CHECK(nearest_block(a, {4, 0, 0}) == 1);
  // query equidistant between centers 0 and 2 -> lowest id wins
  CHECK(nearest_block(a, {1, 0, 0}) == 0);

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Vec3 q{rng.uniform(-5, 8), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    int got = nearest_block(a, q);
    int expect = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 3; ++c) {
      Vec3 d = q - a.centers[size_t(c)];
      if (dot(d, d) < best) {
        best = dot(d, d);
        expect = c;
      }
    }
    CHECK(got == expect);
  }
}

TEST_CASE("nearest_block is invariant under rigid transforms") {
  Rng rng(6);
  std::vector<Vec3> pts = two_far_clusters(rng, 6);
  BlockAssignment a = balanced_cluster(pts, 3, 13);

  // rotation about z by 30 degrees plus a translation
  const double ang = M_PI / 6;
  auto rigid = [&](const Vec3& p) {
    return Vec3{std::cos(ang) * p.x - std::sin(ang) * p.y + 5.0,
                std::sin(ang) * p.x + std::cos(ang) * p.y - 2.0, p.z + 0.5};
  };
  std::vector<Vec3> moved;
  for (const Vec3& p : pts) moved.push_back(rigid(p));
  BlockAssignment b = a;
  for (auto& c : b.centers) c = rigid(c);

  for (int trial = 0; trial < 200; ++trial) {
    Vec3 q{rng.uniform(-12, 12), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    CHECK(nearest_block(a, q) == nearest_block(b, rigid(q)));
  }
}

TEST_CASE("blocks.json round trip") {
  namespace fs = std::filesystem;
  Rng rng(7);
  std::vector<Vec3> pts = two_far_clusters(rng, 5);
  BlockAssignment a = balanced_cluster(pts, 2, 3);
  std::vector<int> cam_ids;
  for (int i = 0; i < 10; ++i) cam_ids.push_back(i * 2);

  const std::string path = (fs::temp_directory_path() / "gfnerf_blocks.json").string();
  save_blocks(path, a, cam_ids);
  std::vector<int> loaded_ids;
  BlockAssignment b = load_blocks(path, &loaded_ids);
  CHECK(b.k == a.k);
  CHECK(b.block_of == a.block_of);
  CHECK(loaded_ids == cam_ids);
  CHECK(b.centers[0].x == doctest::Approx(a.centers[0].x));
  fs::remove(path);
}
