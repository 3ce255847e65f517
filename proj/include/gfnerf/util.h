#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gfnerf {

#define GF_CHECK(cond, msg)                                                  \
  do {                                                                       \
    if (!(cond)) throw std::runtime_error(std::string("gfnerf: ") + (msg)); \
  } while (0)

// mt19937_64 core with hand-rolled distributions so streams are
// bit-stable across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed_mix(seed)) {}

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  float uniformf(float lo, float hi) { return float(lo + (hi - lo) * uniform()); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  double normal() {
    // Box-Muller, one value per call (second discarded for simplicity)
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  static uint64_t seed_mix(uint64_t s) { return s * 0x9E3779B97F4A7C15ull + 0x853C49E6748FEA9Bull; }
  uint64_t state_;
};

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

// Runs fn(shard, begin, end) over [0,n) split into n_shards contiguous
// ranges. Shard boundaries depend only on (n, n_shards), never on thread
// count, so per-shard accumulations merged in shard order are bit-stable.
inline void run_sharded(size_t n, int n_shards, int n_threads,
                        const std::function<void(int, size_t, size_t)>& fn) {
  if (n == 0) return;
  n_shards = std::max(1, n_shards);
  n_threads = std::max(1, n_threads);
  if (n_threads == 1) {
    for (int s = 0; s < n_shards; ++s) {
      size_t b = n * s / n_shards, e = n * (s + 1) / n_shards;
      if (b < e) fn(s, b, e);
    }
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  auto worker = [&] {
    for (;;) {
      int s = next.fetch_add(1);
      if (s >= n_shards) return;
      size_t b = n * s / n_shards, e = n * (s + 1) / n_shards;
      if (b < e) fn(s, b, e);
    }
  };
  int t_count = std::min(n_threads, n_shards);
  pool.reserve(t_count);
  for (int t = 0; t < t_count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

inline int default_thread_count() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(hc);
}

}  // namespace gfnerf
