#include "gfnerf/primes.h"

#include <mutex>

#include "gfnerf/util.h"

namespace gfnerf {

namespace {

uint64_t mulmod(uint64_t a, uint64_t b, uint64_t m) {
  return uint64_t((__uint128_t)a * b % m);
}

uint64_t powmod(uint64_t a, uint64_t e, uint64_t m) {
  uint64_t r = 1;
  a %= m;
  while (e) {
    if (e & 1) r = mulmod(r, a, m);
    a = mulmod(a, a, m);
    e >>= 1;
  }
  return r;
}

}  // namespace

bool is_prime_u64(uint64_t n) {
  if (n < 2) return false;
  for (uint64_t p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    if (n % p == 0) return n == p;
  }
  uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) { d >>= 1; ++s; }
  // This base set is a proven deterministic witness set for n < 2^64.
  for (uint64_t a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
    uint64_t x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod(x, x, n);
      if (x == n - 1) { composite = false; break; }
    }
    if (composite) return false;
  }
  return true;
}

namespace {

std::vector<uint64_t> generate_primes(uint64_t stream_seed, size_t count) {
  Rng rng(stream_seed);
  std::vector<uint64_t> out;
  out.reserve(count);
  while (out.size() < count) {
    // odd 62-bit candidates, comfortably above 2^31
    uint64_t c = (rng.next_u64() >> 2) | (1ull << 61) | 1ull;
    if (is_prime_u64(c)) out.push_back(c);
  }
  return out;
}

}  // namespace

const std::vector<uint64_t>& prime_table() {
  static const std::vector<uint64_t> table = generate_primes(0x5EEDF00Dull, 4096);
  return table;
}

uint64_t level_salt(int level) {
  static const std::vector<uint64_t> salts = generate_primes(0x5A17ull, 32);
  return salts[size_t(level) % salts.size()];
}

}  // namespace gfnerf
