#pragma once

#include <cstdint>
#include <vector>

namespace gfnerf {

// Deterministic Miller-Rabin, exact for all 64-bit inputs.
bool is_prime_u64(uint64_t n);

// Fixed table of large primes (odd, > 2^31) generated from an internal
// constant seed; identical on every run and platform. The octree draws
// per-node hash primes from this table via a seeded shuffle.
const std::vector<uint64_t>& prime_table();

// Per-level salt primes mixed into the hash so different resolution
// levels of the same node do not alias onto identical table rows.
uint64_t level_salt(int level);

}  // namespace gfnerf
