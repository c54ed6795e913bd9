#pragma once

#include <cmath>
#include <cstdint>

namespace eyesim {

// Counter-based generator: every draw is a pure function of (key, counter),
// so independent streams can be derived per clip / per op and replayed from
// any point. Keeps dataset generation and training bit-reproducible across
// runs regardless of call interleaving.
inline uint64_t mix64(uint64_t key, uint64_t counter) {
  uint64_t z = key + 0x9e3779b97f4a7c15ull * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z ^= z >> 31;
  z += key ^ 0xd1b54a32d192ed03ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t derive_key(uint64_t seed, uint64_t a, uint64_t b = 0) {
  return mix64(mix64(seed, a), b);
}

struct RngStream {
  uint64_t key = 0;
  uint64_t counter = 0;

  explicit RngStream(uint64_t k = 0) : key(k) {}

  uint64_t next_u64() { return mix64(key, counter++); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive on both ends
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  // Box-Muller; std::normal_distribution is implementation-defined, which
  // would break cross-run byte-identical artifacts.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }
};

// Fixed op codes for deriving per-purpose streams from (seed, clip_index).
enum class RngOp : uint64_t {
  kCleanClip = 1,
  kDegrade = 2,
  kSpecSample = 3,
  kInit = 4,
  kTrainStep = 5,
  kFragment = 6,
  kPairs = 7,
};

inline RngStream stream_for(uint64_t seed, uint64_t index, RngOp op) {
  return RngStream(derive_key(seed, index, static_cast<uint64_t>(op)));
}

}  // namespace eyesim
