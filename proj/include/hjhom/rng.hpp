#pragma once
#include <cstdint>
#include <span>

namespace hjhom {

// Counter-based randomness: every draw is a pure function of (seed, stream
// indices), so sampling never depends on traversal order or thread count and
// realizations are bit-identical across runs and platforms.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a) {
  return splitmix64(seed ^ splitmix64(a + 0x632BE59BD9B4E019ULL));
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix(mix(seed, a), b);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix(mix(seed, a, b), c);
}

// Uniform in [0,1) from the top 53 bits; deterministic, unlike the
// implementation-defined std distributions.
inline double u01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return u01(mix(seed, a, b));
}

// Pick an index from a finite distribution given cumulative weights.
inline int pick_weighted(double u, std::span<const double> probs) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

// Small sequential helper for places that want a stream of draws.
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(splitmix64(seed ^ 0xA5A5A5A55A5A5A5AULL)) {}
  std::uint64_t next() { state = splitmix64(state); return state; }
  double next_u01() { return u01(next()); }
  // uniform in [lo, hi)
  double range(double lo, double hi) { return lo + (hi - lo) * next_u01(); }
  int index(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
};

} // namespace hjhom
