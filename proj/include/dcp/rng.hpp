#pragma once

#include <cmath>
#include <cstdint>

namespace dcp {

// SplitMix64 finalizer; doubles as the mixing hash for stream derivation
// and as the kernel of the counter-based generator below.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Independent substream seed from a master seed and up to three integer tags
// (replica index, particle index, ...). Streams are reproducible under
// parallel execution because they depend only on the tags, not on scheduling.
inline std::uint64_t derive_stream(std::uint64_t master, std::uint64_t a,
                                   std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(master ^ 0x8f1bbcdc8f1bbcdcull);
  s = mix64(s ^ a);
  s = mix64(s ^ b);
  return mix64(s ^ c);
}

inline double to_u01(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;  // in [0,1)
}

// Stateless draw: the k-th uniform of a stream. Lets every particle own a
// virtual stream without per-particle generator state.
inline double counter_u01(std::uint64_t stream, std::uint64_t counter) {
  return to_u01(mix64(stream + counter * 0x9e3779b97f4a7c15ull));
}

// Sequential SplitMix64 generator. The number of draws per simulation event
// is fixed by construction, which keeps replays byte-stable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  double u01() { return to_u01(next_u64()); }           // [0,1)
  double exponential() { return -std::log1p(-u01()); }  // Exp(1)

  // Marsaglia polar method with a cached spare.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * u01() - 1.0;
      v = 2.0 * u01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace dcp
