#pragma once

#include <cstdint>
#include <string_view>

namespace memjack {

// FNV-1a 64-bit; used everywhere a stable, platform-independent digest is
// needed (std::hash is not reproducible across implementations).
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic splitmix64 stream. Sub-streams are derived from (seed, tag)
// so independent consumers never share draws.
class RngStream {
  public:
    explicit RngStream(uint64_t seed) : state_(mix64(seed ^ 0x6a09e667f3bcc908ull)) {}
    RngStream(uint64_t seed, std::string_view tag)
        : RngStream(mix64(seed) ^ fnv1a64(tag)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in {0, ..., n-1}; n must be > 0.
    std::size_t next_index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    RngStream fork(std::string_view tag) { return RngStream(next_u64(), tag); }

  private:
    uint64_t state_;
};

}  // namespace memjack
