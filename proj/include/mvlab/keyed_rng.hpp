#pragma once

// Counter-based noise: every draw is a pure function of a NoiseKey, so the
// order in which particles or replicates are processed never changes results.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace mvlab {

enum class NoiseStream : std::uint32_t {
  system = 1,
  auxiliary = 2,
  coupling = 3,
  initial = 4,
};

struct NoiseKey {
  std::uint64_t seed = 0;
  NoiseStream stream = NoiseStream::system;
  std::uint64_t replicate = 0;
  std::uint64_t particle = 0;
  std::uint64_t step = 0;

  NoiseKey with_particle(std::uint64_t i) const {
    NoiseKey k = *this;
    k.particle = i;
    return k;
  }
  NoiseKey with_step(std::uint64_t n) const {
    NoiseKey k = *this;
    k.step = n;
    return k;
  }
  NoiseKey with_stream(NoiseStream s) const {
    NoiseKey k = *this;
    k.stream = s;
    return k;
  }
  NoiseKey with_replicate(std::uint64_t r) const {
    NoiseKey k = *this;
    k.replicate = r;
    return k;
  }

  friend bool operator==(const NoiseKey&, const NoiseKey&) = default;
};

// Particle index reserved for draws shared by all particles (exchangeable shift).
inline constexpr std::uint64_t kSharedParticle = std::numeric_limits<std::uint64_t>::max();

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_key(const NoiseKey& key) noexcept {
  constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t h = mix64(key.seed + golden);
  h = mix64(h ^ (static_cast<std::uint64_t>(key.stream) * 0xd1b54a32d192ed03ULL));
  h = mix64((h + golden) ^ key.replicate);
  h = mix64((h + 2 * golden) ^ key.particle);
  h = mix64((h + 3 * golden) ^ key.step);
  return h;
}

// Deterministic stream of variates attached to one key. Cheap to construct.
class KeyedStream {
 public:
  explicit KeyedStream(const NoiseKey& key) noexcept : state_(hash_key(key)) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mvlab
