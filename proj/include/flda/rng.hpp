#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace flda {

inline constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// splitmix64. Small, fast, and fully reproducible across platforms, unlike
// the std:: distributions whose draw counts are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += kGolden);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1) with 53 bits of resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // uniform integer in [0, bound)
  uint32_t uniform_int(uint32_t bound) {
    return static_cast<uint32_t>((static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  // Poisson by CDF inversion. Consumes exactly one uniform, so draws are
  // monotone in `mean` under a shared stream; callers rely on that coupling.
  int poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean > 256.0) {
      double v = std::round(gaussian() * std::sqrt(mean) + mean);
      return v < 0.0 ? 0 : static_cast<int>(v);
    }
    double u = uniform();
    double p = std::exp(-mean);
    double cum = p;
    int k = 0;
    while (u > cum && p > 0.0) {
      ++k;
      p *= mean / k;
      cum += p;
    }
    return k;
  }

  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < std::numeric_limits<double>::min()) u1 = std::numeric_limits<double>::min();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

// Purposes for independent substreams hanging off one master seed. Keeping
// the streams separate is what makes paired-seed runs comparable: changing
// e.g. the background load must not shift the batch sampling sequence.
enum class Stream : uint64_t {
  SynthMeans = 1,
  SynthNoise,
  Partition,
  ModelInit,
  BatchSampling,
  ChannelAccess,
  Background,
  Harvest,
  General,
};

inline uint64_t derive_seed(uint64_t master, Stream purpose, uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = mix64(master + kGolden);
  h = mix64(h ^ (static_cast<uint64_t>(purpose) * kGolden));
  h = mix64(h ^ (a + kGolden));
  h = mix64(h ^ (b + kGolden));
  return h;
}

inline Rng make_stream(uint64_t master, Stream purpose, uint64_t a = 0, uint64_t b = 0) {
  return Rng(derive_seed(master, purpose, a, b));
}

}  // namespace flda
