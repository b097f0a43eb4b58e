#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace genealogy {

// Seed expansion / stream derivation mixer (Steele et al. splitmix64).
struct SplitMix64 {
  uint64_t state;
  explicit SplitMix64(uint64_t seed) : state(seed) {}
  uint64_t next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
};

// xoshiro256++ generator.
//
// Independent replicate streams are derived as Rng(seed, stream): the state is
// filled from SplitMix64 seeded with mix(seed, stream).  Running replicate r
// on any thread therefore produces the same draws; parallel schedules cannot
// change results.
class Rng {
 public:
  Rng() : Rng(0, 0) {}
  explicit Rng(uint64_t seed, uint64_t stream = 0) {
    SplitMix64 pre(stream * 0xA3EC647659359ACDull + 0x41C64E6D);
    SplitMix64 sm(seed ^ pre.next());
    for (auto& w : s_) w = sm.next();
  }

  uint64_t next_u64() {
    uint64_t r = rotl(s_[0] + s_[3], 23) + s_[0];
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return r;
  }

  // Uniform on [0,1), 53-bit resolution.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }
  // Uniform on (0,1]; safe as a log argument.
  double uniform01_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double exponential(double rate);

  // Uniform integer in [0, n).
  uint32_t below(uint32_t n) {
    return uint32_t((__uint128_t(next_u64()) * n) >> 64);
  }

  // Index i with cumulative[i-1] <= u*total < cumulative[i].
  int pick_cumulative(std::span<const double> cumulative);

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<uint64_t, 4> s_;
};

// Fills out[0..n) with unit-mean exponential variates by inversion,
// consuming exactly n draws from rng.  Implemented in a fast-math
// translation unit so the log vectorizes (libmvec).
void fill_unit_exponentials(Rng& rng, double* out, int n);

// Buffered unit-mean exponential draws for event-driven simulators.
class ExpBatch {
 public:
  double next(Rng& rng) {
    if (pos_ == kBatch) {
      fill_unit_exponentials(rng, buf_, kBatch);
      pos_ = 0;
    }
    return buf_[pos_++];
  }

 private:
  static constexpr int kBatch = 4096;
  double buf_[kBatch];
  int pos_ = kBatch;
};

}  // namespace genealogy
