#pragma once

// Deterministic random number generation for reproducible Monte Carlo.
//
// Replica streams must be byte-for-byte reproducible for a given
// (seed, replica) pair regardless of platform or standard library, so the
// generator and all variate transforms are implemented here instead of
// relying on <random> distributions (whose algorithms are
// implementation-defined).
//
// Generator: xoshiro256++ (Blackman & Vigna, public domain reference
// implementation), seeded through splitmix64.
//
// Stream derivation: stream k of master seed s starts from
//   splitmix64 state = s XOR mix64(k + 1)
// where mix64 is the splitmix64 finalizer. Replica r uses stream r; the
// per-site coupling driver uses stream (r * 0x10000 + site + 1) relative
// to the replica stream's own seed.

#include <cmath>
#include <cstdint>

namespace kcmlab {

// splitmix64 finalizer; also usable as a standalone 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

class Rng {
 public:
  Rng() : Rng(0) {}

  explicit Rng(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
    // xoshiro256++ requires a nonzero state; splitmix64 output is zero for
    // all four words only with negligible probability, but be exact.
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[3] = 1;
  }

  // Stream k of a master seed; documented derivation, see file header.
  static Rng stream(std::uint64_t master_seed, std::uint64_t stream_id) {
    return Rng(master_seed ^ mix64(stream_id + 1));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform index in {0, ..., n-1} by 128-bit multiply (bias < n / 2^64).
  int uniform_index(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Exponential with the given rate; uniform01() < 1 keeps this finite.
  double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

}  // namespace kcmlab
