#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace fgr {

// xoshiro256++ seeded through splitmix64. Pure integer arithmetic plus
// ldexp, so identical seeds give identical draw sequences on any platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // [0, 1) with 53 random bits.
  double next_double() {
    return std::ldexp(static_cast<double>(next_u64() >> 11), -53);
  }

  double uniform(double low, double high) {
    return low + (high - low) * next_double();
  }

  // Standard normal via Box-Muller; two uniform draws per call.
  double normal() {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  // Independent substream derived from (seed, stream); used to give each
  // layer / epoch / worker its own reproducible generator.
  SeededRng split(std::uint64_t stream) const {
    std::uint64_t x = seed_ ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
    std::uint64_t mixed = x;
    return SeededRng(splitmix64(mixed));
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::array<std::uint64_t, 4> state_;
  std::uint64_t seed_;
};

}  // namespace fgr
