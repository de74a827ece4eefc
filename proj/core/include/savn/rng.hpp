#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace savn {

// Deterministic RNG used everywhere. Distribution transforms are written out
// by hand so results do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Independent sub-stream for (seed, stream, purpose) triples; parallel
  // workers derive their own stream instead of sharing one engine.
  static Rng derive(std::uint64_t seed, std::uint64_t stream,
                    std::uint64_t purpose = 0) {
    std::uint64_t x = seed;
    x = splitmix(x ^ (0x9e3779b97f4a7c15ull + stream));
    x = splitmix(x ^ (0xbf58476d1ce4e5b9ull * (purpose + 1)));
    return Rng(x);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Stateless mixer for deriving child seeds (e.g. per-episode seeds from a
  // master seed plus counters) without consuming any engine state.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t a,
                           std::uint64_t b = 0) {
    std::uint64_t x = splitmix(seed ^ (0x9e3779b97f4a7c15ull + a));
    return splitmix(x ^ (0xbf58476d1ce4e5b9ull * (b + 1)));
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection sampling keeps the distribution exact for any n.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform_index(
                    static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller; one draw per call, no caching, so the
  // consumption pattern stays easy to reason about.
  double normal() {
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace savn
