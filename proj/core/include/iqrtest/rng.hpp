#pragma once

#include <cstdint>
#include <random>

#include "iqrtest/mathutil.hpp"

namespace iqrtest {

// Stable stream labels used to derive independent substreams from one master
// seed. Keyed derivation (rather than sequential splitting) means changing,
// say, the number of bootstrap replicates never reshuffles the draws of the
// critical-value simulation, and replicate b sees the same stream no matter
// how many replicates run before it.
namespace rng_stream {
inline constexpr std::uint64_t kBootstrap = 0x626f6f7473747261ULL;
inline constexpr std::uint64_t kCriticalValues = 0x637269747661756cULL;
inline constexpr std::uint64_t kRespondent = 0x726573706f6e6465ULL;
inline constexpr std::uint64_t kMonteCarlo = 0x6d6f6e746563726cULL;
inline constexpr std::uint64_t kBands = 0x62616e6473000000ULL;
}  // namespace rng_stream

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random stream. All draws go through explicit conversions of
// raw mt19937_64 output, so sequences are identical across platforms and
// standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  // Uniform on the open interval (0,1).
  double u01() {
    const std::uint64_t bits = engine_() >> 11;  // 53 random bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Standard normal by inversion; deterministic given the stream.
  double normal() { return normal_quantile(u01()); }

  // Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(u01() * static_cast<double>(n)) % n;
  }

  bool bernoulli(double p) { return u01() < p; }

  // Independent stream identified by (stream label, counter), derived from
  // the master seed only. Safe to call concurrently from fresh copies.
  Rng substream(std::uint64_t stream, std::uint64_t counter) const {
    const std::uint64_t mixed =
        splitmix64(splitmix64(seed_ ^ stream) + 0x9e3779b97f4a7c15ULL * (counter + 1));
    return Rng(mixed);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace iqrtest
