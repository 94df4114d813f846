#pragma once

// Counter-derived random streams.
//
// Every stochastic quantity in a run is drawn from a stream whose seed is a
// hash of (master seed, purpose tag, counters...). Draws therefore do not
// depend on the order in which the simulator happens to visit workers or
// clients, and two policies evaluated on the same seed see the same client
// training-time noise.
//
// std::mt19937_64 is fully specified by the standard; the std distributions
// are not, so the uniform/normal transforms below are written out to keep
// results identical across standard libraries.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace fedplace {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Folds a list of counters into a single 64-bit stream key.
inline constexpr std::uint64_t derive_seed(std::uint64_t master,
                                           std::initializer_list<std::uint64_t> counters) noexcept {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t c : counters) {
    h = splitmix64(h ^ splitmix64(c + 0x632BE59BD9B4E019ULL));
  }
  return h;
}

// Stream purposes. Values are part of the determinism contract: changing them
// changes every result file.
enum class StreamTag : std::uint64_t {
  kPopulation = 1,
  kCohort = 2,
  kTrainingTime = 3,
  kClientUpdate = 4,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t master, StreamTag tag,
                    std::initializer_list<std::uint64_t> counters = {}) {
    std::uint64_t h = derive_seed(master, {static_cast<std::uint64_t>(tag)});
    for (std::uint64_t c : counters) h = derive_seed(h, {c});
    return Rng(h);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log argument.
  double uniform_open_low() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n) by rejection, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller, one variate per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = uniform_open_low();
    const double u2 = uniform01();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedplace
