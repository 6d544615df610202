#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

namespace prn {

// Deterministic generator. std::mt19937_64's sequence is fixed by the
// standard; the distributions below are written out so results do not depend
// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
  int range(int lo, int hi_inclusive) {
    return lo + static_cast<int>(below(static_cast<std::size_t>(hi_inclusive - lo + 1)));
  }
  bool coin() { return (engine_() >> 63) != 0; }

  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with a stream index so independent streams (per training
// step, per sample) can be derived without carrying generator state around.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace prn
