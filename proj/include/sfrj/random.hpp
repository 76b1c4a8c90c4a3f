// Portable seeded random streams. std::mt19937_64 output is fixed by the
// standard; the distributions are not, so uniform doubles are built from the
// raw bits here instead of std::uniform_real_distribution.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace sfrj {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class RandomStream {
 public:
  /// Independent stream `stream` of the experiment seeded with `seed`.
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ull))) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    if (hi < lo) throw std::invalid_argument("RandomStream::uniform: hi < lo");
    return lo + (hi - lo) * uniform();
  }

  /// Standard normal by Box-Muller on the stream's own uniforms.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sfrj
