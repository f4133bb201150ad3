#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "types.hpp"

namespace icsim {

/// Independent random streams derived from one master seed.
enum class SeedPurpose : std::uint64_t {
  Channels = 0x43484e4c,    // "CHNL"
  InitFilters = 0x494e4954,  // "INIT"
  LinkSim = 0x4c494e4b,      // "LINK"
  Probe = 0x50524f42,        // "PROB"
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed: a pure function of its arguments, so trials can run
/// in any order or in parallel and still draw the same numbers.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial,
                                    SeedPurpose purpose, std::uint64_t sub = 0) {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ static_cast<std::uint64_t>(purpose));
  h = mix64(h ^ trial);
  h = mix64(h ^ (sub * 0xd6e8feb86659fd93ULL));
  return h;
}

/// Unit-variance circularly symmetric complex Gaussian draws on top of
/// mt19937_64. Box-Muller is written out so the sequence does not depend on
/// the standard library's distribution implementation.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  double uniform() {  // (0, 1]
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// CN(0, 1): real and imaginary parts each have variance 1/2.
  cplx complex_normal() {
    const double re = normal();
    const double im = normal();
    return {re * std::numbers::sqrt2 / 2.0, im * std::numbers::sqrt2 / 2.0};
  }

  CMatrix complex_normal(int rows, int cols) {
    CMatrix m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = complex_normal();
    return m;
  }

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace icsim
