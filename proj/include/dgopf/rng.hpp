// Deterministic random generator used everywhere randomness is needed.
//
// Engine: std::mt19937_64, whose output sequence is fully specified by the
// C++ standard. All variate transforms are written out here (uniform via a
// 53-bit mantissa scale, normal via the inverse-CDF), so identical seeds give
// bit-identical streams on every platform and standard library.
#pragma once

#include <cstdint>
#include <random>

namespace dgopf {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Derives an independent stream from (seed, stream) via splitmix64 mixing.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  /// Uniform on (0, 1); never returns an exact endpoint.
  double uniform() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via the inverse CDF.
  double normal();

  /// Uniform integer in [0, n), n >= 1. Rejection keeps it exactly uniform.
  std::uint64_t uniform_int(std::uint64_t n);

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dgopf
