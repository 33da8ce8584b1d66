#include "dgopf/rng.hpp"

#include "dgopf/special.hpp"

namespace dgopf {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(seed ^ splitmix64(stream)));
}

double Rng::normal() { return norm_ppf(uniform()); }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = eng_();
  while (v >= limit) v = eng_();
  return v % n;
}

}  // namespace dgopf
