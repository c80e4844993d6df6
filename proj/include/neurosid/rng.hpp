#pragma once

#include <cstdint>
#include <random>

namespace neurosid {

// splitmix64 mix; used to derive independent child seeds so that every
// stochastic decision in a run is a pure function of (base seed, purpose).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

// Hand-rolled distributions: identical streams across standard libraries.
inline double uniform_real(std::mt19937_64& rng, double lo = 0.0,
                           double hi = 1.0) {
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  // Rejection-free modulo bias is negligible for the tiny ranges used here,
  // but do it properly anyway.
  std::uint64_t limit = ~0ULL - (~0ULL % n);
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

inline double gaussian(std::mt19937_64& rng) {
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = uniform_real(rng, -1.0, 1.0);
    v = uniform_real(rng, -1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return u * std::sqrt(-2.0 * std::log(s) / s);
}

}  // namespace neurosid
