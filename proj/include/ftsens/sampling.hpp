#pragma once

#include "ftsens/systems.hpp"

#include <random>

namespace ftsens {

/// Finitely supported point: coordinates -w..w drawn from {0, 1/256, ..., 1}, fill 1/2.
inline HilbertPoint random_shift_point(std::mt19937_64& rng, long long half_width) {
  std::vector<Dyadic> vals;
  for (long long i = -half_width; i <= half_width; ++i) vals.emplace_back(static_cast<long long>(rng() % 257), -8);
  return HilbertPoint(half(), -half_width, vals);
}

inline TorusPoint random_torus_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double a = u(rng);
  return TorusPoint{a, u(rng)};
}

/// Point of the 2^-bits grid: integer matrix iterates of it stay exact in
/// long double while |entries| * 2^bits < 2^64.
inline TorusPoint random_grid_torus_point(std::mt19937_64& rng, int bits = 20) {
  const unsigned long long n = 1ULL << bits;
  double a = std::ldexp(static_cast<double>(rng() % n), -bits);
  return TorusPoint{a, std::ldexp(static_cast<double>(rng() % n), -bits)};
}

/// p - s F: the flow line through p, reached from the past side.
inline TorusPoint stable_orbit_point(const SlowedFlowSystem& sys, double s) {
  return TorusPoint{sys.p[0] - s * sys.F[0], sys.p[1] - s * sys.F[1]};
}

}  // namespace ftsens
